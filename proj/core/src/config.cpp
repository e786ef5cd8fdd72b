#include "kgrar/config.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>

#include <json.hpp>

#include "kgrar/error.hpp"
#include "kgrar/io.hpp"
#include "kgrar/text.hpp"

namespace kgrar::config {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& path, const std::string& why) {
  throw Error(ErrorCode::ConfigInvalid, path + ": " + why);
}

std::string join(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

// Object reader that remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_.empty() ? "(root)" : path_, "expected an object");
  }

  const json* get(std::string_view key) {
    known_.insert(std::string(key));
    auto it = j_.find(std::string(key));
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(std::string_view key) const { return join(path_, key); }

  void string(std::string_view key, std::string& out) {
    if (const json* v = get(key)) {
      if (!v->is_string()) invalid(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <class Int>
  void integer(std::string_view key, Int& out, long long min_value) {
    if (const json* v = get(key)) {
      if (!v->is_number_integer()) invalid(path(key), "expected an integer");
      if (v->is_number_unsigned()) {
        auto u = v->get<unsigned long long>();
        if (u > static_cast<unsigned long long>(std::numeric_limits<Int>::max())) invalid(path(key), "out of range");
        out = static_cast<Int>(u);
        if (static_cast<long long>(out) < min_value) invalid(path(key), "must be at least " + std::to_string(min_value));
        return;
      }
      auto s = v->get<long long>();
      if (s < min_value) invalid(path(key), "must be at least " + std::to_string(min_value));
      out = static_cast<Int>(s);
    }
  }

  void number(std::string_view key, double& out) {
    if (const json* v = get(key)) {
      if (!v->is_number()) invalid(path(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) invalid(path(key), "must be finite");
    }
  }

  void boolean(std::string_view key, bool& out) {
    if (const json* v = get(key)) {
      if (!v->is_boolean()) invalid(path(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known_.contains(it.key())) invalid(path(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

std::string resolve_endpoint(const std::filesystem::path& base, const std::string& endpoint) {
  if (!endpoint.starts_with(kMockScheme)) return endpoint;
  std::string rest = endpoint.substr(kMockScheme.size());
  if (rest.empty()) return endpoint;
  return std::string(kMockScheme) + resolve(base, rest).string();
}

void read_llm(const json* v, const std::string& path, LlmConfig& out, const std::filesystem::path& base,
              bool has_temperature) {
  if (!v) return;
  Section s(*v, path);
  s.string("endpoint", out.endpoint);
  out.endpoint = resolve_endpoint(base, out.endpoint);
  s.string("model", out.model);
  if (has_temperature) s.number("temperature", out.temperature);
  s.integer("timeout_ms", out.timeout_ms, 1);
  s.integer("retries", out.retries, 1);
  s.finish();
}

}  // namespace

Config parse(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    invalid("(root)", std::string("not valid JSON: ") + e.what());
  }

  Config c;
  Section top(root, "");

  if (const json* v = top.get("graph_path")) {
    if (!v->is_string()) invalid("graph_path", "expected a string");
    c.graph_path = resolve(base_dir, v->get<std::string>());
  }

  if (const json* v = top.get("embedding")) {
    Section s(*v, "embedding");
    s.string("endpoint", c.embedding.endpoint);
    s.string("model", c.embedding.model);
    if (const json* p = s.get("cache_path")) {
      if (p->is_null()) c.embedding.cache_path.reset();
      else if (p->is_string()) c.embedding.cache_path = resolve(base_dir, p->get<std::string>());
      else invalid("embedding.cache_path", "expected a string");
    }
    s.integer("dimension", c.embedding.dimension, 1);
    s.integer("timeout_ms", c.embedding.timeout_ms, 1);
    s.finish();
  }

  read_llm(top.get("reasoner_llm"), "reasoner_llm", c.reasoner_llm, base_dir, true);
  read_llm(top.get("prprm_llm"), "prprm_llm", c.prprm_llm, base_dir, false);

  if (const json* v = top.get("solve")) {
    Section s(*v, "solve");
    s.integer("n", c.solve.n, 1);
    s.integer("max_depth", c.solve.max_depth, 1);
    s.integer("padding", c.solve.padding, 1);
    s.number("theta", c.solve.theta);
    s.integer("k", c.solve.k, 1);
    s.integer("seed", c.solve.seed, 0);
    s.integer("workers", c.solve.workers, 1);
    std::string role, voting;
    s.string("role", role);
    if (!role.empty()) {
      auto r = prprm::parse_role(role);
      if (!r) invalid("solve.role", "unknown role '" + role + "'");
      c.solve.role = *r;
    }
    s.string("voting", voting);
    if (!voting.empty()) {
      auto vs = reason::parse_voting(voting);
      if (!vs) invalid("solve.voting", "unknown strategy '" + voting + "'");
      c.solve.voting = *vs;
    }
    s.finish();
  }

  if (const json* v = top.get("tracing")) {
    Section s(*v, "tracing");
    s.boolean("enabled", c.tracing.enabled);
    std::string dir;
    s.string("dir", dir);
    if (!dir.empty()) c.tracing.dir = dir;
    s.finish();
  }
  c.tracing.dir = resolve(base_dir, c.tracing.dir.string());

  top.finish();
  c.solve.temperature = c.reasoner_llm.temperature;
  validate(c);
  return c;
}

Config load(const std::filesystem::path& path) {
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse(io::read_file(path), base);
}

void validate(const Config& c) {
  if (!(c.solve.theta > 0.0 && c.solve.theta < 1.0)) invalid("solve.theta", "must lie strictly between 0 and 1");
  if (c.reasoner_llm.temperature < 0.0) invalid("reasoner_llm.temperature", "must be non-negative");
  c.solve.validate();
}

// ---------------------------------------------------------------------------

reason::Providers ProviderSet::view() const {
  return reason::Providers{*reasoner, *prprm, *embedder, cache.get()};
}

void ProviderSet::save_cache() const {
  if (cache && cache_path) cache->save(*cache_path);
}

namespace {

std::string api_key() {
  const char* v = std::getenv(std::string(kApiKeyEnv).c_str());
  return v ? v : "";
}

}  // namespace

std::shared_ptr<llm::LlmClient> make_llm(const LlmConfig& config, std::string_view key_path) {
  if (text::is_blank(config.endpoint)) invalid(std::string(key_path) + ".endpoint", "required");
  if (config.endpoint.starts_with(kMockScheme)) {
    std::string script = config.endpoint.substr(kMockScheme.size());
    if (script.empty()) invalid(std::string(key_path) + ".endpoint", "mock endpoint needs a script path");
    return std::make_shared<llm::ScriptedLlm>(llm::ScriptedLlm::from_file(script));
  }
  llm::HttpLlmOptions o;
  o.endpoint = config.endpoint;
  o.model = config.model;
  o.api_key = api_key();
  o.retry.max_attempts = config.retries;
  o.retry.timeout_ms = config.timeout_ms;
  return std::make_shared<llm::HttpLlmClient>(std::move(o));
}

ProviderSet make_providers(const Config& config) {
  ProviderSet set;
  set.prprm = make_llm(config.prprm_llm, "prprm_llm");
  if (config.reasoner_llm.endpoint == config.prprm_llm.endpoint) set.reasoner = set.prprm;
  else set.reasoner = make_llm(config.reasoner_llm, "reasoner_llm");

  const auto& e = config.embedding;
  if (e.endpoint.starts_with(kMockScheme)) {
    std::uint64_t seed = 0;
    std::string rest = e.endpoint.substr(kMockScheme.size());
    if (!rest.empty()) {
      char* end = nullptr;
      seed = std::strtoull(rest.c_str(), &end, 10);
      if (*end != '\0') invalid("embedding.endpoint", "mock embedder takes an optional integer seed");
    }
    set.embedder = std::make_unique<embedding::HashEmbeddingProvider>(e.dimension, seed);
  } else {
    embedding::HttpEmbeddingOptions o;
    o.endpoint = e.endpoint;
    o.model = e.model;
    o.api_key = api_key();
    o.timeout_ms = e.timeout_ms;
    o.dimension = 0;
    set.embedder = std::make_unique<embedding::HttpEmbeddingProvider>(std::move(o));
  }

  set.cache = std::make_unique<embedding::EmbeddingCache>(true);
  set.cache_path = e.cache_path;
  if (e.cache_path && std::filesystem::exists(*e.cache_path)) set.cache->load(*e.cache_path);
  return set;
}

}  // namespace kgrar::config
