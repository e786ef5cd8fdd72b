#include "kgrar/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <json.hpp>

#include "kgrar/http.hpp"
#include "kgrar/io.hpp"
#include "kgrar/text.hpp"

namespace kgrar::embedding {

Embedding::Embedding(std::vector<double> components) : components_(std::move(components)) {
  for (double c : components_)
    if (!std::isfinite(c)) throw Error(ErrorCode::NonFiniteEmbedding, "embedding has a non-finite component");
}

double cosine(const Embedding& a, const Embedding& b) {
  auto x = a.components();
  auto y = b.components();
  if (x.size() != y.size())
    throw Error(ErrorCode::DimensionMismatch,
                "dimensions " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  double dot = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  double c = dot / (std::sqrt(xx) * std::sqrt(yy));
  return std::clamp(c, -1.0, 1.0);
}

std::string normalize_text(std::string_view t) { return text::normalize_whitespace(t); }

// ---------------------------------------------------------------------------

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension == 0) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be positive");
}

std::string HashEmbeddingProvider::id() const {
  return "hash-mock:" + std::to_string(dimension_) + ":" + std::to_string(seed_);
}

Embedding HashEmbeddingProvider::embed(std::string_view t) {
  ++calls_;
  const std::uint64_t base = text::fnv1a64(t) ^ text::splitmix64(seed_);
  std::vector<double> v(dimension_);
  for (std::size_t i = 0; i < dimension_; ++i) {
    std::uint64_t h = text::splitmix64(base + 0x9e3779b97f4a7c15ULL * (i + 1));
    v[i] = static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
  }
  return Embedding(std::move(v));
}

// ---------------------------------------------------------------------------

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingOptions options)
    : options_(std::move(options)), dimension_(options_.dimension) {}

std::string HttpEmbeddingProvider::id() const { return "http:" + options_.endpoint + "#" + options_.model; }

std::size_t HttpEmbeddingProvider::dimension() const {
  std::shared_lock lock(mutex_);
  return dimension_;
}

Embedding HttpEmbeddingProvider::parse_response(std::string_view body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ProviderError, "embedding response is not JSON");
  const nlohmann::json* vec = nullptr;
  if (j.is_object() && j.contains("data") && j["data"].is_array() && !j["data"].empty() &&
      j["data"][0].contains("embedding")) {
    vec = &j["data"][0]["embedding"];
  } else if (j.is_array() && !j.empty() && j[0].is_array()) {
    vec = &j[0];
  } else if (j.is_array()) {
    vec = &j;
  }
  if (!vec || !vec->is_array() || vec->empty()) throw Error(ErrorCode::ProviderError, "no vector in embedding response");
  std::vector<double> out;
  out.reserve(vec->size());
  for (const auto& c : *vec) {
    if (!c.is_number()) throw Error(ErrorCode::ProviderError, "non-numeric embedding component");
    out.push_back(c.get<double>());
  }
  return Embedding(std::move(out));
}

Embedding HttpEmbeddingProvider::embed(std::string_view t) {
  nlohmann::ordered_json req;
  req["model"] = options_.model;
  req["input"] = std::string(t);
  http::Headers headers;
  if (!options_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + options_.api_key);
  auto resp = http::default_transport()->post(options_.endpoint, headers, req.dump(), options_.timeout_ms);
  if (resp.status == 429) throw Error(ErrorCode::RateLimited, options_.endpoint);
  if (resp.status < 200 || resp.status >= 300)
    throw Error(ErrorCode::ProviderError, options_.endpoint + " returned HTTP " + std::to_string(resp.status));
  Embedding e = parse_response(resp.body);
  std::unique_lock lock(mutex_);
  if (dimension_ == 0) dimension_ = e.dimension();
  if (e.dimension() != dimension_)
    throw Error(ErrorCode::DimensionMismatch, "provider returned dimension " + std::to_string(e.dimension()));
  return e;
}

// ---------------------------------------------------------------------------

std::string EmbeddingCache::key(std::string_view provider_id, std::string_view normalized_text) {
  std::string material(provider_id);
  material.push_back('\0');
  material.append(normalized_text);
  return text::hex64(text::fnv1a64(material));
}

std::optional<Embedding> EmbeddingCache::lookup(const std::string& k) const {
  if (!enabled_) return std::nullopt;
  std::shared_lock lock(mutex_);
  auto it = store_.find(k);
  if (it == store_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(const std::string& k, Embedding value) {
  if (!enabled_) return;
  std::unique_lock lock(mutex_);
  store_.insert_or_assign(k, std::move(value));
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return store_.size();
}

std::vector<std::pair<std::string, Embedding>> EmbeddingCache::entries() const {
  std::shared_lock lock(mutex_);
  std::vector<std::pair<std::string, Embedding>> out(store_.begin(), store_.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::string EmbeddingCache::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries()) {
    nlohmann::ordered_json rec;
    rec["key_hash"] = k;
    rec["dim"] = v.dimension();
    rec["components"] = std::vector<double>(v.components().begin(), v.components().end());
    out += rec.dump();
    out += '\n';
  }
  return out;
}

void EmbeddingCache::merge_serialized(std::string_view contents) {
  auto lines = io::split_lines(contents);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    auto where = "cache line " + std::to_string(i + 1);
    auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("key_hash") || !j["key_hash"].is_string() ||
        !j.contains("dim") || !j["dim"].is_number_unsigned() || !j.contains("components") ||
        !j["components"].is_array())
      throw Error(ErrorCode::FormatViolation, where + ": malformed record");
    std::vector<double> comps;
    for (const auto& c : j["components"]) {
      if (!c.is_number()) throw Error(ErrorCode::FormatViolation, where + ": non-numeric component");
      comps.push_back(c.get<double>());
    }
    if (comps.size() != j["dim"].get<std::size_t>())
      throw Error(ErrorCode::FormatViolation, where + ": dim does not match component count");
    try {
      insert(j["key_hash"].get<std::string>(), Embedding(std::move(comps)));
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatViolation, where + ": " + e.what());
    }
  }
}

void EmbeddingCache::save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

void EmbeddingCache::load(const std::filesystem::path& path) { merge_serialized(io::read_file(path)); }

// ---------------------------------------------------------------------------

Embedding embed_cached(std::string_view t, EmbeddingProvider& provider, EmbeddingCache* cache) {
  std::string normalized = normalize_text(t);
  if (!cache || !cache->enabled()) return provider.embed(normalized);
  std::string k = EmbeddingCache::key(provider.id(), normalized);
  if (auto hit = cache->lookup(k)) return *hit;
  Embedding e = provider.embed(normalized);
  cache->insert(k, e);
  return e;
}

std::vector<Embedding> batch_embed(std::span<const std::string> texts, EmbeddingProvider& provider,
                                   EmbeddingCache* cache) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    try {
      out.push_back(embed_cached(t, provider, cache));
    } catch (const Error& e) {
      throw BatchEmbedError(e, out.size());
    }
  }
  return out;
}

}  // namespace kgrar::embedding
