#include "kgrar/llm.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "kgrar/error.hpp"
#include "kgrar/io.hpp"
#include "kgrar/text.hpp"

namespace kgrar::llm {

std::string_view to_string(ChatRole role) noexcept {
  switch (role) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
  }
  return "user";
}

void CompletionRequest::validate() const {
  if (messages.empty()) throw Error(ErrorCode::InvalidArgument, "completion request has no messages");
  for (const auto& m : messages)
    if (m.role != ChatRole::Assistant && text::is_blank(m.content))
      throw Error(ErrorCode::InvalidArgument, std::string(to_string(m.role)) + " message is empty");
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
  if (constrained_choices) {
    std::vector<std::string> sorted = *constrained_choices;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.size() < 2) throw Error(ErrorCode::InvalidArgument, "constrained_choices needs >= 2 distinct entries");
  }
}

std::string flatten_messages(std::span<const ChatMessage> messages) {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i) out.push_back('\n');
    out += messages[i].content;
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP client

HttpLlmClient::HttpLlmClient(HttpLlmOptions options, std::shared_ptr<http::Transport> transport, Sleeper sleeper)
    : options_(std::move(options)),
      transport_(transport ? std::move(transport) : http::default_transport()),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {
  if (options_.retry.max_attempts < 1) options_.retry.max_attempts = 1;
}

std::string HttpLlmClient::request_body(const HttpLlmOptions& options, const CompletionRequest& request) {
  nlohmann::ordered_json body;
  body["model"] = options.model;
  body["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) {
    nlohmann::ordered_json msg;
    msg["role"] = to_string(m.role);
    msg["content"] = m.content;
    body["messages"].push_back(std::move(msg));
  }
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.constrained_choices ? 1 : request.max_tokens;
  if (request.seed) body["seed"] = *request.seed;
  if (request.want_token_logprobs || request.constrained_choices) {
    body["logprobs"] = true;
    body["top_logprobs"] = options.top_logprobs;
  }
  return body.dump();
}

CompletionResponse HttpLlmClient::parse_response(std::string_view raw) {
  auto j = nlohmann::json::parse(raw, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ProviderError, "completion response is not a JSON object");
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    throw Error(ErrorCode::ProviderError, "completion response has no choices");
  const auto& choice = j["choices"][0];
  CompletionResponse out;
  if (choice.contains("message") && choice["message"].contains("content") && choice["message"]["content"].is_string())
    out.text = choice["message"]["content"].get<std::string>();
  else if (choice.contains("text") && choice["text"].is_string())
    out.text = choice["text"].get<std::string>();

  auto add = [&](const std::string& token, const nlohmann::json& lp) {
    if (!lp.is_number()) return;
    double v = lp.get<double>();
    if (!std::isfinite(v)) return;
    if (!out.first_token_logprobs) out.first_token_logprobs.emplace();
    out.first_token_logprobs->emplace(token, std::min(v, 0.0));
  };
  if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
    const auto& lp = choice["logprobs"];
    if (lp.contains("content") && lp["content"].is_array() && !lp["content"].empty()) {
      const auto& first = lp["content"][0];
      if (first.contains("token") && first["token"].is_string() && first.contains("logprob"))
        add(first["token"].get<std::string>(), first["logprob"]);
      if (first.contains("top_logprobs") && first["top_logprobs"].is_array())
        for (const auto& t : first["top_logprobs"])
          if (t.contains("token") && t["token"].is_string() && t.contains("logprob"))
            add(t["token"].get<std::string>(), t["logprob"]);
    } else if (lp.contains("top_logprobs") && lp["top_logprobs"].is_array() && !lp["top_logprobs"].empty() &&
               lp["top_logprobs"][0].is_object()) {
      for (const auto& [token, v] : lp["top_logprobs"][0].items()) add(token, v);
    }
  }
  if (j.contains("model") && j["model"].is_string()) out.provider_meta["model"] = j["model"].get<std::string>();
  if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
    out.provider_meta["finish_reason"] = choice["finish_reason"].get<std::string>();
  return out;
}

CompletionResponse HttpLlmClient::complete(const CompletionRequest& request) {
  request.validate();
  const std::string url = options_.endpoint + "/chat/completions";
  const std::string body = request_body(options_, request);
  http::Headers headers;
  if (!options_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + options_.api_key);

  const auto& policy = options_.retry;
  ErrorCode last_code = ErrorCode::TransportError;
  std::string last_message;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    if (attempt > 1) {
      long long delay = static_cast<long long>(policy.backoff_initial_ms) << std::min(attempt - 2, 20);
      sleeper_(std::chrono::milliseconds(std::min<long long>(delay, policy.backoff_max_ms)));
    }
    try {
      http::Response resp = transport_->post(url, headers, body, policy.timeout_ms);
      if (resp.status >= 200 && resp.status < 300) {
        CompletionResponse out = parse_response(resp.body);
        out.provider_meta["attempts"] = std::to_string(attempt);
        return out;
      }
      if (resp.status == 429) {
        last_code = ErrorCode::RateLimited;
      } else if (resp.status >= 500) {
        last_code = ErrorCode::TransportError;
      } else {
        throw Error(ErrorCode::ProviderError, url + " returned HTTP " + std::to_string(resp.status));
      }
      last_message = url + " returned HTTP " + std::to_string(resp.status);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Timeout && e.code() != ErrorCode::TransportError) throw;
      last_code = e.code();
      last_message = e.what();
    }
  }
  throw Error(last_code, last_message + " (after " + std::to_string(policy.max_attempts) + " attempts)");
}

// ---------------------------------------------------------------------------
// Scripted mock

namespace {

CompletionResponse parse_script_response(const nlohmann::json& r, std::size_t line, std::optional<std::string>& error) {
  auto bad = [&](const std::string& what) {
    return Error(ErrorCode::FormatViolation, "script line " + std::to_string(line) + ": " + what);
  };
  if (!r.is_object()) throw bad("response must be an object");
  CompletionResponse out;
  if (r.contains("text")) {
    if (!r["text"].is_string()) throw bad("response.text must be a string");
    out.text = r["text"].get<std::string>();
  }
  if (r.contains("logprobs")) {
    if (!r["logprobs"].is_object()) throw bad("response.logprobs must be an object");
    TokenLogprobs lp;
    for (const auto& [tok, v] : r["logprobs"].items()) {
      if (!v.is_number() || v.get<double>() > 0.0) throw bad("logprob for '" + tok + "' must be a number <= 0");
      lp.emplace(tok, v.get<double>());
    }
    out.first_token_logprobs = std::move(lp);
  }
  if (r.contains("error")) {
    if (!r["error"].is_string() || !parse_error_code(r["error"].get<std::string>())) throw bad("unknown error code");
    error = r["error"].get<std::string>();
  }
  return out;
}

}  // namespace

ScriptedLlm ScriptedLlm::from_string(std::string_view script) {
  std::vector<ScriptEntry> entries;
  auto lines = io::split_lines(script);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    const std::size_t line = i + 1;
    auto bad = [&](const std::string& what) {
      return Error(ErrorCode::FormatViolation, "script line " + std::to_string(line) + ": " + what);
    };
    auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw bad("not a structured record");
    if (!j.contains("response")) throw bad("missing response");
    ScriptEntry e;
    if (j.contains("matcher")) {
      const auto& m = j["matcher"];
      if (!m.is_object()) throw bad("matcher must be an object");
      if (m.contains("nth")) {
        if (!m["nth"].is_number_unsigned()) throw bad("matcher.nth must be a non-negative integer");
        e.nth = m["nth"].get<std::size_t>();
      }
      if (m.contains("contains")) {
        if (m["contains"].is_string()) {
          e.contains.push_back(m["contains"].get<std::string>());
        } else if (m["contains"].is_array()) {
          for (const auto& s : m["contains"]) {
            if (!s.is_string()) throw bad("matcher.contains entries must be strings");
            e.contains.push_back(s.get<std::string>());
          }
        } else {
          throw bad("matcher.contains must be a string or list of strings");
        }
      }
      if (m.contains("seed")) {
        if (!m["seed"].is_number_unsigned()) throw bad("matcher.seed must be a non-negative integer");
        e.seed = m["seed"].get<std::uint64_t>();
      }
    }
    e.response = parse_script_response(j["response"], line, e.error);
    entries.push_back(std::move(e));
  }
  return ScriptedLlm(std::move(entries));
}

ScriptedLlm ScriptedLlm::from_file(const std::filesystem::path& path) { return from_string(io::read_file(path)); }

void ScriptedLlm::add(ScriptEntry entry) {
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(entry));
}

CompletionResponse ScriptedLlm::complete(const CompletionRequest& request) {
  request.validate();
  const std::string haystack = flatten_messages(request.messages);
  const ScriptEntry* hit = nullptr;
  std::size_t index = 0;
  {
    std::lock_guard lock(mutex_);
    index = log_.size();
    log_.push_back(request);
    auto seed_ok = [&](const ScriptEntry& e) { return !e.seed || (request.seed && *request.seed == *e.seed); };
    auto contains_ok = [&](const ScriptEntry& e) {
      return std::all_of(e.contains.begin(), e.contains.end(),
                         [&](const std::string& s) { return haystack.find(s) != std::string::npos; });
    };
    for (const auto& e : entries_)
      if (e.nth && *e.nth == index && seed_ok(e) && contains_ok(e)) {
        hit = &e;
        break;
      }
    if (!hit)
      for (const auto& e : entries_)
        if (!e.nth && seed_ok(e) && contains_ok(e)) {
          hit = &e;
          break;
        }
  }
  if (!hit) throw Error(ErrorCode::ScriptExhausted, "no script entry matches request #" + std::to_string(index));
  if (hit->error) throw Error(*parse_error_code(*hit->error), "scripted failure for request #" + std::to_string(index));
  CompletionResponse out = hit->response;
  out.provider_meta["script_request"] = std::to_string(index);
  return out;
}

std::vector<CompletionRequest> ScriptedLlm::requests() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::size_t ScriptedLlm::request_count() const {
  std::lock_guard lock(mutex_);
  return log_.size();
}

// ---------------------------------------------------------------------------
// Choice log-probabilities

std::map<std::string, double> merge_choice_logprobs(const TokenLogprobs& distribution,
                                                    std::span<const std::string> choices) {
  std::map<std::string, double> out;
  bool any = false;
  for (const auto& choice : choices) {
    std::vector<double> hits;
    for (const auto& [token, lp] : distribution)
      if (text::iequals(text::trim_view(token), text::trim_view(choice))) hits.push_back(lp);
    if (hits.empty()) continue;
    any = true;
    double m = *std::max_element(hits.begin(), hits.end());
    double sum = 0.0;
    for (double h : hits) sum += std::exp(h - m);
    out[choice] = std::min(0.0, m + std::log(sum));
  }
  if (!any) throw Error(ErrorCode::MissingTokenProbability, "none of the choices appear in the token distribution");
  for (const auto& choice : choices) out.try_emplace(choice, kMissingChoiceFloor);
  return out;
}

ChoiceQuery query_choices(LlmClient& llm, std::span<const ChatMessage> messages, std::span<const std::string> choices,
                          std::optional<std::uint64_t> seed) {
  CompletionRequest req;
  req.messages.assign(messages.begin(), messages.end());
  req.temperature = 0.0;
  req.max_tokens = 1;
  req.want_token_logprobs = true;
  req.constrained_choices = std::vector<std::string>(choices.begin(), choices.end());
  req.seed = seed;
  CompletionResponse resp = llm.complete(req);
  ChoiceQuery out;
  out.text = resp.text;
  if (resp.first_token_logprobs) {
    try {
      out.logprobs = merge_choice_logprobs(*resp.first_token_logprobs, choices);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingTokenProbability) throw;
    }
  }
  return out;
}

std::map<std::string, double> choice_logprobs(LlmClient& llm, std::span<const ChatMessage> messages,
                                              std::span<const std::string> choices) {
  if (choices.size() < 2) throw Error(ErrorCode::InvalidArgument, "choice_logprobs needs at least two choices");
  auto q = query_choices(llm, messages, choices);
  if (!q.logprobs) throw Error(ErrorCode::MissingTokenProbability, "no choice token in the reported distribution");
  return *q.logprobs;
}

}  // namespace kgrar::llm
