#pragma once

// Run configuration (one JSON file) and the providers it describes.
//
//   {
//     "graph_path": "graph.mkg",
//     "embedding":    {"endpoint", "model", "cache_path", "dimension", "timeout_ms"},
//     "reasoner_llm": {"endpoint", "model", "temperature", "timeout_ms", "retries"},
//     "prprm_llm":    {"endpoint", "model", "timeout_ms", "retries"},
//     "solve":   {"n", "max_depth", "padding", "theta", "k", "role", "voting", "seed", "workers"},
//     "tracing": {"enabled", "dir"}
//   }
//
// Every key is optional. Endpoints starting with "mock:" select offline
// providers: "mock:<script>" replays a ScriptedLlm script, "mock:" on the
// embedding endpoint selects the hash embedder. Relative paths resolve
// against the config file's directory.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "kgrar/embedding.hpp"
#include "kgrar/llm.hpp"
#include "kgrar/reason.hpp"

namespace kgrar::config {

inline constexpr std::string_view kApiKeyEnv = "KG_RAR_API_KEY";
inline constexpr std::string_view kMockScheme = "mock:";

struct EmbeddingConfig {
  std::string endpoint = std::string(kMockScheme);
  std::string model;
  std::optional<std::filesystem::path> cache_path;
  std::size_t dimension = embedding::HashEmbeddingProvider::kDefaultDimension;
  int timeout_ms = 30000;
};

struct LlmConfig {
  std::string endpoint;
  std::string model;
  double temperature = 0.0;
  int timeout_ms = 60000;
  int retries = 3;
};

struct TracingConfig {
  bool enabled = false;
  std::filesystem::path dir = "traces";
};

struct Config {
  std::optional<std::filesystem::path> graph_path;
  EmbeddingConfig embedding;
  LlmConfig reasoner_llm = [] {
    LlmConfig c;
    c.temperature = 0.7;
    return c;
  }();
  LlmConfig prprm_llm;
  reason::SolveConfig solve;
  TracingConfig tracing;
};

// Throws ConfigInvalid naming the offending key path. Relative paths are
// resolved against base_dir.
Config parse(std::string_view json_text, const std::filesystem::path& base_dir = {});
// IoFailure when unreadable.
Config load(const std::filesystem::path& path);

// Re-checks the value ranges after command-line overrides.
void validate(const Config& config);

struct ProviderSet {
  std::shared_ptr<llm::LlmClient> reasoner;
  std::shared_ptr<llm::LlmClient> prprm;
  std::unique_ptr<embedding::EmbeddingProvider> embedder;
  std::unique_ptr<embedding::EmbeddingCache> cache;
  std::optional<std::filesystem::path> cache_path;

  reason::Providers view() const;
  // Writes the cache back to cache_path when both are set.
  void save_cache() const;
};

// Identical LLM endpoints share one client. Throws ConfigInvalid when an
// LLM endpoint is missing, plus whatever loading a mock script raises.
ProviderSet make_providers(const Config& config);

// A single client from one LLM section; key_path names it in diagnostics.
std::shared_ptr<llm::LlmClient> make_llm(const LlmConfig& config, std::string_view key_path);

}  // namespace kgrar::config
