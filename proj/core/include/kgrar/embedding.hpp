#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgrar/error.hpp"

namespace kgrar::embedding {

// Dense vector; components are finite.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<double> components);  // throws NonFiniteEmbedding

  std::span<const double> components() const noexcept { return components_; }
  std::size_t dimension() const noexcept { return components_.size(); }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<double> components_;
};

// <a,b> / (|a| |b|), clamped to [-1, 1]. Throws DimensionMismatch or ZeroVector.
// Evaluated in index order so cosine(a, b) == cosine(b, a) bit for bit.
double cosine(const Embedding& a, const Embedding& b);

// Trim plus collapse whitespace runs; applied before hashing and embedding.
std::string normalize_text(std::string_view text);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Stable identity, part of the cache key.
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  // Must be deterministic for a given provider instance.
  virtual Embedding embed(std::string_view text) = 0;
};

// Seeded, hash-derived vectors. Components are uniform in [-1, 1).
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDimension = 64;

  explicit HashEmbeddingProvider(std::size_t dimension = kDefaultDimension, std::uint64_t seed = 0);

  std::string id() const override;
  std::size_t dimension() const override { return dimension_; }
  Embedding embed(std::string_view text) override;

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpEmbeddingOptions {
  std::string endpoint;  // full URL, e.g. http://localhost:8080/v1/embeddings
  std::string model;
  std::string api_key;   // bearer token; empty sends no auth header
  int timeout_ms = 30000;
  std::size_t dimension = 0;  // 0: learned from the first response
};

// Posts {"model", "input"}; accepts either an embeddings-API envelope
// ({"data":[{"embedding":[...]}]}) or a bare vector list.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingOptions options);

  std::string id() const override;
  std::size_t dimension() const override;
  Embedding embed(std::string_view text) override;

  static Embedding parse_response(std::string_view body);  // throws ProviderError

 private:
  HttpEmbeddingOptions options_;
  mutable std::shared_mutex mutex_;
  std::size_t dimension_;
};

// Content-addressed store keyed by hash(provider id, normalized text).
// Safe for concurrent lookups and inserts.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(bool enabled = true) : enabled_(enabled) {}

  static std::string key(std::string_view provider_id, std::string_view normalized_text);

  bool enabled() const noexcept { return enabled_; }
  std::optional<Embedding> lookup(const std::string& key) const;
  void insert(const std::string& key, Embedding value);
  std::size_t size() const;

  // Line records {key_hash, dim, components}, sorted by key.
  std::string serialize() const;
  void merge_serialized(std::string_view contents);  // throws FormatViolation
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  // Snapshot of all entries, for coherence checks.
  std::vector<std::pair<std::string, Embedding>> entries() const;

 private:
  bool enabled_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Embedding> store_;
};

// Cache hit returns the stored vector; miss embeds the normalized text and
// stores it. `cache` may be null.
Embedding embed_cached(std::string_view text, EmbeddingProvider& provider, EmbeddingCache* cache);

// Thrown by batch_embed: the first provider failure, plus how many inputs
// had completed before it.
class BatchEmbedError : public Error {
 public:
  BatchEmbedError(const Error& cause, std::size_t completed)
      : Error(cause.code(), std::string("batch aborted after ") + std::to_string(completed) +
                                " embeddings: " + cause.what()),
        completed_(completed) {}

  std::size_t completed() const noexcept { return completed_; }

 private:
  std::size_t completed_;
};

std::vector<Embedding> batch_embed(std::span<const std::string> texts, EmbeddingProvider& provider,
                                   EmbeddingCache* cache);

}  // namespace kgrar::embedding
