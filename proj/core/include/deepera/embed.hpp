#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deepera {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    double norm() const;

    bool operator==(const EmbeddingVector&) const = default;
};

enum class EmbedProviderKind { offline, http };

std::string_view to_string(EmbedProviderKind k);
std::optional<EmbedProviderKind> parse_embed_provider_kind(std::string_view s);

struct EmbedProviderConfig {
    EmbedProviderKind kind = EmbedProviderKind::offline;
    std::size_t dim = 64;     // offline only; remote vectors carry their own dimension
    std::size_t ngram = 3;    // offline only
    std::string endpoint_url;
    std::string model;
    std::string api_key_env_var = "DEEPERA_API_KEY";
    int timeout_ms = 60000;

    void validate() const;  // throws ConfigError
};

class EmbedError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class EmptyText : public EmbedError {
public:
    EmptyText() : EmbedError("cannot embed empty text") {}
};

class DimMismatch : public EmbedError {
public:
    DimMismatch(std::size_t expected, std::size_t actual);
};

class ZeroVector : public EmbedError {
public:
    ZeroVector() : EmbedError("zero vector has no direction") {}
};

// Throws DimMismatch or ZeroVector. Result is clamped to [-1, 1].
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Offline provider: hashed character n-gram counts, L2-normalized. Text is
// lowercased (ASCII) and whitespace-collapsed before n-gram extraction.
EmbeddingVector hashed_ngram_embedding(std::string_view text, std::size_t dim, std::size_t n);

class Embedder {
public:
    explicit Embedder(EmbedProviderConfig cfg = {});

    EmbeddingVector embed(std::string_view text) const;
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;

    const EmbedProviderConfig& config() const { return cfg_; }
    // Provider identity for report provenance, e.g. "offline:ngram3:d64".
    std::string id() const;

private:
    std::vector<EmbeddingVector> embed_remote(std::span<const std::string> texts) const;

    EmbedProviderConfig cfg_;
};

EmbeddingVector embed_text(std::string_view text, const EmbedProviderConfig& provider);

}  // namespace deepera
