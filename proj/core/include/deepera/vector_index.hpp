#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepera/embed.hpp"

namespace deepera {

struct IndexEntry {
    std::string passage_id;
    EmbeddingVector vector;
    double norm = 0.0;

    bool operator==(const IndexEntry&) const = default;
};

// Exact (brute-force) cosine index. Dimension is fixed at construction.
class VectorIndex {
public:
    explicit VectorIndex(std::size_t dim) : dim_(dim) {}

    // Throws DimMismatch or ZeroVector.
    void add(std::string passage_id, EmbeddingVector v);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<IndexEntry>& entries() const { return entries_; }

    bool operator==(const VectorIndex&) const = default;

private:
    std::size_t dim_;
    std::vector<IndexEntry> entries_;
};

struct ScoredId {
    std::string passage_id;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

// Scores non-increasing; equal scores keep index insertion order.
struct RetrievalResult {
    std::vector<ScoredId> ranked;
};

class EmptyIndex : public EmbedError {
public:
    EmptyIndex() : EmbedError("index is empty") {}
};

class IndexIoError : public EmbedError {
    using EmbedError::EmbedError;
};

class VersionMismatch : public EmbedError {
public:
    explicit VersionMismatch(std::uint32_t found);
};

class CorruptIndex : public EmbedError {
    using EmbedError::EmbedError;
};

RetrievalResult top_k(const EmbeddingVector& query, const VectorIndex& index, std::size_t k);

// Binary format, little-endian:
//   "DEIX" | u32 version | u32 dim | u64 count | u64 fnv1a64(payload)
//   payload = count x (u32 id_len | id bytes | dim x f64)
inline constexpr std::uint32_t kIndexFormatVersion = 1;

void save_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace deepera
