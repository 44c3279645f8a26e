#include "deepera/vector_index.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "deepera/digest.hpp"

namespace deepera {

namespace {

constexpr char kMagic[4] = {'D', 'E', 'I', 'X'};
constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8 + 8;

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFF));
    }
}

template <typename T>
T get_le(std::span<const std::byte> in, std::size_t& pos) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    if (pos + sizeof(U) > in.size()) throw CorruptIndex("index file truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bits |= static_cast<U>(std::to_integer<unsigned>(in[pos + i])) << (8 * i);
    }
    pos += sizeof(U);
    return std::bit_cast<T>(bits);
}

}  // namespace

VersionMismatch::VersionMismatch(std::uint32_t found)
    : EmbedError("index format version " + std::to_string(found) + " is not supported (expected " +
                 std::to_string(kIndexFormatVersion) + ")") {}

void VectorIndex::add(std::string passage_id, EmbeddingVector v) {
    if (v.dim() != dim_) throw DimMismatch(dim_, v.dim());
    const double n = v.norm();
    if (n == 0.0) throw ZeroVector();
    entries_.push_back({std::move(passage_id), std::move(v), n});
}

RetrievalResult top_k(const EmbeddingVector& query, const VectorIndex& index, std::size_t k) {
    if (k < 1) throw std::invalid_argument("top_k: k must be >= 1");
    if (index.empty()) throw EmptyIndex();
    if (query.dim() != index.dim()) throw DimMismatch(index.dim(), query.dim());
    const double qn = query.norm();
    if (qn == 0.0) throw ZeroVector();

    const auto& entries = index.entries();
    std::vector<double> scores(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& v = entries[i].vector.values;
        double dot = 0.0;
        for (std::size_t d = 0; d < v.size(); ++d) dot += query.values[d] * v[d];
        scores[i] = std::clamp(dot / (qn * entries[i].norm), -1.0, 1.0);
    }

    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min(k, order.size());
    // Total order (score desc, insertion asc) keeps ties stable.
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });

    RetrievalResult result;
    result.ranked.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        result.ranked.push_back({entries[order[i]].passage_id, scores[order[i]]});
    }
    return result;
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
    std::vector<std::byte> payload;
    for (const auto& e : index.entries()) {
        put_le(payload, static_cast<std::uint32_t>(e.passage_id.size()));
        const auto* id = reinterpret_cast<const std::byte*>(e.passage_id.data());
        payload.insert(payload.end(), id, id + e.passage_id.size());
        for (double v : e.vector.values) put_le(payload, v);
    }

    std::vector<std::byte> header;
    for (char c : kMagic) header.push_back(static_cast<std::byte>(c));
    put_le(header, kIndexFormatVersion);
    put_le(header, static_cast<std::uint32_t>(index.dim()));
    put_le(header, static_cast<std::uint64_t>(index.size()));
    put_le(header, fnv1a64(std::span<const std::byte>(payload)));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IndexIoError("cannot write index: " + path.string());
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IndexIoError("write failed: " + path.string());
}

VectorIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IndexIoError("cannot open index: " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::span<const std::byte> bytes(reinterpret_cast<const std::byte*>(raw.data()), raw.size());

    if (bytes.size() < kHeaderSize) throw CorruptIndex("index file truncated (no header)");
    if (std::memcmp(raw.data(), kMagic, 4) != 0) throw CorruptIndex("bad magic; not a DEIX index");
    std::size_t pos = 4;
    const auto version = get_le<std::uint32_t>(bytes, pos);
    if (version != kIndexFormatVersion) throw VersionMismatch(version);
    const auto dim = get_le<std::uint32_t>(bytes, pos);
    const auto count = get_le<std::uint64_t>(bytes, pos);
    const auto checksum = get_le<std::uint64_t>(bytes, pos);
    if (fnv1a64(bytes.subspan(kHeaderSize)) != checksum) throw CorruptIndex("checksum mismatch");

    VectorIndex index(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto id_len = get_le<std::uint32_t>(bytes, pos);
        if (pos + id_len > bytes.size()) throw CorruptIndex("index file truncated");
        std::string id(raw.data() + pos, id_len);
        pos += id_len;
        EmbeddingVector v{std::vector<double>(dim)};
        for (auto& x : v.values) x = get_le<double>(bytes, pos);
        try {
            index.add(std::move(id), std::move(v));
        } catch (const ZeroVector&) {
            throw CorruptIndex("zero vector in index record " + std::to_string(i));
        }
    }
    if (pos != bytes.size()) throw CorruptIndex("trailing bytes after last record");
    return index;
}

}  // namespace deepera
