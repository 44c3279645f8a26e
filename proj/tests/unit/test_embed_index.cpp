#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "deepera/embed.hpp"
#include "deepera/gateway.hpp"
#include "deepera/vector_index.hpp"
#include "oracles.hpp"
#include "stub_server.hpp"

using namespace deepera;
namespace fs = std::filesystem;

namespace {

std::string random_words(std::mt19937_64& rng, int words) {
    std::uniform_int_distribution<int> len(4, 9), letter(0, 25);
    std::string out;
    for (int w = 0; w < words; ++w) {
        if (w) out += ' ';
        const int n = len(rng);
        for (int i = 0; i < n; ++i) out += static_cast<char>('a' + letter(rng));
    }
    return out;
}

EmbeddingVector random_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g(0.0, 1.0);
    EmbeddingVector v;
    v.values.resize(dim);
    for (auto& x : v.values) x = g(rng);
    return v;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("deepera_ix_" + name); }

}  // namespace

TEST_CASE("offline embedding basics") {
    const auto a = embed_text("Lymphocytes are white blood cells.", {});
    CHECK(a == embed_text("Lymphocytes are white blood cells.", {}));
    CHECK(a.dim() == 64);
    CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(embed_text("HELLO   world", {}) == embed_text("hello world", {}));
    CHECK_THROWS_AS(embed_text("", {}), EmptyText);
    CHECK_THROWS_AS(embed_text(" \n\t", {}), EmptyText);

    EmbedProviderConfig wide;
    wide.dim = 256;
    CHECK(embed_text("abc", wide).dim() == 256);
    CHECK(Embedder(wide).id() == "offline:ngram3:d256");
}

TEST_CASE("offline embedding: short text still embeds") {
    const auto v = embed_text("a", {});
    CHECK(v.norm() == doctest::Approx(1.0));
}

TEST_CASE("unrelated strings have cosine below 0.9") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 100; ++i) {
        const auto a = embed_text(random_words(rng, 6), {});
        const auto b = embed_text(random_words(rng, 6), {});
        CHECK(cosine_similarity(a, b) < 0.9);
    }
}

TEST_CASE("cosine_similarity") {
    const EmbeddingVector a{{1.0, 0.0}}, b{{0.0, 2.0}}, c{{3.0, 0.0}}, d{{-1.0, 0.0}};
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
    CHECK(cosine_similarity(a, c) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, d) == doctest::Approx(-1.0));
    const EmbeddingVector e{{1.0, 2.0, 2.0}}, f{{2.0, 1.0, 2.0}};
    CHECK(cosine_similarity(e, f) == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_similarity(a, EmbeddingVector{{1.0, 2.0, 3.0}}), DimMismatch);
    CHECK_THROWS_AS(cosine_similarity(a, EmbeddingVector{{0.0, 0.0}}), ZeroVector);
}

TEST_CASE("cosine_similarity: symmetry, scale invariance, bounds") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 500; ++i) {
        const auto a = random_vector(rng, 16);
        auto b = random_vector(rng, 16);
        const double s = cosine_similarity(a, b);
        CHECK(s == cosine_similarity(b, a));
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
        for (auto& x : b.values) x *= 3.5;
        CHECK(cosine_similarity(a, b) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("VectorIndex::add validation") {
    VectorIndex ix(3);
    CHECK_THROWS_AS(ix.add("a", EmbeddingVector{{1.0, 2.0}}), DimMismatch);
    CHECK_THROWS_AS(ix.add("a", EmbeddingVector{{0.0, 0.0, 0.0}}), ZeroVector);
    ix.add("a", EmbeddingVector{{0.0, 3.0, 4.0}});
    CHECK(ix.entries()[0].norm == doctest::Approx(5.0));
}

TEST_CASE("top_k: examples") {
    std::mt19937_64 rng(1);
    VectorIndex ix(8);
    std::vector<EmbeddingVector> vs;
    for (int i = 0; i < 20; ++i) {
        vs.push_back(random_vector(rng, 8));
        ix.add("p" + std::to_string(i), vs.back());
    }
    const auto self = top_k(vs[7], ix, 1);
    REQUIRE(self.ranked.size() == 1);
    CHECK(self.ranked[0].passage_id == "p7");
    CHECK(self.ranked[0].score == doctest::Approx(1.0));

    const auto all = top_k(vs[0], ix, 100);
    CHECK(all.ranked.size() == 20);
    for (std::size_t i = 1; i < all.ranked.size(); ++i) CHECK(all.ranked[i - 1].score >= all.ranked[i].score);

    CHECK_THROWS_AS(top_k(vs[0], VectorIndex(8), 3), EmptyIndex);
    CHECK_THROWS_AS(top_k(EmbeddingVector{{1.0}}, ix, 3), DimMismatch);
    CHECK_THROWS_AS(top_k(vs[0], ix, 0), std::invalid_argument);
}

TEST_CASE("top_k: ties keep insertion order") {
    VectorIndex ix(2);
    ix.add("first", EmbeddingVector{{1.0, 1.0}});
    ix.add("other", EmbeddingVector{{1.0, -1.0}});
    ix.add("second", EmbeddingVector{{2.0, 2.0}});
    ix.add("third", EmbeddingVector{{0.5, 0.5}});
    const auto r = top_k(EmbeddingVector{{1.0, 1.0}}, ix, 3);
    CHECK(r.ranked[0].passage_id == "first");
    CHECK(r.ranked[1].passage_id == "second");
    CHECK(r.ranked[2].passage_id == "third");
}

TEST_CASE("top_k agrees with a full sort") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = trial == 0 ? 200 : std::uniform_int_distribution<std::size_t>(1, 500)(rng);
        const std::size_t k = trial == 0 ? 30 : std::uniform_int_distribution<std::size_t>(1, n + 5)(rng);
        VectorIndex ix(12);
        for (std::size_t i = 0; i < n; ++i) ix.add("p" + std::to_string(i), random_vector(rng, 12));
        const auto q = random_vector(rng, 12);
        const auto got = top_k(q, ix, k).ranked;
        const auto want = oracle::full_sort(q, ix);
        REQUIRE(got.size() == std::min(k, n));
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].passage_id == want[i].passage_id);
            CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
        }
    }
}

TEST_CASE("index persistence: round trips") {
    const auto path = temp_file("empty.deix");
    VectorIndex empty(5);
    save_index(empty, path);
    CHECK(load_index(path) == empty);

    std::mt19937_64 rng(123);
    VectorIndex big(16);
    for (int i = 0; i < 10000; ++i) big.add("passage-" + std::to_string(i), random_vector(rng, 16));
    const auto big_path = temp_file("big.deix");
    save_index(big, big_path);
    const auto back = load_index(big_path);
    REQUIRE(back.size() == big.size());
    for (std::size_t i = 0; i < big.size(); ++i) {
        const auto& a = big.entries()[i].vector.values;
        const auto& b = back.entries()[i].vector.values;
        CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    }
    CHECK(back == big);
}

TEST_CASE("index persistence: corruption") {
    std::mt19937_64 rng(5);
    VectorIndex ix(4);
    for (int i = 0; i < 10; ++i) ix.add("p" + std::to_string(i), random_vector(rng, 4));
    const auto path = temp_file("corrupt.deix");
    save_index(ix, path);
    const auto size = fs::file_size(path);

    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << b;
    };

    write(bytes.substr(0, size - 7));
    CHECK_THROWS_AS(load_index(path), CorruptIndex);
    write(bytes.substr(0, 10));
    CHECK_THROWS_AS(load_index(path), CorruptIndex);

    std::string flipped = bytes;
    flipped[flipped.size() - 3] ^= 0x10;
    write(flipped);
    CHECK_THROWS_AS(load_index(path), CorruptIndex);

    std::string magic = bytes;
    magic[0] = 'X';
    write(magic);
    CHECK_THROWS_AS(load_index(path), CorruptIndex);

    std::string version = bytes;
    version[4] = 9;
    write(version);
    CHECK_THROWS_AS(load_index(path), VersionMismatch);

    CHECK_THROWS_AS(load_index(temp_file("does-not-exist.deix")), IndexIoError);
    CHECK_THROWS_AS(save_index(ix, fs::path("/nonexistent-dir/x.deix")), IndexIoError);
}

TEST_CASE("remote embedder against a stub server") {
    testing::StubServer server(
        [](const httplib::Request&, httplib::Response& res) { res.status = 500; }, 4,
        [](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            nlohmann::json data = nlohmann::json::array();
            for (const auto& text : body.at("input")) {
                const double len = static_cast<double>(text.get<std::string>().size());
                data.push_back({{"embedding", {len, 1.0, 0.0}}});
            }
            res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
        });
    ::setenv("DEEPERA_TEST_KEY", "sk-test", 1);
    EmbedProviderConfig cfg;
    cfg.kind = EmbedProviderKind::http;
    cfg.endpoint_url = server.url();
    cfg.model = "embed-small";
    cfg.api_key_env_var = "DEEPERA_TEST_KEY";
    Embedder e(cfg);
    CHECK(e.embed("abcd").values == std::vector<double>{4.0, 1.0, 0.0});
    const std::vector<std::string> batch = {"a", "bb"};
    const auto vs = e.embed_batch(batch);
    REQUIRE(vs.size() == 2);
    CHECK(vs[1].values[0] == 2.0);
    CHECK(server.hits() == 2);
    CHECK_THROWS_AS(e.embed(""), EmptyText);
}
