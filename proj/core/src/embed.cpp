#include "deepera/embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "deepera/digest.hpp"
#include "deepera/gateway.hpp"

namespace deepera {

using nlohmann::json;

double EmbeddingVector::norm() const {
    double sum = 0.0;
    for (double v : values) sum += v * v;
    return std::sqrt(sum);
}

std::string_view to_string(EmbedProviderKind k) {
    return k == EmbedProviderKind::offline ? "offline" : "http";
}

std::optional<EmbedProviderKind> parse_embed_provider_kind(std::string_view s) {
    if (s == "offline") return EmbedProviderKind::offline;
    if (s == "http") return EmbedProviderKind::http;
    return std::nullopt;
}

void EmbedProviderConfig::validate() const {
    if (kind == EmbedProviderKind::offline) {
        if (dim == 0) throw ConfigError("embedder.dim must be >= 1");
        if (ngram == 0) throw ConfigError("embedder.ngram must be >= 1");
    } else if (endpoint_url.empty()) {
        throw ConfigError("embedder.endpoint_url is required for the http embedder");
    }
}

DimMismatch::DimMismatch(std::size_t expected, std::size_t actual)
    : EmbedError("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                 std::to_string(actual)) {}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw DimMismatch(a.dim(), b.dim());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) throw ZeroVector();
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

EmbeddingVector hashed_ngram_embedding(std::string_view text, std::size_t dim, std::size_t n) {
    std::string norm;
    norm.reserve(text.size() + 2);
    norm.push_back(' ');
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (norm.back() != ' ') norm.push_back(' ');
        } else {
            norm.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (norm.size() == 1) throw EmptyText();
    if (norm.back() != ' ') norm.push_back(' ');

    EmbeddingVector v{std::vector<double>(dim, 0.0)};
    if (norm.size() < n) {
        v.values[fnv1a64(norm) % dim] += 1.0;
    } else {
        for (std::size_t i = 0; i + n <= norm.size(); ++i) {
            v.values[fnv1a64(std::string_view(norm).substr(i, n)) % dim] += 1.0;
        }
    }
    const double len = v.norm();
    for (double& x : v.values) x /= len;
    return v;
}

Embedder::Embedder(EmbedProviderConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::string Embedder::id() const {
    if (cfg_.kind == EmbedProviderKind::offline) {
        return "offline:ngram" + std::to_string(cfg_.ngram) + ":d" + std::to_string(cfg_.dim);
    }
    return "http:" + cfg_.model;
}

EmbeddingVector Embedder::embed(std::string_view text) const {
    if (cfg_.kind == EmbedProviderKind::offline) {
        return hashed_ngram_embedding(text, cfg_.dim, cfg_.ngram);
    }
    std::string t(text);
    return embed_remote(std::span<const std::string>(&t, 1)).front();
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
    if (cfg_.kind == EmbedProviderKind::http) return embed_remote(texts);
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

std::vector<EmbeddingVector> Embedder::embed_remote(std::span<const std::string> texts) const {
    for (const auto& t : texts) {
        if (t.find_first_not_of(" \t\r\n") == std::string::npos) throw EmptyText();
    }
    const char* key = std::getenv(cfg_.api_key_env_var.c_str());
    if (key == nullptr || *key == '\0') {
        throw AuthError("API key environment variable " + cfg_.api_key_env_var + " is not set");
    }
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.endpoint_url, m, re)) {
        throw ConfigError("invalid embedder endpoint_url: " + cfg_.endpoint_url);
    }
    std::string path = m[2].matched ? m[2].str() : std::string();
    while (!path.empty() && path.back() == '/') path.pop_back();

    httplib::Client client(m[1].str());
    const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    const std::string body =
        json{{"model", cfg_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}}
            .dump();
    auto res = client.Post(path + "/embeddings", {{"Authorization", std::string("Bearer ") + key}},
                           body, "application/json");
    if (!res) {
        throw ProviderUnreachable("cannot reach " + cfg_.endpoint_url + ": " +
                                  httplib::to_string(res.error()));
    }
    if (res->status == 401 || res->status == 403) {
        throw AuthError("embedder returned " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) throw ProviderRejected(res->status, res->body);

    std::vector<EmbeddingVector> out;
    try {
        const json parsed = json::parse(res->body);
        const json& data = parsed.at("data");
        if (data.size() != texts.size()) {
            throw ProviderRejected(res->status, "embedding count does not match input count");
        }
        for (const auto& item : data) {
            EmbeddingVector v{item.at("embedding").get<std::vector<double>>()};
            if (v.norm() == 0.0) throw ZeroVector();
            out.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw ProviderRejected(res->status, std::string("unreadable embeddings body: ") + e.what());
    }
    return out;
}

EmbeddingVector embed_text(std::string_view text, const EmbedProviderConfig& provider) {
    return Embedder(provider).embed(text);
}

}  // namespace deepera
