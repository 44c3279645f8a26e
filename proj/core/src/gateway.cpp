#include "deepera/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "deepera/digest.hpp"

namespace deepera {

using nlohmann::json;

namespace {

constexpr std::string_view kRoleNames[] = {"system", "user", "assistant"};
constexpr std::string_view kProviderNames[] = {"http", "mock"};

bool is_transient(int status) { return status == 408 || status == 429 || status >= 500; }

struct Endpoint {
    std::string scheme_host_port;
    std::string base_path;
};

Endpoint split_endpoint(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw ConfigError("invalid endpoint_url: " + url);
    std::string path = m[2].matched ? m[2].str() : std::string();
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {m[1].str(), path};
}

}  // namespace

std::string_view to_string(Role r) { return kRoleNames[static_cast<int>(r)]; }
std::string_view to_string(ProviderKind k) { return kProviderNames[static_cast<int>(k)]; }

std::optional<ProviderKind> parse_provider_kind(std::string_view s) {
    if (s == "http") return ProviderKind::http;
    if (s == "mock") return ProviderKind::mock;
    return std::nullopt;
}

json SchemaSpec::to_json() const {
    static constexpr std::string_view kKinds[] = {"string", "number", "enum", "list"};
    json fields = json::array();
    for (const auto& f : required_fields) {
        fields.push_back(json{{"name", f.name},
                              {"kind", kKinds[static_cast<int>(f.kind)]},
                              {"enum_values", f.enum_values}});
    }
    return fields;
}

std::string_view ChatRequest::final_user_message() const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::user) return it->content;
    }
    return {};
}

void ProviderConfig::validate() const {
    if (kind == ProviderKind::http && endpoint_url.empty()) {
        throw ConfigError("provider.endpoint_url is required for the http provider");
    }
    if (kind == ProviderKind::http) split_endpoint(endpoint_url);
    if (max_retries < 0) throw ConfigError("provider.max_retries must be >= 0");
    if (base_backoff_ms < 0) throw ConfigError("provider.base_backoff_ms must be >= 0");
    if (concurrency_limit < 1) throw ConfigError("provider.concurrency_limit must be >= 1");
    if (timeout_ms < 1) throw ConfigError("provider.timeout_ms must be >= 1");
    for (const auto& [stage, t] : stage_temperature) {
        if (!(t >= 0.0)) throw ConfigError("provider.stage_temperature." + stage + " must be >= 0");
    }
}

ExhaustedRetries::ExhaustedRetries(int last_status, int attempts)
    : GatewayError("provider still failing after " + std::to_string(attempts) +
                   " attempts (last status " + std::to_string(last_status) + ")"),
      last_status_(last_status),
      attempts_(attempts) {}

ProviderRejected::ProviderRejected(int status, const std::string& detail)
    : GatewayError("provider rejected request (status " + std::to_string(status) + "): " + detail),
      status_(status) {}

SchemaParseError::SchemaParseError(std::string raw, const std::string& reason)
    : std::runtime_error("structured output rejected: " + reason), raw_(std::move(raw)) {}

NoFixture::NoFixture(std::string tag)
    : std::logic_error("no mock fixture matches tag '" + tag + "'"), tag_(std::move(tag)) {}

FixtureBook& FixtureBook::add(std::string tag, std::string match_key, std::string content) {
    return add_all(std::move(tag), {std::move(match_key)}, std::move(content));
}

FixtureBook& FixtureBook::add_all(std::string tag, std::vector<std::string> probes,
                                  std::string content) {
    by_tag_[tag].push_back(fixtures_.size());
    fixtures_.push_back({std::move(tag), std::move(probes), std::move(content)});
    return *this;
}

const Fixture* FixtureBook::match(std::string_view tag, std::string_view user_message) const {
    auto it = by_tag_.find(std::string(tag));
    if (it == by_tag_.end()) return nullptr;
    for (std::size_t idx : it->second) {
        const Fixture& f = fixtures_[idx];
        bool all = std::all_of(f.probes.begin(), f.probes.end(), [&](const std::string& p) {
            return user_message.find(p) != std::string_view::npos;
        });
        if (all) return &f;
    }
    return nullptr;
}

json FixtureBook::to_json() const {
    json arr = json::array();
    for (const auto& f : fixtures_) {
        arr.push_back(json{{"tag", f.tag}, {"match", f.probes}, {"content", f.content}});
    }
    return json{{"fixtures", std::move(arr)}};
}

FixtureBook FixtureBook::from_json(const json& j) {
    FixtureBook book;
    for (const auto& f : j.at("fixtures")) {
        std::vector<std::string> probes;
        const json& m = f.at("match");
        if (m.is_string()) {
            probes.push_back(m.get<std::string>());
        } else {
            probes = m.get<std::vector<std::string>>();
        }
        book.add_all(f.at("tag").get<std::string>(), std::move(probes),
                     f.at("content").get<std::string>());
    }
    return book;
}

FixtureBook FixtureBook::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open fixtures file: " + path);
    return from_json(json::parse(in));
}

void FixtureBook::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write fixtures file: " + path);
    out << to_json().dump(1) << '\n';
}

ChatResponse mock_respond(const ChatRequest& req, const FixtureBook& fixtures) {
    const Fixture* f = fixtures.match(req.tag, req.final_user_message());
    if (!f) throw NoFixture(req.tag);
    return ChatResponse{f->content, ProviderKind::mock, false, 0.0};
}

std::string cache_key(const ChatRequest& req, const ProviderConfig& cfg) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back(json::array({to_string(m.role), m.content}));
    json canonical{{"kind", to_string(cfg.kind)},
                   {"model", req.model.empty() ? cfg.model : req.model},
                   {"messages", std::move(messages)},
                   {"temperature", req.temperature},
                   {"schema", req.response_schema ? req.response_schema->to_json() : json(nullptr)}};
    return sha256_hex(canonical.dump());
}

// RAII admission ticket bounding the number of provider calls in flight.
class Gateway::Slot {
public:
    explicit Slot(Gateway& gw) : gw_(gw) {
        std::unique_lock lock(gw_.mu_);
        gw_.admission_cv_.wait(lock, [&] {
            return gw_.in_flight_ < static_cast<std::size_t>(gw_.cfg_.concurrency_limit);
        });
        ++gw_.in_flight_;
        gw_.stats_.peak_in_flight = std::max(gw_.stats_.peak_in_flight, gw_.in_flight_);
    }
    ~Slot() {
        {
            std::lock_guard lock(gw_.mu_);
            --gw_.in_flight_;
        }
        gw_.admission_cv_.notify_one();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

private:
    Gateway& gw_;
};

Gateway::Gateway(ProviderConfig cfg, FixtureBook fixtures)
    : cfg_(std::move(cfg)), fixtures_(std::move(fixtures)) {
    cfg_.validate();
    if (cfg_.kind == ProviderKind::mock && fixtures_.empty() && !cfg_.fixtures_path.empty()) {
        fixtures_ = FixtureBook::load(cfg_.fixtures_path);
    }
    if (!cfg_.cache_dir.empty()) std::filesystem::create_directories(cfg_.cache_dir);
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

void Gateway::reset_stats() {
    std::lock_guard lock(mu_);
    stats_ = GatewayStats{};
}

ChatResponse Gateway::complete_chat(const ChatRequest& req) {
    if (req.messages.empty()) throw std::invalid_argument("ChatRequest.messages is empty");
    if (auto it = cfg_.stage_temperature.find(req.tag);
        it != cfg_.stage_temperature.end() && it->second != req.temperature) {
        ChatRequest staged = req;
        staged.temperature = it->second;
        return complete_chat(staged);
    }
    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    };
    {
        std::lock_guard lock(mu_);
        ++stats_.requests;
        ++stats_.calls_by_tag[req.tag];
    }

    std::string key;
    if (!cfg_.cache_dir.empty()) {
        key = cache_key(req, cfg_);
        if (auto hit = cache_read(key)) {
            std::lock_guard lock(mu_);
            ++stats_.cache_hits;
            return ChatResponse{std::move(*hit), cfg_.kind, true, elapsed_ms()};
        }
    }

    std::string content;
    {
        Slot slot(*this);
        content = call_provider(req);
    }
    if (!key.empty()) cache_write(key, content);
    return ChatResponse{std::move(content), cfg_.kind, false, elapsed_ms()};
}

FieldMap Gateway::complete_structured(const ChatRequest& req, const SchemaSpec& schema) {
    if (!req.response_schema || !(*req.response_schema == schema)) {
        throw std::invalid_argument("complete_structured: request schema does not match");
    }
    return parse_structured(complete_chat(req).content, schema);
}

std::string Gateway::call_provider(const ChatRequest& req) {
    if (cfg_.kind == ProviderKind::mock) {
        {
            std::lock_guard lock(mu_);
            ++stats_.network_calls;
        }
        return mock_respond(req, fixtures_).content;
    }
    return call_http(req);
}

std::string Gateway::call_http(const ChatRequest& req) {
    const char* key = std::getenv(cfg_.api_key_env_var.c_str());
    if (key == nullptr || *key == '\0') {
        throw AuthError("API key environment variable " + cfg_.api_key_env_var + " is not set");
    }
    const Endpoint ep = split_endpoint(cfg_.endpoint_url);

    json messages = json::array();
    for (const auto& m : req.messages) {
        messages.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});
    }
    const std::string body = json{{"model", req.model.empty() ? cfg_.model : req.model},
                                  {"messages", std::move(messages)},
                                  {"temperature", req.temperature}}
                                 .dump();
    const httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};

    int last_status = 0;
    bool last_was_network = false;
    std::string last_network_error;
    const int attempts = cfg_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            const auto delay = std::chrono::milliseconds(
                static_cast<long long>(cfg_.base_backoff_ms) << (attempt - 1));
            std::this_thread::sleep_for(delay);
        }
        {
            std::lock_guard lock(mu_);
            ++stats_.network_calls;
        }

        httplib::Client client(ep.scheme_host_port);
        const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        auto res = client.Post(ep.base_path + "/chat/completions", headers, body, "application/json");
        if (!res) {
            last_was_network = true;
            last_network_error = httplib::to_string(res.error());
            continue;
        }
        last_was_network = false;
        last_status = res->status;
        if (res->status == 401 || res->status == 403) {
            throw AuthError("provider returned " + std::to_string(res->status));
        }
        if (res->status >= 200 && res->status < 300) {
            try {
                json parsed = json::parse(res->body);
                return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const json::exception& e) {
                throw ProviderRejected(res->status, std::string("unreadable response body: ") + e.what());
            }
        }
        if (!is_transient(res->status)) throw ProviderRejected(res->status, res->body);
    }
    if (last_was_network) {
        throw ProviderUnreachable("cannot reach " + cfg_.endpoint_url + ": " + last_network_error);
    }
    throw ExhaustedRetries(last_status, attempts);
}

std::optional<std::string> Gateway::cache_read(const std::string& key) const {
    std::ifstream in(cfg_.cache_dir / key, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

void Gateway::cache_write(const std::string& key, const std::string& content) const {
    static std::atomic<std::uint64_t> counter{0};
    const auto final_path = cfg_.cache_dir / key;
    if (std::filesystem::exists(final_path)) return;
    const auto tmp = cfg_.cache_dir /
                     (key + ".tmp." +
                      std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
                      std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) return;
        out << content;
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            return;
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) std::filesystem::remove(tmp, ec);
}

}  // namespace deepera
