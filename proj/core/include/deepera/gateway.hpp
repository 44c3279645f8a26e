#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace deepera {

enum class Role { system, user, assistant };
enum class ProviderKind { http, mock };

std::string_view to_string(Role r);
std::string_view to_string(ProviderKind k);
std::optional<ProviderKind> parse_provider_kind(std::string_view s);

struct Message {
    Role role = Role::user;
    std::string content;

    bool operator==(const Message&) const = default;
};

enum class FieldKind { string, number, enumeration, list };

struct SchemaField {
    std::string name;
    FieldKind kind = FieldKind::string;
    std::vector<std::string> enum_values;  // only for FieldKind::enumeration

    bool operator==(const SchemaField&) const = default;
};

struct SchemaSpec {
    std::vector<SchemaField> required_fields;

    nlohmann::json to_json() const;
    bool operator==(const SchemaSpec&) const = default;
};

struct ChatRequest {
    std::string model;  // empty: use the provider's configured model
    std::vector<Message> messages;
    double temperature = 0.0;
    std::optional<SchemaSpec> response_schema;
    std::string tag;  // pipeline stage ("intent", "score", ...); not part of the cache key

    // Content of the last user message, or empty.
    std::string_view final_user_message() const;
};

struct ChatResponse {
    std::string content;
    ProviderKind provider = ProviderKind::mock;
    bool cached = false;
    double latency_ms = 0.0;
};

struct ProviderConfig {
    ProviderKind kind = ProviderKind::mock;
    std::string endpoint_url;  // e.g. https://api.example.com/v1
    std::string model = "mock";
    std::string api_key_env_var = "DEEPERA_API_KEY";
    int max_retries = 3;
    int base_backoff_ms = 500;
    int concurrency_limit = 8;
    int timeout_ms = 60000;
    std::filesystem::path cache_dir;  // empty disables the response cache
    std::string fixtures_path;        // mock only: FixtureBook JSON file
    std::map<std::string, double> stage_temperature;  // per-tag override of the request temperature

    // Throws ConfigError.
    void validate() const;
};

using FieldMap = std::map<std::string, nlohmann::json>;

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class GatewayError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 401/403 from the provider, or a missing API key. Never retried.
class AuthError : public GatewayError {
    using GatewayError::GatewayError;
};

class ExhaustedRetries : public GatewayError {
public:
    ExhaustedRetries(int last_status, int attempts);
    int last_status() const { return last_status_; }
    int attempts() const { return attempts_; }

private:
    int last_status_;
    int attempts_;
};

class ProviderUnreachable : public GatewayError {
    using GatewayError::GatewayError;
};

// Non-retryable client error other than auth (e.g. 400), or an unreadable body.
class ProviderRejected : public GatewayError {
public:
    ProviderRejected(int status, const std::string& detail);
    int status() const { return status_; }

private:
    int status_;
};

class SchemaParseError : public std::runtime_error {
public:
    SchemaParseError(std::string raw, const std::string& reason);
    const std::string& raw_content() const { return raw_; }

private:
    std::string raw_;
};

// The mock provider has no scripted answer for a request. Always a test bug.
class NoFixture : public std::logic_error {
public:
    explicit NoFixture(std::string tag);
    const std::string& tag() const { return tag_; }

private:
    std::string tag_;
};

struct Fixture {
    std::string tag;
    std::vector<std::string> probes;  // all must occur in the final user message
    std::string content;
};

// Scripted responses for the mock provider, matched in registration order.
class FixtureBook {
public:
    FixtureBook& add(std::string tag, std::string match_key, std::string content);
    FixtureBook& add_all(std::string tag, std::vector<std::string> probes, std::string content);

    const Fixture* match(std::string_view tag, std::string_view user_message) const;

    std::size_t size() const { return fixtures_.size(); }
    bool empty() const { return fixtures_.empty(); }
    const std::vector<Fixture>& fixtures() const { return fixtures_; }

    nlohmann::json to_json() const;
    static FixtureBook from_json(const nlohmann::json& j);
    static FixtureBook load(const std::string& path);
    void save(const std::string& path) const;

private:
    std::vector<Fixture> fixtures_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_tag_;
};

ChatResponse mock_respond(const ChatRequest& req, const FixtureBook& fixtures);

// SHA-256 over (kind, model, messages, temperature, schema).
std::string cache_key(const ChatRequest& req, const ProviderConfig& cfg);

// Parses model output as a JSON object carrying every required field with
// the right kind. On a failed first parse, strips code fences and retries on
// the first balanced {...} block. Throws SchemaParseError.
FieldMap parse_structured(std::string_view content, const SchemaSpec& schema);

struct GatewayStats {
    std::size_t requests = 0;       // complete_chat calls
    std::size_t network_calls = 0;  // provider attempts, including retries
    std::size_t cache_hits = 0;
    std::size_t peak_in_flight = 0;
    std::map<std::string, std::size_t> calls_by_tag;
};

class Gateway {
public:
    explicit Gateway(ProviderConfig cfg, FixtureBook fixtures = {});

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    ChatResponse complete_chat(const ChatRequest& req);
    FieldMap complete_structured(const ChatRequest& req, const SchemaSpec& schema);

    const ProviderConfig& config() const { return cfg_; }
    const FixtureBook& fixtures() const { return fixtures_; }
    GatewayStats stats() const;
    void reset_stats();

private:
    class Slot;

    std::string call_provider(const ChatRequest& req);
    std::string call_http(const ChatRequest& req);
    std::optional<std::string> cache_read(const std::string& key) const;
    void cache_write(const std::string& key, const std::string& content) const;

    ProviderConfig cfg_;
    FixtureBook fixtures_;

    mutable std::mutex mu_;
    std::condition_variable admission_cv_;
    std::size_t in_flight_ = 0;
    GatewayStats stats_;
};

}  // namespace deepera
