#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "deepera/gateway.hpp"
#include "stub_server.hpp"

using namespace deepera;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

ChatRequest user_request(std::string text, std::string tag = "intent") {
    ChatRequest r;
    r.messages = {{Role::system, "sys"}, {Role::user, std::move(text)}};
    r.tag = std::move(tag);
    return r;
}

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("deepera_gw_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ProviderConfig http_config(const testing::StubServer& server) {
    ::setenv("DEEPERA_TEST_KEY", "sk-test", 1);
    ProviderConfig cfg;
    cfg.kind = ProviderKind::http;
    cfg.endpoint_url = server.url();
    cfg.api_key_env_var = "DEEPERA_TEST_KEY";
    cfg.base_backoff_ms = 1;
    cfg.timeout_ms = 5000;
    return cfg;
}

const SchemaSpec kIntentSchema{{{"topic", FieldKind::string, {}},
                                {"entity_type", FieldKind::string, {}},
                                {"intent", FieldKind::string, {}},
                                {"expected_answer_type", FieldKind::string, {}}}};

}  // namespace

TEST_CASE("mock provider: fixture verbatim, then cached") {
    FixtureBook book;
    book.add("intent", "lymphocytes", R"({"topic":"immunology"})");
    ProviderConfig cfg;
    cfg.cache_dir = fresh_dir("mock_cache");
    Gateway gw(cfg, book);

    const auto req = user_request("What are the two types of lymphocytes?");
    const auto first = gw.complete_chat(req);
    CHECK(first.content == R"({"topic":"immunology"})");
    CHECK_FALSE(first.cached);
    const auto second = gw.complete_chat(req);
    CHECK(second.content == first.content);
    CHECK(second.cached);
    CHECK(gw.stats().network_calls == 1);
    CHECK(gw.stats().cache_hits == 1);
}

TEST_CASE("mock_respond: matching rules") {
    FixtureBook book;
    book.add("score", "p7", "0.95");
    book.add("score", "p7", "0.10");
    book.add_all("score", {"p8", "## Attempt: 2"}, "0.3");
    CHECK(mock_respond(user_request("passage p7", "score"), book).content == "0.95");
    CHECK_THROWS_AS(mock_respond(user_request("passage p8", "score"), book), NoFixture);
    CHECK(mock_respond(user_request("passage p8\n## Attempt: 2", "score"), book).content == "0.3");
    CHECK_THROWS_AS(mock_respond(user_request("p7", "judge"), book), NoFixture);
    try {
        mock_respond(user_request("p7", "judge"), book);
    } catch (const NoFixture& e) {
        CHECK(e.tag() == "judge");
    }
    // Probes only see the final user message.
    ChatRequest sys_only = user_request("nothing");
    sys_only.tag = "score";
    sys_only.messages[0].content = "p7";
    CHECK_THROWS_AS(mock_respond(sys_only, book), NoFixture);
}

TEST_CASE("FixtureBook JSON round trip") {
    FixtureBook book;
    book.add("a", "x", "1").add_all("b", {"y", "z"}, "2");
    const auto path = fresh_dir("book") / "fixtures.json";
    book.save(path.string());
    const auto back = FixtureBook::load(path.string());
    REQUIRE(back.size() == 2);
    CHECK(back.fixtures()[1].probes == std::vector<std::string>{"y", "z"});
    CHECK(back.to_json() == book.to_json());
    CHECK(back.match("b", "..y..z..")->content == "2");
}

TEST_CASE("cache_key") {
    ProviderConfig cfg;
    const auto a = user_request("q");
    CHECK(cache_key(a, cfg) == cache_key(a, cfg));
    CHECK(cache_key(a, cfg).size() == 64);

    auto warm = a;
    warm.temperature = 0.7;
    CHECK(cache_key(warm, cfg) != cache_key(a, cfg));

    auto retagged = a;
    retagged.tag = "score";
    CHECK(cache_key(retagged, cfg) == cache_key(a, cfg));

    auto edited = a;
    edited.messages[1].content = "r";
    CHECK(cache_key(edited, cfg) != cache_key(a, cfg));

    auto schema = a;
    schema.response_schema = kIntentSchema;
    CHECK(cache_key(schema, cfg) != cache_key(a, cfg));

    auto other_model = cfg;
    other_model.model = "m2";
    CHECK(cache_key(a, other_model) != cache_key(a, cfg));
    auto explicit_model = a;
    explicit_model.model = "m2";
    CHECK(cache_key(explicit_model, cfg) == cache_key(a, other_model));
}

TEST_CASE("parse_structured") {
    const std::string intent =
        R"({"topic":"immunology","entity_type":"cell types","intent":"definition","expected_answer_type":"two cell types and their roles"})";
    const auto m = parse_structured(intent, kIntentSchema);
    CHECK(m.size() == 4);
    CHECK(m.at("entity_type") == "cell types");

    CHECK(parse_structured("```json\n" + intent + "\n```", kIntentSchema) == m);
    CHECK(parse_structured("Sure! Here it is: " + intent + " Hope that helps.", kIntentSchema) == m);
    CHECK_THROWS_AS(parse_structured("not json at all", kIntentSchema), SchemaParseError);
    CHECK_THROWS_AS(parse_structured(R"({"topic":"x"})", kIntentSchema), SchemaParseError);
    CHECK_THROWS_AS(parse_structured(R"({"topic":1,"entity_type":"a","intent":"b","expected_answer_type":"c"})",
                                     kIntentSchema),
                    SchemaParseError);
    try {
        parse_structured("prose", kIntentSchema);
    } catch (const SchemaParseError& e) {
        CHECK(e.raw_content() == "prose");
    }

    const SchemaSpec judge{{{"value", FieldKind::enumeration, {"0", "1", "2", "3", "4", "5"}},
                            {"items", FieldKind::list, {}},
                            {"weight", FieldKind::number, {}}}};
    CHECK_NOTHROW(parse_structured(R"({"value":3,"items":[],"weight":0.5})", judge));
    CHECK_NOTHROW(parse_structured(R"({"value":"3","items":[1],"weight":1})", judge));
    CHECK_THROWS_AS(parse_structured(R"({"value":7,"items":[],"weight":0.5})", judge), SchemaParseError);
    CHECK_THROWS_AS(parse_structured(R"({"value":3.5,"items":[],"weight":0.5})", judge), SchemaParseError);
    CHECK_THROWS_AS(parse_structured(R"({"value":3,"items":{},"weight":0.5})", judge), SchemaParseError);

    // braces inside strings do not confuse the repair pass
    const auto tricky = parse_structured(
        "x {\"topic\":\"a}b\",\"entity_type\":\"{\",\"intent\":\"c\",\"expected_answer_type\":\"d\"} y", kIntentSchema);
    CHECK(tricky.at("topic") == "a}b");
}

TEST_CASE("parse_structured is idempotent on its own output") {
    const std::string text = R"(```
{"topic":"t","entity_type":"e","intent":"i","expected_answer_type":"x","extra":[1,2]}
```)";
    const auto once = parse_structured(text, kIntentSchema);
    nlohmann::json j(once);
    CHECK(parse_structured(j.dump(), kIntentSchema) == once);
}

TEST_CASE("ProviderConfig::validate") {
    ProviderConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.kind = ProviderKind::http;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.endpoint_url = "http://127.0.0.1:1/v1";
    CHECK_NOTHROW(cfg.validate());
    cfg.concurrency_limit = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.concurrency_limit = 1;
    cfg.stage_temperature["judge"] = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_provider_kind("mock") == ProviderKind::mock);
    CHECK(!parse_provider_kind("grpc"));
}

TEST_CASE("stage temperature override changes the effective request") {
    FixtureBook book;
    book.add("judge", "q", "5");
    ProviderConfig cfg;
    cfg.cache_dir = fresh_dir("stage");
    cfg.stage_temperature["judge"] = 0.7;
    Gateway gw(cfg, book);
    auto req = user_request("q", "judge");
    CHECK(gw.complete_chat(req).content == "5");
    auto effective = req;
    effective.temperature = 0.7;
    CHECK(fs::exists(cfg.cache_dir / cache_key(effective, cfg)));
    CHECK_FALSE(fs::exists(cfg.cache_dir / cache_key(req, cfg)));
}

TEST_CASE("http: 429 twice then 200 succeeds on the third attempt") {
    std::atomic<int> n{0};
    testing::StubServer server([&](const httplib::Request&, httplib::Response& res) {
        if (n++ < 2) {
            res.status = 429;
            return;
        }
        testing::reply(res, "ok");
    });
    Gateway gw(http_config(server));
    CHECK(gw.complete_chat(user_request("hello")).content == "ok");
    CHECK(server.hits() == 3);
    CHECK(gw.stats().network_calls == 3);
    CHECK(server.auth_headers().front() == "Bearer sk-test");
}

TEST_CASE("http: persistent 500 exhausts retries") {
    testing::StubServer server([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    auto cfg = http_config(server);
    cfg.max_retries = 2;
    Gateway gw(cfg);
    try {
        gw.complete_chat(user_request("hello"));
        FAIL("expected ExhaustedRetries");
    } catch (const ExhaustedRetries& e) {
        CHECK(e.last_status() == 500);
        CHECK(e.attempts() == 3);
    }
    CHECK(server.hits() == 3);
}

TEST_CASE("http: backoff doubles between attempts") {
    std::atomic<int> n{0};
    testing::StubServer server([&](const httplib::Request&, httplib::Response& res) {
        if (n++ < 3) {
            res.status = 503;
            return;
        }
        testing::reply(res, "late");
    });
    auto cfg = http_config(server);
    cfg.base_backoff_ms = 40;
    Gateway gw(cfg);
    CHECK(gw.complete_chat(user_request("x")).content == "late");
    const auto t = server.arrivals();
    REQUIRE(t.size() == 4);
    for (std::size_t i = 1; i < t.size(); ++i) {
        const auto gap = std::chrono::duration<double, std::milli>(t[i] - t[i - 1]).count();
        CHECK(gap >= 40.0 * static_cast<double>(1 << (i - 1)));
    }
}

TEST_CASE("http: auth and client errors are not retried") {
    testing::StubServer unauthorized([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    Gateway gw(http_config(unauthorized));
    CHECK_THROWS_AS(gw.complete_chat(user_request("x")), AuthError);
    CHECK(unauthorized.hits() == 1);

    testing::StubServer bad([](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    Gateway gw2(http_config(bad));
    try {
        gw2.complete_chat(user_request("x"));
        FAIL("expected ProviderRejected");
    } catch (const ProviderRejected& e) {
        CHECK(e.status() == 400);
    }
    CHECK(bad.hits() == 1);

    testing::StubServer garbage([](const httplib::Request&, httplib::Response& res) {
        res.status = 200;
        res.set_content("<html>", "text/html");
    });
    Gateway gw3(http_config(garbage));
    CHECK_THROWS_AS(gw3.complete_chat(user_request("x")), ProviderRejected);
}

TEST_CASE("http: missing API key") {
    testing::StubServer server([](const httplib::Request&, httplib::Response& res) { testing::reply(res, "x"); });
    auto cfg = http_config(server);
    cfg.api_key_env_var = "DEEPERA_TEST_KEY_UNSET";
    ::unsetenv("DEEPERA_TEST_KEY_UNSET");
    Gateway gw(cfg);
    CHECK_THROWS_AS(gw.complete_chat(user_request("x")), AuthError);
    CHECK(server.hits() == 0);
}

TEST_CASE("http: unreachable endpoint") {
    int port = 0;
    {
        testing::StubServer gone([](const httplib::Request&, httplib::Response&) {});
        port = gone.port();
    }
    ::setenv("DEEPERA_TEST_KEY", "sk-test", 1);
    ProviderConfig cfg;
    cfg.kind = ProviderKind::http;
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    cfg.api_key_env_var = "DEEPERA_TEST_KEY";
    cfg.max_retries = 1;
    cfg.base_backoff_ms = 1;
    cfg.timeout_ms = 500;
    Gateway gw(cfg);
    CHECK_THROWS_AS(gw.complete_chat(user_request("x")), ProviderUnreachable);
}

TEST_CASE("http: concurrency stays within the limit") {
    testing::StubServer server(
        [](const httplib::Request& req, httplib::Response& res) {
            std::this_thread::sleep_for(15ms);
            testing::reply(res, testing::last_user_message(req));
        },
        32);
    auto cfg = http_config(server);
    cfg.concurrency_limit = 4;
    Gateway gw(cfg);

    std::vector<std::thread> threads;
    std::atomic<int> mismatches{0};
    for (int i = 0; i < 100; ++i) {
        threads.emplace_back([&, i] {
            const std::string q = "query " + std::to_string(i);
            if (gw.complete_chat(user_request(q)).content != q) ++mismatches;
        });
    }
    for (auto& t : threads) t.join();
    CHECK(mismatches == 0);
    CHECK(server.hits() == 100);
    CHECK(server.peak_in_flight() <= 4);
    CHECK(gw.stats().peak_in_flight <= 4);
    CHECK(gw.stats().peak_in_flight >= 2);
}

TEST_CASE("http: cache hit skips the network") {
    testing::StubServer server([](const httplib::Request&, httplib::Response& res) { testing::reply(res, "fresh"); });
    auto cfg = http_config(server);
    cfg.cache_dir = fresh_dir("http_cache");
    Gateway gw(cfg);
    const auto a = gw.complete_chat(user_request("same"));
    const auto b = gw.complete_chat(user_request("same"));
    CHECK_FALSE(a.cached);
    CHECK(b.cached);
    CHECK(a.content == b.content);
    CHECK(server.hits() == 1);

    // A second gateway over the same cache directory never calls out either.
    Gateway again(cfg);
    CHECK(again.complete_chat(user_request("same")).cached);
    CHECK(server.hits() == 1);
}

TEST_CASE("complete_structured requires the matching schema") {
    FixtureBook book;
    book.add("intent", "q", R"({"topic":"t","entity_type":"e","intent":"i","expected_answer_type":"x"})");
    Gateway gw(ProviderConfig{}, book);
    auto req = user_request("q");
    CHECK_THROWS_AS(gw.complete_structured(req, kIntentSchema), std::invalid_argument);
    req.response_schema = kIntentSchema;
    CHECK(gw.complete_structured(req, kIntentSchema).at("topic") == "t");
}
