#include <doctest.h>

#include <random>

#include "deepera/digest.hpp"
#include "deepera/prompts.hpp"
#include "deepera/text.hpp"

using namespace deepera;

TEST_CASE("split_sentences: basic and abbreviations") {
    CHECK(sentences_of("One. Two! Three?") == std::vector<std::string>{"One.", "Two!", "Three?"});
    CHECK(sentences_of("As shown by Smith et al. In 2020 the yield rose. It fell.") ==
          std::vector<std::string>{"As shown by Smith et al. In 2020 the yield rose.", "It fell."});
    CHECK(sentences_of("See Fig. 3 for details. Done.") ==
          std::vector<std::string>{"See Fig. 3 for details.", "Done."});
    CHECK(sentences_of("Values 3.5 and 4.2 differ. Next.") ==
          std::vector<std::string>{"Values 3.5 and 4.2 differ.", "Next."});
    CHECK(sentences_of("lowercase. after a stop stays joined.").size() == 1);
    CHECK(sentences_of("   ").empty());
    CHECK(sentences_of("  Leading and trailing.  ") == std::vector<std::string>{"Leading and trailing."});
}

TEST_CASE("split_sentences: spans cover the text in order") {
    std::mt19937_64 rng(5);
    const std::vector<std::string> words = {"Cells", "grow", "fast.", "Fig.", "2", "et", "al.", "Yes!",
                                            "Why?", "α-helix", "data", "e.g.", "The"};
    for (int trial = 0; trial < 300; ++trial) {
        std::string text;
        const int n = std::uniform_int_distribution<int>(1, 30)(rng);
        for (int i = 0; i < n; ++i) {
            if (i) text += std::bernoulli_distribution(0.1)(rng) ? "  " : " ";
            text += words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
        }
        const auto spans = split_sentences(text);
        REQUIRE(!spans.empty());
        std::size_t pos = 0;
        for (const auto& s : spans) {
            CHECK(s.begin >= pos);
            CHECK(trim(text.substr(pos, s.begin - pos)).empty());
            CHECK(s.end > s.begin);
            pos = s.end;
        }
        CHECK(trim(text.substr(pos)).empty());
    }
}

TEST_CASE("utf8_length counts code points") {
    CHECK(utf8_length("") == 0);
    CHECK(utf8_length("abc") == 3);
    CHECK(utf8_length("α-helix") == 7);
    CHECK(utf8_length("漢字") == 2);
}

TEST_CASE("sha256 and fnv1a") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    static_assert(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("render_text") {
    CHECK(render_text("Q: {query}", {{"query", "why"}}) == "Q: why");
    CHECK(render_text(R"(schema {"topic": string})", {}) == R"(schema {"topic": string})");
    CHECK(render_text("{a}{a}", {{"a", "x"}}) == "xx");
    CHECK_THROWS_AS(render_text("{missing}", {}), TemplateError);
    // values are not re-expanded
    CHECK(render_text("{a}", {{"a", "{b}"}}) == "{b}");
}

TEST_CASE("bundled prompts") {
    for (const char* name : {"intent", "score", "score_raw", "summarize", "generate", "judge", "extract", "qa",
                             "guidance", "distractor"}) {
        const auto& t = prompt(name);
        CHECK(t.name == name);
        CHECK(t.version >= 1);
        CHECK(!t.user.empty());
        CHECK(t.hash.size() == 64);
    }
    CHECK_THROWS_AS(prompt("nope"), TemplateError);

    const auto hashes = prompt_hashes();
    CHECK(hashes.size() == 10);
    CHECK(hashes.at("intent").rfind("v", 0) == 0);

    const auto msgs = prompt("score_raw").render(
        {{"query", "Q?"}, {"passage_id", "p7"}, {"passage", "Text."}});
    REQUIRE(!msgs.empty());
    CHECK(msgs.back().role == Role::user);
    CHECK(msgs.back().content.find("[passage p7]") != std::string::npos);
    CHECK_THROWS_AS(prompt("score_raw").render({{"query", "Q?"}}), TemplateError);
}

TEST_CASE("PromptTemplate::parse") {
    const auto t = PromptTemplate::parse("x", "# version: 2\n[system]\nYou are terse.\n[user]\nSay {word}.\n");
    CHECK(t.version == 2);
    CHECK(t.system.find("You are terse.") != std::string::npos);
    CHECK(t.render({{"word", "hi"}}).back().content.find("Say hi.") != std::string::npos);
    CHECK_THROWS_AS(PromptTemplate::parse("y", "# version: 1\n[system]\nonly system\n"), TemplateError);
}
