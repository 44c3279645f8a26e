#include "deepera/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <random>

#include <nlohmann/json.hpp>

#include "deepera/forge.hpp"
#include "deepera/reranker.hpp"

namespace deepera {

using nlohmann::json;

namespace {

struct Topic {
    const char* name;
    std::array<const char*, 4> subjects;
    std::array<const char*, 3> properties;
    std::array<const char*, 3> methods;
    std::array<const char*, 3> conditions;
    const char* specimens;
};

constexpr std::array<Topic, 8> kTopics{{
    {"plant ecology",
     {"alpine meadow grasses", "dwarf willow shrubs", "cushion plants", "sedge tussocks"},
     {"leaf nitrogen content", "root biomass", "flowering phenology"},
     {"stable isotope labelling", "destructive harvest sampling", "hyperspectral leaf imaging"},
     {"experimental warming", "snowpack removal", "nitrogen deposition"},
     "plots"},
    {"freshwater biology",
     {"stream mayfly larvae", "pond diatom communities", "lake zooplankton", "riffle caddisfly larvae"},
     {"emergence timing", "community richness", "grazing rate"},
     {"kick-net surveys", "environmental DNA metabarcoding", "benthic chamber incubations"},
     {"fine sediment loading", "riparian shading loss", "road salt runoff"},
     "samples"},
    {"soil microbiology",
     {"arbuscular mycorrhizal fungi", "nitrifying archaea", "soil actinobacteria", "methanotrophic bacteria"},
     {"enzyme activity", "respiration rate", "hyphal density"},
     {"quantitative PCR of marker genes", "chloroform fumigation extraction", "respirometry incubations"},
     {"biochar amendment", "repeated tillage", "prolonged waterlogging"},
     "cores"},
    {"immunology",
     {"regulatory T cells", "germinal centre B cells", "tissue-resident macrophages", "natural killer cells"},
     {"cytokine secretion", "clonal expansion", "antigen uptake"},
     {"flow cytometry", "single-cell RNA sequencing", "intravital imaging"},
     {"chronic infection", "dietary fibre restriction", "checkpoint blockade"},
     "donors"},
    {"marine ecology",
     {"reef-building corals", "kelp forest urchins", "seagrass meadows", "intertidal mussels"},
     {"calcification rate", "recruitment density", "shoot productivity"},
     {"buoyant weight measurements", "photo quadrat surveys", "settlement plate deployments"},
     {"marine heatwaves", "ocean acidification", "nutrient enrichment"},
     "colonies"},
    {"neuroscience",
     {"hippocampal place cells", "cerebellar Purkinje neurons", "cortical interneurons", "dopaminergic neurons"},
     {"firing precision", "dendritic spine density", "synaptic release probability"},
     {"two-photon calcium imaging", "patch-clamp recordings", "chemogenetic silencing"},
     {"sleep deprivation", "enriched housing", "early life stress"},
     "animals"},
    {"atmospheric chemistry",
     {"urban aerosol particles", "biogenic volatile compounds", "marine boundary layer sulfate", "wildfire smoke plumes"},
     {"oxidation rate", "particle acidity", "hygroscopic growth"},
     {"aerosol mass spectrometry", "flow tube experiments", "lidar profiling"},
     {"elevated humidity", "nighttime nitrate chemistry", "dust intrusion"},
     "filters"},
    {"plant pathology",
     {"wheat stem rust", "potato late blight", "banana wilt fungi", "grapevine downy mildew"},
     {"lesion expansion", "spore production", "host colonisation"},
     {"detached leaf assays", "field inoculation trials", "quantitative lesion scoring"},
     {"prolonged leaf wetness", "fungicide rotation", "resistant cultivar mixtures"},
     "fields"},
}};

constexpr std::array<const char*, 20> kSiteWords{
    "Kestrel Ridge", "Alder Creek", "Marrow Fen", "Sable Point", "Quarry Hollow", "Juniper Flats",
    "Heron Bay", "Granite Pass", "Willow Bend", "Cinder Mesa", "Larch Hollow", "Otter Sound",
    "Basalt Rim", "Fernbrook", "Tern Island", "Copper Basin", "Moss Glen", "Pelican Reach",
    "Thistle Moor", "Ember Valley"};

constexpr std::array<const char*, 3> kTargetTypes{"misleading", "background", "irrelevant"};

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

template <typename Seq>
const char* pick(std::mt19937_64& rng, const Seq& seq) {
    return seq[static_cast<std::size_t>(rng() % seq.size())];
}

int pick_int(std::mt19937_64& rng, int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); }

struct Fact {
    std::string question;
    std::string answer;
    const char* type;
};

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", std::clamp(v, 0.0, 1.0));
    return buf;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(std::size_t n_docs, std::uint64_t seed, std::size_t max_chunk_chars,
                                      std::size_t distractor_count) {
    std::mt19937_64 rng(seed);
    SyntheticCorpus out;
    std::size_t question_no = 0;

    for (std::size_t i = 0; i < n_docs; ++i) {
        const Topic& t = kTopics[i % kTopics.size()];
        const std::string subject = pick(rng, t.subjects);
        const std::string property = pick(rng, t.properties);
        const std::string method = pick(rng, t.methods);
        const std::string condition = pick(rng, t.conditions);
        const std::string site = std::string(kSiteWords[i % kSiteWords.size()]) + " station " + std::to_string(101 + i);
        const int n1 = pick_int(rng, 20, 900);
        const int pct = pick_int(rng, 5, 95);
        const int weeks = pick_int(rng, 2, 30);

        const std::array<std::string, 6> sentences{
            "We sampled " + std::to_string(n1) + " " + t.specimens + " of " + subject + " at the " + site +
                " over three consecutive seasons.",
            capitalize(method) + " was used to quantify " + property + " in every sample collected at the site.",
            capitalize(property) + " rose by " + std::to_string(pct) + " percent under " + condition +
                " relative to matched control " + t.specimens + ".",
            "The effect persisted for " + std::to_string(weeks) + " weeks after the treatment ended.",
            "These results indicate that " + condition + " reshapes " + property + " in " + subject + ".",
            "Monitoring programs at the " + site + " should therefore track " + property + " over time.",
        };
        const std::array<Fact, 6> facts{{
            {"How many " + std::string(t.specimens) + " of " + subject + " were sampled at the " + site + "?",
             std::to_string(n1) + " " + t.specimens, "method"},
            {"Which technique was used to quantify " + property + " in the samples from the " + site + "?", method,
             "method"},
            {"By how much did " + property + " change under " + condition + " at the " + site + "?",
             std::to_string(pct) + " percent", "result"},
            {"For how long did the effect of " + condition + " on " + property + " persist at the " + site + "?",
             std::to_string(weeks) + " weeks", "result"},
            {"What do the " + site + " results indicate about " + condition + " and " + property + "?",
             condition + " reshapes " + property + " in " + subject, "significance"},
            {"What should monitoring programs at the " + site + " track?", property + " over time",
             "significance"},
        }};

        Document doc;
        char id[32];
        std::snprintf(id, sizeof id, "doc%04zu", i + 1);
        doc.id = id;
        doc.title = capitalize(property) + " of " + subject + " under " + condition;
        for (std::size_t s = 0; s < sentences.size(); ++s) {
            if (s > 0) doc.abstract += ' ';
            doc.abstract += sentences[s];
        }
        doc.metadata = {{"subject", t.name}, {"venue", "Synthetic Field Reports"}, {"year", std::to_string(2000 + i % 25)}};

        out.fixtures.add("extract", "## Document: " + doc.id + "\n",
                         json{{"methods", sentences[0] + " " + sentences[1]},
                              {"results", sentences[2] + " " + sentences[3]},
                              {"significance", sentences[4] + " " + sentences[5]}}
                             .dump());

        for (const Chunk& chunk : segment_abstract(doc, max_chunk_chars)) {
            const std::size_t first = chunk.sentence_span.first;
            const std::size_t last = chunk.sentence_span.second;
            // Every tenth document over-delivers so the truncation path is exercised.
            const std::size_t limit = (i % 10 == 0) ? last - first : std::min<std::size_t>(2, last - first);
            json pairs = json::array();
            for (std::size_t s = first; s < first + limit; ++s) {
                pairs.push_back({{"question", facts[s].question}, {"answer", facts[s].answer}, {"type", facts[s].type}});
            }
            out.fixtures.add("qa", chunk.text, json{{"pairs", pairs}}.dump());

            const std::size_t kept = std::min<std::size_t>(limit, kMaxQAPairs);
            for (std::size_t s = first; s < first + kept; ++s) {
                const Fact& f = facts[s];
                const std::string main_idea = "a plausible account of '" + f.question + "' that never gives the answer";
                out.fixtures.add("guidance", "## Question: " + f.question + "\n",
                                 json{{"doc_id", chunk.passage_id()},
                                      {"target_type", kTargetTypes[question_no % kTargetTypes.size()]},
                                      {"main_idea", main_idea},
                                      {"answer_avoidance", f.answer}}
                                     .dump());

                auto clean = [&](std::size_t j) {
                    static constexpr std::array<const char*, 6> kLeads{
                        "Earlier surveys near the", "A separate campaign at the", "Archival notes from the",
                        "Visiting teams at the", "A pilot study beside the", "Regional reports on the"};
                    static constexpr std::array<const char*, 6> kTails{
                        "without quantifying any change", "and focused on sampling logistics",
                        "while questioning the plot design", "using a protocol that was later abandoned",
                        "as part of a teaching exercise", "before the instruments were calibrated"};
                    return std::string(kLeads[j % kLeads.size()]) + " " + site + " described " + property +
                               " in " + subject + " " + kTails[(j + question_no) % kTails.size()] + ".";
                };
                const bool inject_leak = question_no % 4 == 0;
                json attempt1 = json::array();
                if (inject_leak) attempt1.push_back("Observers reported " + f.answer + " at a neighbouring site.");
                for (std::size_t j = 0; attempt1.size() < distractor_count; ++j) attempt1.push_back(clean(j));
                const std::string idea_probe = "## Main idea: " + main_idea + "\n";
                out.fixtures.add_all("distractor", {idea_probe, "## Attempt: 1"}, json{{"passages", attempt1}}.dump());
                out.fixtures.add_all("distractor", {idea_probe, "## Attempt: 2"},
                                     json{{"passages", json::array({clean(distractor_count + 1)})}}.dump());
                ++question_no;
            }
        }
        out.docs.push_back(std::move(doc));
    }
    return out;
}

SeparationScenario make_separation_scenario(std::size_t instances, std::uint64_t seed, std::size_t pool_size,
                                            std::size_t distractors) {
    if (pool_size < distractors + 2) throw std::invalid_argument("make_separation_scenario: pool too small");
    static constexpr std::array<const char*, 10> kEntities{
        "snow leopards", "nesting loggerhead turtles", "breeding grey herons", "lowland tapirs",
        "black-footed ferrets", "spotted salamanders", "giant river otters", "hooded vultures",
        "pygmy hippopotamuses", "marbled murrelets"};
    static constexpr std::array<const char*, 12> kPlaces{
        "Karakol", "Tenby", "Oristano", "Valdez", "Ruskin", "Alcala", "Morvan", "Kilifi", "Laramie",
        "Tolosa", "Ferrand", "Ushuaia"};
    static constexpr std::array<const char*, 12> kNaturals{
        "Soil cores from reforested slopes stored more carbon after two decades of canopy closure.",
        "Microwave sintering produced ceramic membranes with uniform pore diameters.",
        "Gut microbiota composition shifted within days of a high-fibre dietary intervention.",
        "Glacier meltwater discharge peaked earlier in years with low winter precipitation.",
        "Photonic crystal fibres guided light with low loss across the visible spectrum.",
        "Transcriptome profiling identified drought-responsive genes in sorghum roots.",
        "Lithium plating on graphite anodes accelerated under fast-charging protocols.",
        "Seismic tomography resolved a low-velocity anomaly beneath the volcanic arc.",
        "Pollinator visitation to orchard blossoms declined during prolonged cold spells.",
        "Nanoparticle coatings reduced biofilm formation on urinary catheters in vitro.",
        "Tree-ring isotopes recorded multi-decadal shifts in monsoon strength.",
        "Quantum dot emission narrowed after surface passivation with zinc sulfide shells."};
    static constexpr std::array<const char*, 6> kDistractorFrames{
        "{Q} The {place} survey of {year} recorded {entity} tracks and droppings rather than individual animals.",
        "Researchers asked {q} Their {place} survey of {year} counted {entity} burrows instead of distinct animals.",
        "{Q} Volunteers in the {place} survey of {year} logged sightings of {entity}, many of them repeat sightings.",
        "Whether {entity} were recorded in the {place} survey of {year} depended on camera traps that failed early.",
        "{Q} Reports from the {place} survey of {year} list {entity} specimens held in museum collections instead.",
        "Coverage of {entity} in the {place} survey of {year} was patchy, so how many were recorded is uncertain."};

    std::mt19937_64 rng(seed);
    SeparationScenario out;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::string entity = kEntities[i % kEntities.size()];
        const std::string place = std::string(kPlaces[i % kPlaces.size()]) + " " + std::to_string(i + 1);
        const std::string year = std::to_string(1990 + static_cast<int>(rng() % 30));
        const int count = pick_int(rng, 100, 999);
        const std::string question = "How many " + entity + " were recorded in the " + place + " survey of " + year + "?";
        const std::string answer = std::to_string(count) + " individuals";

        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "sep-%03zu", i + 1);
        const std::string inst_id = idbuf;
        const std::string golden_id = inst_id + "#0";
        Passage golden{golden_id,
                       "Field teams counted " + answer + " along every transect. An independent census later confirmed "
                       "that total within a narrow margin. Transects were walked at dawn on consecutive mornings.",
                       PassageLabel::golden, inst_id, std::nullopt};

        auto replace_all = [](std::string s, const std::string& from, const std::string& to) {
            for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
                s.replace(pos, from.size(), to);
            }
            return s;
        };
        std::string q_lower = question;
        q_lower[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(q_lower[0])));

        std::vector<Passage> tail;
        for (std::size_t j = 0; j < distractors; ++j) {
            std::string text = kDistractorFrames[j % kDistractorFrames.size()];
            text = replace_all(text, "{Q}", question);
            text = replace_all(text, "{q}", q_lower);
            text = replace_all(text, "{place}", place);
            text = replace_all(text, "{year}", year);
            text = replace_all(text, "{entity}", entity);
            tail.push_back(Passage{golden_id + "~d" + std::to_string(j + 1), capitalize(text), PassageLabel::distractor,
                                   std::nullopt, golden_id});
        }

        auto natural = [&](std::size_t j) {
            return Passage{inst_id + "#n" + std::to_string(j + 1),
                           std::string(kNaturals[(i + j) % kNaturals.size()]) + " Samples were archived under batch " +
                               std::to_string(i * 100 + j + 1) + ".",
                           PassageLabel::natural, "nat-" + std::to_string(i * 100 + j + 1), std::nullopt};
        };

        const std::size_t golden_slot = static_cast<std::size_t>(rng() % 3);
        std::vector<Passage> head;
        std::size_t n_natural = 0;
        for (std::size_t s = 0; s < pool_size - distractors; ++s) {
            head.push_back(s == golden_slot ? golden : natural(n_natural++));
        }

        QAInstance ssli{inst_id, question, answer, Setting::ssli, head, {{"scenario", "separation"}}};
        ssli.contexts.insert(ssli.contexts.end(), tail.begin(), tail.end());
        QAInstance base{inst_id, question, answer, Setting::base, head, {{"scenario", "separation"}}};
        for (std::size_t j = 0; j < distractors; ++j) base.contexts.push_back(natural(n_natural++));

        out.ssli.push_back(std::move(ssli));
        out.base.push_back(std::move(base));
    }
    return out;
}

std::string oracle_summary(const Passage& p) { return head_sentences(p.text, kMaxSummarySentences); }

FixtureBook oracle_fixtures(std::span<const QAInstance> instances, const ScoreProfile& profile) {
    FixtureBook book;
    for (const auto& inst : instances) {
        const std::string research_probe = "## Research question: " + inst.question + "\n";
        const std::string question_probe = "## Question: " + inst.question + "\n";

        book.add("intent", research_probe,
                 json{{"topic", "field science"},
                      {"entity_type", "entities named in the question"},
                      {"intent", "factual"},
                      {"expected_answer_type", "a short factual answer"}}
                     .dump());

        std::size_t distractor_no = 0;
        for (const auto& p : inst.contexts) {
            double score = profile.natural;
            if (p.label == PassageLabel::golden) score = profile.golden;
            if (p.label == PassageLabel::distractor) {
                score = profile.distractor + profile.distractor_step * static_cast<double>(distractor_no++);
            }
            book.add_all("score", {"[passage " + p.id + "]", research_probe}, format_score(score));
            book.add_all("summarize", {"## Evidence [passage " + p.id + "]", research_probe}, oracle_summary(p));
        }

        if (auto g = inst.golden_index()) {
            book.add_all("generate", {question_probe, oracle_summary(inst.contexts[*g])}, inst.golden_answer);
        }
        book.add("generate", question_probe, std::string(kOracleWrongAnswer));
        book.add_all("judge", {question_probe, "## Candidate answer: " + inst.golden_answer},
                     json{{"value", 5}, {"rationale", "matches the reference answer"}}.dump());
        book.add("judge", question_probe, json{{"value", 1}, {"rationale", "does not match the reference answer"}}.dump());
    }
    return book;
}

}  // namespace deepera
