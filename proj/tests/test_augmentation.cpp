#include "opinionmap/augmentation.hpp"
#include "opinionmap/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

using namespace opinionmap;
using opinionmap::testing::error_code_of;
using opinionmap::testing::slurp;
using opinionmap::testing::TempDir;

namespace {

SyntheticCorpus small_corpus(std::uint64_t seed, std::size_t unlabeled = 800) {
    SyntheticOptions o;
    o.seed = seed;
    o.seed_labeled = 160;
    o.unlabeled = unlabeled;
    o.test = 160;
    return make_synthetic_corpus(o);
}

LoopConfig small_config(std::uint64_t seed = 5) {
    LoopConfig c;
    c.folds = 2;
    c.max_iterations = 3;
    c.seed = seed;
    return c;
}

IterationRecord record_with_f1(int i, double f1, std::optional<double> prev) {
    IterationRecord r;
    r.iteration = i;
    r.test_report.macro_f1 = f1;
    if (prev) r.gain = f1 - *prev;
    return r;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::string ledger(const AugmentationLoop& loop) {
    std::ostringstream out;
    loop.write_ledger(out);
    return out.str();
}

// Drops the gold label of every other requested posting.
class ForgetfulOracle : public AnnotationSource {
public:
    explicit ForgetfulOracle(ScriptedOracle inner) : inner_(std::move(inner)) {}
    void annotate(int iteration, const std::vector<AnnotationRequest>& requests, OntologyStore& working) override {
        std::vector<AnnotationRequest> half;
        for (std::size_t i = 0; i < requests.size(); i += 2) half.push_back(requests[i]);
        inner_.annotate(iteration, half, working);
    }

private:
    ScriptedOracle inner_;
};

}  // namespace

TEST_CASE("convergence is decided on the latest test macro-F1 gain") {
    // Gains 0.04, 0.01, 0.004 against epsilon 0.005.
    std::vector<IterationRecord> r{record_with_f1(0, 0.80, {})};
    r.push_back(record_with_f1(1, 0.84, 0.80));
    r.push_back(record_with_f1(2, 0.85, 0.84));
    r.push_back(record_with_f1(3, 0.854, 0.85));
    CHECK_FALSE(check_convergence(std::span(r).first(1), 0.005).converged);
    CHECK_FALSE(check_convergence(std::span(r).first(2), 0.005).converged);
    CHECK_FALSE(check_convergence(std::span(r).first(3), 0.005).converged);
    const auto d = check_convergence(r, 0.005);
    CHECK(d.converged);
    CHECK(d.reason.find("gain") != std::string::npos);
    CHECK(d.reason.find("gap") != std::string::npos);

    std::vector<IterationRecord> rising{record_with_f1(0, 0.5, {})};
    for (int i = 1; i <= 6; ++i) rising.push_back(record_with_f1(i, 0.5 + 0.01 * i, 0.5 + 0.01 * (i - 1)));
    for (std::size_t n = 2; n <= rising.size(); ++n) CHECK_FALSE(check_convergence(std::span(rising).first(n), 0.005).converged);

    std::vector<IterationRecord> worse{record_with_f1(0, 0.9, {}), record_with_f1(1, 0.8, 0.9)};
    CHECK(check_convergence(worse, 0.005).converged);
}

TEST_CASE("an iteration moves the batch from U to L and leaves X_test alone") {
    auto corpus = small_corpus(1);
    AugmentationLoop loop(corpus.store, small_config());
    loop.start();
    const auto l0 = as_set(loop.store().training_postings());
    const auto u0 = as_set(loop.store().postings_in_state(LabelState::unlabeled));
    const auto test = as_set(loop.store().test_postings());
    auto oracle = corpus.oracle();
    const auto& rec = loop.run_iteration(oracle);

    std::set<std::string> picked;
    for (const auto& row : rec.manifest) picked.insert(row.posting_id);
    const auto l1 = as_set(loop.store().training_postings());
    const auto u1 = as_set(loop.store().postings_in_state(LabelState::unlabeled));
    CHECK(l1.size() == l0.size() + picked.size());
    CHECK(rec.labeled == l1.size());
    CHECK(rec.new_labeled == picked.size());
    CHECK(std::includes(l1.begin(), l1.end(), l0.begin(), l0.end()));
    CHECK(u1.size() == u0.size() - picked.size());
    for (const auto& id : picked) {
        CHECK(u0.count(id));
        CHECK_FALSE(u1.count(id));
    }
    CHECK(as_set(loop.store().test_postings()) == test);
    for (const auto& id : l1) CHECK_FALSE(test.count(id));
    for (const auto& id : u1) CHECK_FALSE(l1.count(id));
    CHECK(rec.gain.has_value());
    CHECK_FALSE(loop.records().front().gain.has_value());
}

TEST_CASE("batches stay fresh and test postings never reach training") {
    auto corpus = small_corpus(2);
    auto config = small_config();
    config.max_iterations = 4;
    AugmentationLoop loop(corpus.store, config);
    auto oracle = corpus.oracle();
    loop.start();
    const auto test = as_set(loop.store().test_postings());
    for (int i = 0; i < 4; ++i) {
        const auto labeled_before = as_set(loop.store().training_postings());
        const auto& rec = loop.run_iteration(oracle);
        for (const auto& row : rec.manifest) {
            CHECK_FALSE(labeled_before.count(row.posting_id));
            CHECK_FALSE(test.count(row.posting_id));
        }
        for (const auto& id : loop.store().training_postings()) CHECK_FALSE(test.count(id));
        // 10 + 10 + 5 per topic while the pool lasts.
        std::map<std::string, std::map<Strategy, int>> counts;
        for (const auto& row : rec.manifest) ++counts[row.topic_id][row.strategy];
        for (const auto& [topic, by] : counts) {
            CHECK(by.at(Strategy::active) == 10);
            CHECK(by.at(Strategy::top_confidence) == 10);
            CHECK(by.at(Strategy::random) == 5);
        }
        CHECK(rec.manifest.size() == 100);
    }
}

TEST_CASE("the annotation source only ever sees posting content") {
    auto corpus = small_corpus(3);
    AugmentationLoop loop(corpus.store, small_config());
    auto oracle = corpus.oracle();
    loop.run_iteration(oracle);
    REQUIRE_FALSE(oracle.seen().empty());
    const std::set<std::string> allowed{"posting_id", "text", "platform", "timestamp", "topic_context", "place_id"};
    for (const auto& request : oracle.seen()) {
        const auto j = to_json(request);
        for (const auto& [key, value] : j.items()) {
            CAPTURE(key);
            CHECK(allowed.count(key));
        }
    }
}

TEST_CASE("incomplete annotation holds the iteration open") {
    auto corpus = small_corpus(4);
    AugmentationLoop loop(corpus.store, small_config());
    loop.start();
    const auto before = ledger(loop);
    const auto triples = loop.store().triple_count();
    const auto labeled = loop.store().training_postings().size();
    ForgetfulOracle forgetful(corpus.oracle());
    CHECK(error_code_of([&] { loop.run_iteration(forgetful); }) == ErrorCode::annotation_incomplete);
    CHECK(ledger(loop) == before);
    CHECK(loop.store().triple_count() == triples);
    CHECK(loop.store().training_postings().size() == labeled);
    CHECK(loop.iteration() == 0);

    auto oracle = corpus.oracle();
    CHECK(loop.run_iteration(oracle).iteration == 1);
}

TEST_CASE("the baseline draws random batches of the same size") {
    auto corpus = small_corpus(5);
    auto oracle = corpus.oracle();
    const auto records = run_baseline(corpus.store, small_config(), oracle, 2);
    REQUIRE(records.size() == 3);
    for (std::size_t i = 1; i < records.size(); ++i) {
        CHECK(records[i].kind == RunKind::baseline);
        std::map<std::string, int> per_topic;
        for (const auto& row : records[i].manifest) {
            CHECK(row.strategy == Strategy::random);
            ++per_topic[row.topic_id];
        }
        CHECK(per_topic.size() == 4);
        for (const auto& [t, n] : per_topic) CHECK(n == 25);
    }
}

TEST_CASE("replaying a run reproduces records and model files") {
    auto corpus = small_corpus(6);
    TempDir dir("replay");
    std::string ledgers[2], metrics[2];
    for (int k = 0; k < 2; ++k) {
        AugmentationLoop loop(corpus.store, small_config(9));
        auto oracle = corpus.oracle();
        loop.run(oracle);
        ledgers[k] = ledger(loop);
        std::ostringstream m;
        loop.write_metrics(m);
        metrics[k] = m.str();
        loop.write_models(dir / ("models" + std::to_string(k)));
    }
    CHECK(ledgers[0] == ledgers[1]);
    CHECK(metrics[0] == metrics[1]);
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "models0")) {
        ++files;
        CHECK(slurp(entry.path()) == slurp(dir / "models1" / entry.path().filename()));
    }
    CHECK(files == 1 + 4 + 4);

    AugmentationLoop other(corpus.store, small_config(10));
    auto oracle = corpus.oracle();
    other.run(oracle);
    CHECK(ledger(other) != ledgers[0]);
}

TEST_CASE("test macro-F1 does not fall back over five oracle iterations") {
    auto corpus = small_corpus(7, 2000);
    auto config = small_config();
    config.max_iterations = 5;
    AugmentationLoop loop(corpus.store, config);
    auto oracle = corpus.oracle();
    loop.start();
    for (int i = 0; i < 5; ++i) loop.run_iteration(oracle);
    const auto& r = loop.records();
    double best = r.front().test_report.macro_f1;
    for (const auto& rec : r) {
        CHECK(rec.test_report.macro_f1 >= best - 0.03);
        best = std::max(best, rec.test_report.macro_f1);
    }
    CHECK(r.back().test_report.macro_f1 >= r.front().test_report.macro_f1);
}

TEST_CASE("the scripted oracle creates unknown opinions and round-trips") {
    OntologyStore store;
    for (auto& t : default_topics()) store.add_topic(t);
    store.add_posting(opinionmap::testing::posting("p1", "text"));
    store.add_posting(opinionmap::testing::posting("p2", "other"));
    std::map<std::string, GoldLabel> gold{{"p1", {{"climate-change"}, {"Climate change is a UN hoax"}}}, {"p2", {}}};
    std::map<std::string, GoldOpinion> ops{{"Climate change is a UN hoax", {"Climate change is a UN hoax", {"climate-change"}, true}}};
    ScriptedOracle oracle(gold, ops);
    oracle.annotate(1, {{"p1", "text", Platform::facebook, {}, {}, "climate-change"}, {"p2", "other", Platform::facebook, {}, {}, "covid-19"}},
                    store);
    const auto label = store.label_of("p1");
    CHECK(label.topics == std::set<std::string>{"climate-change"});
    REQUIRE(label.opinions.size() == 1);
    CHECK(store.opinion(*label.opinions.begin())->conspiracy);
    CHECK(store.label_of("p2").off_topic());
    CHECK(store.posting("p2")->label_state == LabelState::labeled);
    CHECK(store.posting("p1")->source_batch == 1);

    std::stringstream s;
    oracle.save(s);
    const auto back = ScriptedOracle::load(s);
    CHECK(back.labels().size() == 2);
    CHECK(back.labels().at("p1").opinion_statements == std::set<std::string>{"Climate change is a UN hoax"});
    std::istringstream bad("{\"id\": 3}\n");
    CHECK(error_code_of([&] { ScriptedOracle::load(bad); }) == ErrorCode::malformed_record);
}

TEST_CASE("loop configuration is checked up front") {
    auto corpus = small_corpus(8);
    auto config = small_config();
    config.sizes = {20, 10, 5};
    CHECK(error_code_of([&] { AugmentationLoop(corpus.store, config); }) == ErrorCode::config_error);
    config = small_config();
    config.folds = 1;
    CHECK(error_code_of([&] { AugmentationLoop(corpus.store, config); }) == ErrorCode::config_error);
    OntologyStore no_test;
    for (auto& t : default_topics()) no_test.add_topic(t);
    CHECK(error_code_of([&] { AugmentationLoop(no_test, small_config()); }) == ErrorCode::empty_input);
}

TEST_CASE("ledger lines are self-describing JSON") {
    auto corpus = small_corpus(9);
    AugmentationLoop loop(corpus.store, small_config());
    auto oracle = corpus.oracle();
    loop.run_iteration(oracle);
    std::istringstream lines(ledger(loop));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("iteration") == n);
        CHECK(j.at("gain").is_null() == (n == 0));
        CHECK(j.at("test_report").at("source") == "test-set");
        CHECK(j.at("cv_report").at("source") == "cross-validation");
        CHECK(j.contains("cv_test_gap"));
        ++n;
    }
    CHECK(n == 2);
}
