#include "opinionmap/annotation_http.hpp"
#include "opinionmap/annotation_service.hpp"
#include "opinionmap/rng.hpp"
#include "opinionmap/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <sstream>
#include <thread>

using namespace opinionmap;
using nlohmann::json;
using opinionmap::testing::error_code_of;

namespace {

struct FakeClock {
    TimePoint t = parse_timestamp("2020-01-01T00:00:00Z");
    AnnotationService::Clock fn() {
        return [this] { return t; };
    }
};

// Store with `n` unlabeled postings p000..p{n-1} and two climate opinions.
struct Fixture {
    OntologyStore store = opinionmap::testing::store_with_default_topics();
    std::string hoax, arson;

    explicit Fixture(int n = 100) {
        for (int i = 0; i < n; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "p%03d", i);
            store.add_posting(opinionmap::testing::posting(id, "posting " + std::to_string(i)));
        }
        hoax = store.create_opinion({"Climate change is a UN hoax", {"climate-change"}, true});
        arson = store.create_opinion({"Arsonists lit the fires", {"bushfire"}, true});
    }

    std::vector<AnnotationRequest> requests(int n, const std::string& topic = "climate-change") const {
        std::vector<AnnotationRequest> out;
        for (int i = 0; i < n; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "p%03d", i);
            const auto p = store.posting(id);
            out.push_back({p->id, p->text, p->platform, p->place_id, p->timestamp, topic});
        }
        return out;
    }
};

LabelSubmission submission(const AnnotationTask& task, const std::string& who, std::set<std::string> topics,
                           std::set<std::string> opinions = {}) {
    LabelSubmission s;
    s.task_id = task.id;
    s.annotator_id = who;
    s.topics = std::move(topics);
    s.opinions = std::move(opinions);
    return s;
}

// Keys that would reveal what a model thinks about a posting.
const std::set<std::string> forbidden{"score",     "scores", "prob",       "probability", "probabilities", "prediction",
                                      "predicted", "label",  "confidence", "strategy",    "uncertainty",   "topic_probability"};

void check_blind(const json& j, const std::string& where) {
    if (j.is_object()) {
        for (const auto& [key, value] : j.items()) {
            CAPTURE(where);
            CAPTURE(key);
            CHECK_FALSE(forbidden.count(key));
            check_blind(value, where + "." + key);
        }
    } else if (j.is_array()) {
        for (const auto& v : j) check_blind(v, where + "[]");
    }
}

}  // namespace

TEST_CASE("publishing a batch creates one open task per selection") {
    Fixture f;
    AnnotationService svc(f.store);
    const auto ids = svc.publish_batch(1, f.requests(100));
    CHECK(ids.size() == 100);
    CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 100);
    for (const auto& t : svc.tasks(1)) CHECK(t.state == TaskState::open);
    CHECK(svc.progress(1).open == 100);
    CHECK(svc.published(1));

    CHECK(error_code_of([&] { svc.publish_batch(1, f.requests(5)); }) == ErrorCode::already_published);
    CHECK(svc.tasks(1).size() == 100);
    auto bad = f.requests(1);
    bad[0].posting_id = "nope";
    CHECK(error_code_of([&] { svc.publish_batch(2, bad); }) == ErrorCode::unknown_entity);
    CHECK_FALSE(svc.published(2));
}

TEST_CASE("task payloads carry posting content and nothing model-derived") {
    Fixture f;
    InternetPlace place{"pl1", Platform::facebook, "https://example.org/group"};
    f.store.add_place(place);
    auto reqs = f.requests(2);
    reqs[0].place_id = "pl1";
    AnnotationService svc(f.store);
    svc.register_annotator("ann");
    svc.publish_batch(1, reqs);
    const auto task = svc.claim_next("ann");
    REQUIRE(task);
    const auto j = task_payload(*task, f.store);
    std::set<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.insert(k);
    CHECK(keys == std::set<std::string>{"task_id", "iteration", "state", "posting", "topic_context", "lease_expires"});
    std::set<std::string> posting_keys;
    for (const auto& [k, v] : j.at("posting").items()) posting_keys.insert(k);
    CHECK(posting_keys == std::set<std::string>{"id", "text", "platform", "timestamp", "place"});
    CHECK(j.at("posting").at("place").at("url") == "https://example.org/group");
    CHECK(j.at("topic_context").at("id") == "climate-change");
    check_blind(j, "payload");
}

TEST_CASE("claims are exclusive and leases expire") {
    Fixture f;
    FakeClock clock;
    AnnotationService svc(f.store, {std::chrono::minutes(30), false, clock.fn()});
    CHECK(error_code_of([&] { svc.claim_next("ghost"); }) == ErrorCode::unknown_annotator);
    svc.register_annotator("a");
    svc.register_annotator("b");
    CHECK_FALSE(svc.claim_next("a"));
    svc.publish_batch(1, f.requests(2));

    const auto ta = svc.claim_next("a");
    const auto tb = svc.claim_next("b");
    REQUIRE(ta);
    REQUIRE(tb);
    CHECK(ta->id != tb->id);
    CHECK(ta->id == "i1-0001");
    CHECK_FALSE(svc.claim_next("a"));
    CHECK(svc.progress(1).claimed == 2);

    clock.t += std::chrono::minutes(29);
    CHECK_FALSE(svc.claim_next("b"));
    clock.t += std::chrono::minutes(1);
    CHECK(svc.progress(1).open == 2);
    const auto again = svc.claim_next("b");
    REQUIRE(again);
    CHECK(again->id == ta->id);

    // a's lease lapsed and b holds the task now.
    CHECK(error_code_of([&] { svc.submit_labels(submission(*ta, "a", {"climate-change"})); }) == ErrorCode::stale_lease);
    CHECK(svc.submit_labels(submission(*again, "b", {"climate-change"})).triples_written >= 1);
}

TEST_CASE("a holder whose lease lapsed is told the lease is stale") {
    Fixture f;
    FakeClock clock;
    AnnotationService svc(f.store, {std::chrono::minutes(30), false, clock.fn()});
    svc.register_annotator("a");
    svc.publish_batch(1, f.requests(1));
    const auto t = svc.claim_next("a");
    clock.t += std::chrono::hours(1);
    const auto triples = f.store.triple_count();
    CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "a", {"climate-change"})); }) == ErrorCode::stale_lease);
    CHECK(f.store.triple_count() == triples);
    CHECK(svc.task(t->id)->state == TaskState::open);
    CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "a", {"climate-change"})); }) == ErrorCode::stale_lease);
}

TEST_CASE("concurrent claims never hand one task to two annotators") {
    Fixture f;
    AnnotationService svc(f.store);
    for (int a = 0; a < 8; ++a) svc.register_annotator("a" + std::to_string(a));
    svc.publish_batch(1, f.requests(100));
    std::vector<std::vector<std::string>> got(8);
    std::vector<std::thread> threads;
    for (int a = 0; a < 8; ++a) {
        threads.emplace_back([&, a] {
            while (auto t = svc.claim_next("a" + std::to_string(a))) got[a].push_back(t->id);
        });
    }
    for (auto& t : threads) t.join();
    std::set<std::string> all;
    std::size_t total = 0;
    for (const auto& g : got) {
        total += g.size();
        all.insert(g.begin(), g.end());
    }
    CHECK(total == 100);
    CHECK(all.size() == 100);
}

TEST_CASE("three annotators submit 100 tasks exactly once") {
    Fixture f;
    AnnotationService svc(f.store);
    svc.publish_batch(1, f.requests(100));
    std::mutex m;
    std::map<std::string, int> submitted;
    std::vector<std::thread> threads;
    for (int a = 0; a < 3; ++a) {
        const auto who = "ann" + std::to_string(a);
        svc.register_annotator(who);
        threads.emplace_back([&, who, a] {
            Rng rng(static_cast<std::uint64_t>(a));
            while (auto t = svc.claim_next(who)) {
                auto s = submission(*t, who, {"climate-change"});
                if (rng.below(2)) s.opinions = {f.hoax};
                svc.submit_labels(s);
                std::lock_guard lock(m);
                ++submitted[t->id];
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(submitted.size() == 100);
    for (const auto& [id, n] : submitted) CHECK(n == 1);
    const auto p = svc.progress(1);
    CHECK(p.submitted == 100);
    CHECK(p.complete());
    for (const auto& r : f.requests(100)) CHECK(f.store.posting(r.posting_id)->label_state == LabelState::labeled);
    CHECK_FALSE(f.store.check_integrity());
    svc.finalize(1);
    CHECK(svc.progress(1).finalized == 100);
}

TEST_CASE("submissions write triples into the store") {
    Fixture f;
    AnnotationService svc(f.store);
    svc.register_annotator("a");
    svc.publish_batch(1, f.requests(4));

    SUBCASE("topic plus opinion") {
        const auto t = svc.claim_next("a");
        const auto r = svc.submit_labels(submission(*t, "a", {"climate-change"}, {f.hoax}));
        CHECK(r.triples_written >= 2);
        const auto label = f.store.label_of(t->request.posting_id);
        CHECK(label.topics == std::set<std::string>{"climate-change"});
        CHECK(label.opinions == std::set<std::string>{f.hoax});
        CHECK(svc.task(t->id)->state == TaskState::submitted);
        CHECK(f.store.posting(t->request.posting_id)->source_batch == 1);
    }
    SUBCASE("off-topic") {
        const auto t = svc.claim_next("a");
        LabelSubmission s = submission(*t, "a", {});
        s.off_topic = true;
        svc.submit_labels(s);
        const auto label = f.store.label_of(t->request.posting_id);
        CHECK(label.off_topic());
        CHECK(label.opinions.empty());
        CHECK(f.store.query({t->request.posting_id, Predicate::expresses_opinion, std::nullopt}).empty());
    }
    SUBCASE("new opinion proposal") {
        const auto before = f.store.opinions(true).size();
        const auto t = svc.claim_next("a");
        auto s = submission(*t, "a", {"climate-change"});
        s.new_opinions.push_back({"The climate has always changed", {"climate-change"}, false});
        const auto r = svc.submit_labels(s);
        CHECK(f.store.opinions(true).size() == before + 1);
        REQUIRE(r.created_opinions.size() == 1);
        CHECK(f.store.label_of(t->request.posting_id).opinions.count(r.created_opinions[0]));
        // The same statement from another posting reuses the opinion.
        const auto t2 = svc.claim_next("a");
        auto s2 = submission(*t2, "a", {"climate-change"});
        s2.new_opinions.push_back({"The climate has always changed", {"climate-change"}, false});
        CHECK(svc.submit_labels(s2).created_opinions.empty());
        CHECK(f.store.opinions(true).size() == before + 1);
    }
    SUBCASE("rejections leave the task claimed") {
        const auto t = svc.claim_next("a");
        const auto triples = f.store.triple_count();
        CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "a", {"covid-19"}, {f.hoax})); }) == ErrorCode::invalid_argument);
        CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "a", {})); }) == ErrorCode::invalid_argument);
        CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "a", {"martians"})); }) == ErrorCode::unknown_entity);
        CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "a", {"climate-change"}, {"op-404"})); }) ==
              ErrorCode::unknown_entity);
        auto off = submission(*t, "a", {"climate-change"});
        off.off_topic = true;
        CHECK(error_code_of([&] { svc.submit_labels(off); }) == ErrorCode::invalid_argument);
        auto stray = submission(*t, "a", {"climate-change"});
        stray.new_opinions.push_back({"Masks are useless", {"covid-19"}, false});
        CHECK(error_code_of([&] { svc.submit_labels(stray); }) == ErrorCode::invalid_argument);
        svc.register_annotator("b");
        CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "b", {"climate-change"})); }) == ErrorCode::not_claimed);
        CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "zed", {"climate-change"})); }) == ErrorCode::unknown_annotator);
        auto missing = submission(*t, "a", {"climate-change"});
        missing.task_id = "i9-0001";
        CHECK(error_code_of([&] { svc.submit_labels(missing); }) == ErrorCode::not_found);
        CHECK(f.store.triple_count() == triples);
        CHECK(svc.task(t->id)->state == TaskState::claimed);
        svc.submit_labels(submission(*t, "a", {"climate-change"}));
        CHECK(error_code_of([&] { svc.submit_labels(submission(*t, "a", {"climate-change"})); }) == ErrorCode::not_claimed);
    }
}

TEST_CASE("finalize needs every task submitted") {
    Fixture f;
    AnnotationService svc(f.store);
    svc.register_annotator("a");
    svc.publish_batch(1, f.requests(2));
    const auto t = svc.claim_next("a");
    svc.submit_labels(submission(*t, "a", {"climate-change"}));
    CHECK_FALSE(svc.progress(1).complete());
    CHECK(error_code_of([&] { svc.finalize(1); }) == ErrorCode::annotation_incomplete);
    CHECK(error_code_of([&] { svc.finalize(7); }) == ErrorCode::not_found);
    svc.submit_labels(submission(*svc.claim_next("a"), "a", {"bushfire"}));
    svc.finalize(1);
    CHECK(svc.progress(1).finalized == 2);
}

TEST_CASE("double coding keeps the second coder out of the store") {
    Fixture f(10);
    AnnotationService svc(f.store, {std::chrono::minutes(30), true, {}});
    svc.register_annotator("a");
    svc.register_annotator("b");
    const auto ids = svc.publish_batch(1, f.requests(10));
    CHECK(ids.size() == 20);

    // a claims everything it may: one role per posting.
    std::vector<AnnotationTask> mine;
    while (auto t = svc.claim_next("a")) mine.push_back(*t);
    CHECK(mine.size() == 10);
    std::set<std::string> postings;
    for (const auto& t : mine) postings.insert(t.request.posting_id);
    CHECK(postings.size() == 10);
    std::vector<AnnotationTask> theirs;
    while (auto t = svc.claim_next("b")) theirs.push_back(*t);
    CHECK(theirs.size() == 10);

    const auto triples = f.store.triple_count();
    for (const auto& t : theirs) {
        if (t.role == CoderRole::secondary) svc.submit_labels(submission(t, "b", {"bushfire"}));
    }
    CHECK(f.store.triple_count() == triples);
}

TEST_CASE("agreement is the share of identical full labels") {
    Fixture f(100);
    AnnotationService svc(f.store, {std::chrono::minutes(30), true, {}});
    svc.register_annotator("a");
    svc.register_annotator("b");
    svc.publish_batch(1, f.requests(100));
    // The first 81 postings get the same label from both coders.
    auto label_for = [&](const AnnotationTask& t, const std::string& who) {
        const int n = std::stoi(t.request.posting_id.substr(1));
        if (n < 81 || who == "a") return submission(t, who, {"climate-change"}, {f.hoax});
        return submission(t, who, {"climate-change"});
    };
    for (const std::string who : {"a", "b"}) {
        while (auto t = svc.claim_next(who)) svc.submit_labels(label_for(*t, who));
    }
    CHECK(svc.agreement(1, "a", "b") == 0.81);
    CHECK(svc.agreement(1, "b", "a") == 0.81);
    CHECK(svc.agreement(1, "a", "a") == 1.0);
    svc.register_annotator("c");
    CHECK(error_code_of([&] { svc.agreement(1, "a", "c"); }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([&] { svc.agreement(2, "a", "b"); }) == ErrorCode::invalid_argument);
}

TEST_CASE("agreement survives a later merge of the opinions used") {
    Fixture f(2);
    AnnotationService svc(f.store, {std::chrono::minutes(30), true, {}});
    svc.register_annotator("a");
    svc.register_annotator("b");
    const auto other = f.store.create_opinion({"The UN invented climate change", {"climate-change"}, true});
    svc.publish_batch(1, f.requests(2));
    while (auto t = svc.claim_next("a")) svc.submit_labels(submission(*t, "a", {"climate-change"}, {f.hoax}));
    while (auto t = svc.claim_next("b")) svc.submit_labels(submission(*t, "b", {"climate-change"}, {other}));
    CHECK(svc.agreement(1, "a", "b") == 0.0);
    svc.merge_opinions(f.hoax, other);
    CHECK(svc.agreement(1, "a", "b") == 1.0);
}

TEST_CASE("label agreement over coded label files") {
    CodedLabels same{{"p1", {"topic:a"}}, {"p2", {"topic:b", "opinion:x"}}};
    CHECK(label_agreement(same, same) == 1.0);

    // 200 postings with a hand-built pattern of disagreements.
    Rng rng(21);
    CodedLabels a, b;
    int matches = 0;
    for (int i = 0; i < 200; ++i) {
        const auto id = "q" + std::to_string(i);
        a[id] = {"topic:t" + std::to_string(i % 4)};
        b[id] = a[id];
        switch (rng.below(4)) {
        case 0: b[id].insert("opinion:o1"); break;
        case 1: b[id] = {"topic:t9"}; break;
        default: ++matches; break;
        }
    }
    a["only-a"] = {"topic:t1"};
    CHECK(label_agreement(a, b) == static_cast<double>(matches) / 200.0);
    CHECK(error_code_of([] { label_agreement({{"x", {}}}, {{"y", {}}}); }) == ErrorCode::invalid_argument);

    std::istringstream in("p1\ttopic:a\np2\ttopic:b,opinion:x\r\np3\n");
    const auto parsed = read_coded_labels(in);
    CHECK(parsed.at("p2") == std::set<std::string>{"topic:b", "opinion:x"});
    CHECK(parsed.at("p3").empty());
    std::istringstream dup("p1\ttopic:a\np1\ttopic:b\n");
    CHECK(error_code_of([&] { read_coded_labels(dup); }) == ErrorCode::malformed_record);
}

TEST_CASE("the loop can take its labels from annotators through the service") {
    SyntheticOptions o;
    o.seed = 31;
    o.seed_labeled = 160;
    o.unlabeled = 600;
    o.test = 120;
    auto corpus = make_synthetic_corpus(o);
    LoopConfig config;
    config.folds = 2;
    config.seed = 3;

    // The service works on its own copy, as a served store would.
    OntologyStore served = corpus.store;
    AnnotationService svc(served);
    svc.register_annotator("bot");
    ServiceAnnotationSource source(svc, {std::chrono::milliseconds(2), std::chrono::seconds(60)});
    std::atomic<bool> done{false};
    std::thread annotator([&] {
        while (!done) {
            auto t = svc.claim_next("bot");
            if (!t) {
                std::this_thread::sleep_for(std::chrono::milliseconds(1));
                continue;
            }
            const auto& gold = corpus.gold.at(t->request.posting_id);
            LabelSubmission s;
            s.task_id = t->id;
            s.annotator_id = "bot";
            s.off_topic = gold.topics.empty();
            s.topics = gold.topics;
            for (const auto& statement : gold.opinion_statements) {
                const auto& op = corpus.opinions.at(statement);
                s.new_opinions.push_back({statement, op.topic_ids, op.conspiracy});
            }
            svc.submit_labels(s);
        }
    });

    AugmentationLoop via_service(corpus.store, config);
    via_service.start();
    const auto& rec = via_service.run_iteration(source);
    done = true;
    annotator.join();

    AugmentationLoop via_oracle(corpus.store, config);
    auto oracle = corpus.oracle();
    const auto& expected = via_oracle.run_iteration(oracle);
    CHECK(rec.labeled == expected.labeled);
    CHECK(svc.progress(1).finalized == svc.tasks(1).size());
    for (const auto& row : rec.manifest) {
        const auto label = via_service.store().label_of(row.posting_id);
        CHECK(label.topics == corpus.gold.at(row.posting_id).topics);
        std::set<std::string> statements;
        for (const auto& id : label.opinions) statements.insert(via_service.store().opinion(id)->statement);
        CHECK(statements == corpus.gold.at(row.posting_id).opinion_statements);
    }
}

TEST_CASE("the service source gives up on an iteration nobody finishes") {
    Fixture f(3);
    AnnotationService svc(f.store);
    ServiceAnnotationSource source(svc, {std::chrono::milliseconds(1), std::chrono::milliseconds(20)});
    OntologyStore working = f.store;
    CHECK(error_code_of([&] { source.annotate(1, f.requests(3), working); }) == ErrorCode::annotation_incomplete);
    CHECK(working.postings_in_state(LabelState::labeled).empty());
    // A retry reuses the batch already published.
    CHECK(error_code_of([&] { source.annotate(1, f.requests(3), working); }) == ErrorCode::annotation_incomplete);
    CHECK(svc.tasks(1).size() == 3);
}

TEST_CASE("sync_opinions copies new opinions and replays merges") {
    Fixture f(1);
    OntologyStore copy = f.store;
    const auto added = f.store.create_opinion({"Bushfires are caused by greenies", {"bushfire"}, true});
    f.store.merge_opinions(f.hoax, f.arson);
    sync_opinions(f.store, copy);
    CHECK(copy.opinion(added));
    CHECK(copy.opinion(f.arson)->status == Opinion::Status::merged);
    sync_opinions(f.store, copy);
    CHECK(copy.opinions(false).size() == f.store.opinions(false).size());
}

TEST_CASE("submission bodies parse or fail with invalid_argument") {
    const auto s = submission_from_json("t1", json::parse(R"({"annotator": "a", "topics": ["bushfire"], "opinions": ["op-1"],
        "new_opinions": [{"statement": "x", "topics": ["bushfire"], "conspiracy": true}]})"));
    CHECK(s.task_id == "t1");
    CHECK(s.topics == std::set<std::string>{"bushfire"});
    REQUIRE(s.new_opinions.size() == 1);
    CHECK(s.new_opinions[0].conspiracy);
    CHECK(error_code_of([] { submission_from_json("t", json::parse(R"({"topics": []})")); }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([] { submission_from_json("t", json::parse(R"({"annotator": 3})")); }) == ErrorCode::invalid_argument);
}

TEST_CASE("HTTP protocol end to end") {
    Fixture f(5);
    FakeClock clock;
    AnnotationService svc(f.store, {std::chrono::minutes(30), false, clock.fn()});
    AnnotationHttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    server.start();
    httplib::Client client("127.0.0.1", port);

    std::vector<json> responses;
    auto call = [&](httplib::Result r) {
        REQUIRE(r);
        auto j = json::parse(r->body);
        responses.push_back(j);
        return std::make_pair(r->status, j);
    };
    auto post = [&](const std::string& path, const json& body) { return call(client.Post(path, body.dump(), "application/json")); };
    auto get = [&](const std::string& path) { return call(client.Get(path)); };

    CHECK(post("/v1/annotators", {{"id", "ann"}}).first == 201);
    json selections = json::array();
    for (int i = 0; i < 3; ++i) selections.push_back({{"posting_id", "p00" + std::to_string(i)}, {"topic", "climate-change"}});
    auto [st, pub] = post("/v1/iterations/1/batch", {{"selections", selections}});
    CHECK(st == 201);
    CHECK(pub.at("task_ids").size() == 3);
    auto again = post("/v1/iterations/1/batch", {{"selections", selections}});
    CHECK(again.first == 409);
    CHECK(again.second.at("error").at("code") == "already_published");

    auto [s1, next] = get("/v1/tasks/next?annotator=ann");
    CHECK(s1 == 200);
    const auto task_id = next.at("task").at("task_id").get<std::string>();
    CHECK(next.at("task").at("posting").at("text") == "posting 0");

    auto [s2, receipt] = post("/v1/tasks/" + task_id + "/labels",
                              {{"annotator", "ann"}, {"topics", {"climate-change"}}, {"opinions", {f.hoax}}});
    CHECK(s2 == 200);
    CHECK(receipt.at("triples_written").get<int>() >= 2);

    auto [s3, bad] = post("/v1/tasks/" + task_id + "/labels", {{"annotator", "ann"}, {"topics", {"climate-change"}}});
    CHECK(s3 == 409);
    CHECK(bad.at("error").at("code") == "not_claimed");

    const auto second = get("/v1/tasks/next?annotator=ann").second.at("task").at("task_id").get<std::string>();
    auto [s4, stray] = post("/v1/tasks/" + second + "/labels",
                            {{"annotator", "ann"}, {"topics", {"covid-19"}}, {"opinions", {f.hoax}}});
    CHECK(s4 == 400);
    CHECK(stray.at("error").at("code") == "invalid_argument");
    clock.t += std::chrono::hours(1);
    auto [s5, stale] = post("/v1/tasks/" + second + "/labels", {{"annotator", "ann"}, {"topics", {"covid-19"}}});
    CHECK(s5 == 409);
    CHECK(stale.at("error").at("code") == "stale_lease");

    CHECK(get("/v1/tasks/next?annotator=nobody").first == 403);
    CHECK(get("/v1/tasks/next").first == 400);
    CHECK(post("/v1/tasks/i1-0001/labels", json::object()).first == 400);
    CHECK(client.Post("/v1/annotators", "{not json", "application/json")->status == 400);
    CHECK(get("/v1/nowhere").first == 404);

    auto [s6, created] = post("/v1/opinions", {{"statement", "Lockdowns are a plot"}, {"topics", {"covid-19"}}, {"conspiracy", true}});
    CHECK(s6 == 201);
    CHECK(created.at("opinion").at("conspiracy") == true);
    const auto dup = post("/v1/opinions", {{"statement", "The UN made up warming"}, {"topics", {"climate-change"}}});
    const auto dup_id = dup.second.at("opinion").at("id").get<std::string>();
    auto [s7, merged] = post("/v1/opinions/" + f.hoax + "/merge", {{"absorb", dup_id}});
    CHECK(s7 == 200);
    CHECK(merged.at("opinion").at("id") == f.hoax);
    CHECK(f.store.opinion(dup_id)->status == Opinion::Status::merged);
    CHECK(post("/v1/opinions/" + f.hoax + "/merge", {{"absorb", f.hoax}}).first == 400);
    CHECK(post("/v1/opinions/op-404/merge", {{"absorb", f.hoax}}).first == 404);

    auto [s8, progress] = get("/v1/iterations/1/progress");
    CHECK(s8 == 200);
    CHECK(progress.at("submitted") == 1);
    CHECK(progress.at("open") == 2);
    CHECK(progress.at("total") == 3);

    auto [s9, ops] = get("/v1/opinions?topic=covid-19");
    CHECK(s9 == 200);
    CHECK(ops.at("opinions").size() == 1);
    auto [s10, topics] = get("/v1/topics");
    CHECK(topics.at("topics").size() == 4);

    for (const auto& r : responses) check_blind(r, "response");
    server.stop();
}
