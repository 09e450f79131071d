#include "opinionmap/augmentation.hpp"

#include "opinionmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace opinionmap {

using nlohmann::json;

json to_json(const AnnotationRequest& r) {
    json j = {{"posting_id", r.posting_id},
              {"text", r.text},
              {"platform", std::string(to_string(r.platform))},
              {"timestamp", format_timestamp(r.timestamp)},
              {"topic_context", r.topic_context}};
    if (r.place_id) j["place_id"] = *r.place_id;
    return j;
}

ScriptedOracle::ScriptedOracle(std::map<std::string, GoldLabel> labels, std::map<std::string, GoldOpinion> opinions)
    : labels_(std::move(labels)), opinions_(std::move(opinions)) {}

void ScriptedOracle::annotate(int iteration, const std::vector<AnnotationRequest>& requests, OntologyStore& working) {
    std::map<std::string, std::string> by_statement;
    for (const auto& op : working.opinions(true)) by_statement.emplace(op.statement, op.id);

    std::set<std::string> done;
    for (const auto& request : requests) {
        seen_.push_back(request);
        if (!done.insert(request.posting_id).second) continue;
        auto gold = labels_.find(request.posting_id);
        if (gold == labels_.end()) continue;
        PostingLabel label;
        label.topics = gold->second.topics;
        for (const auto& statement : gold->second.opinion_statements) {
            auto known = by_statement.find(statement);
            if (known == by_statement.end()) {
                NewOpinion proposal{statement, gold->second.topics, false};
                if (auto meta = opinions_.find(statement); meta != opinions_.end()) {
                    proposal.topic_ids = meta->second.topic_ids;
                    proposal.conspiracy = meta->second.conspiracy;
                }
                known = by_statement.emplace(statement, working.create_opinion(proposal)).first;
            }
            label.opinions.insert(known->second);
        }
        working.apply_label(request.posting_id, label, iteration);
    }
}

ScriptedOracle ScriptedOracle::load(std::istream& in) {
    std::map<std::string, GoldLabel> labels;
    std::map<std::string, GoldOpinion> opinions;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            if (j.contains("opinion")) {
                const auto& o = j.at("opinion");
                GoldOpinion op;
                op.statement = o.at("statement").get<std::string>();
                op.topic_ids = o.at("topics").get<std::set<std::string>>();
                op.conspiracy = o.value("conspiracy", false);
                opinions[op.statement] = std::move(op);
                continue;
            }
            GoldLabel label;
            label.topics = j.at("topics").get<std::set<std::string>>();
            label.opinion_statements = j.value("opinions", std::set<std::string>{});
            labels[j.at("id").get<std::string>()] = std::move(label);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::malformed_record, "gold labels line " + std::to_string(number) + ": " + e.what());
        }
    }
    return ScriptedOracle(std::move(labels), std::move(opinions));
}

void ScriptedOracle::save(std::ostream& out) const {
    for (const auto& [statement, op] : opinions_) {
        out << json{{"opinion", {{"statement", statement}, {"topics", op.topic_ids}, {"conspiracy", op.conspiracy}}}}.dump()
            << '\n';
    }
    for (const auto& [id, label] : labels_) {
        out << json{{"id", id}, {"topics", label.topics}, {"opinions", label.opinion_statements}}.dump() << '\n';
    }
}

std::vector<double> NativeScorer::score(const TopicClassifier& native, int, std::span<const Item> items) {
    std::vector<double> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(native.probability(*item.features));
    return out;
}

std::vector<double> ExternalScorer::score(const TopicClassifier& native, int iteration, std::span<const Item> items) {
    ClassifyRequest request;
    request.topic_id = native.topic_id;
    request.iteration = iteration;
    request.items.reserve(items.size());
    for (const auto& item : items) request.items.push_back({std::string(item.id), std::string(item.text)});
    const auto results = backend_.classify(request);
    validate_response(request, results);
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& r : results) out.push_back(r.probability);
    return out;
}

std::string_view to_string(RunKind k) { return k == RunKind::hitl ? "hitl" : "baseline"; }

json to_json(const EvalReport& r) {
    json topics = json::object();
    for (const auto& [topic, s] : r.per_topic) {
        topics[topic] = {{"accuracy", s.accuracy}, {"f1", s.f1}, {"tp", s.tp}, {"fp", s.fp}, {"tn", s.tn}, {"fn", s.fn}};
    }
    return {{"source", std::string(to_string(r.source))},
            {"macro_accuracy", r.macro_accuracy},
            {"macro_f1", r.macro_f1},
            {"per_topic", std::move(topics)},
            {"warnings", r.warnings}};
}

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

json to_json(const IterationRecord& r) {
    json manifest = json::array();
    for (const auto& row : r.manifest) {
        manifest.push_back({{"topic", row.topic_id},
                            {"strategy", std::string(to_string(row.strategy))},
                            {"posting_id", row.posting_id},
                            {"score", row.score}});
    }
    return {{"iteration", r.iteration},
            {"kind", std::string(to_string(r.kind))},
            {"labeled", r.labeled},
            {"unlabeled", r.unlabeled},
            {"new_labeled", r.new_labeled},
            {"active_opinions", r.active_opinions},
            {"gain", r.gain ? json(*r.gain) : json(nullptr)},
            {"cv_test_gap", {{"accuracy", r.cv_test_gap_accuracy}, {"f1", r.cv_test_gap_f1}}},
            {"converged", r.converged},
            {"reason", r.reason},
            {"cv_report", to_json(r.cv_report)},
            {"test_report", to_json(r.test_report)},
            {"manifest", std::move(manifest)}};
}

ConvergenceDecision check_convergence(std::span<const IterationRecord> records, double epsilon) {
    if (records.size() < 2) return {false, "fewer than two iterations"};
    const auto& last = records[records.size() - 1];
    const auto& prev = records[records.size() - 2];
    const double gain = last.gain ? *last.gain : last.test_report.macro_f1 - prev.test_report.macro_f1;
    const double gap = last.cv_test_gap_f1;
    const double prev_gap = prev.cv_test_gap_f1;
    const char* trend = gap < prev_gap ? "narrowing" : gap > prev_gap ? "widening" : "unchanged";
    ConvergenceDecision d;
    d.converged = gain < epsilon;
    d.reason = std::string("test macro-F1 gain ") + fixed(gain) + (d.converged ? " < " : " >= ") + "epsilon " +
               fixed(epsilon) + "; cv-test F1 gap " + fixed(gap) + " (" + trend + " from " + fixed(prev_gap) + ")";
    return d;
}

AugmentationLoop::AugmentationLoop(OntologyStore store, LoopConfig config, std::shared_ptr<const Vocabulary> vocabulary)
    : store_(std::move(store)), config_(std::move(config)), vocabulary_(std::move(vocabulary)) {
    const auto topics = store_.topics();
    if (topics.empty()) throw Error(ErrorCode::config_error, "the store has no topics");
    validate_batch_sizes(config_.sizes, topics.size(), config_.cap);
    if (config_.folds < 2) throw Error(ErrorCode::config_error, "folds must be at least 2");
    if (!(config_.epsilon >= 0.0)) throw Error(ErrorCode::config_error, "epsilon must be non-negative");
    if (config_.max_iterations < 0) throw Error(ErrorCode::config_error, "max_iterations must be non-negative");
    if (store_.test_postings().empty()) throw Error(ErrorCode::empty_input, "no test-reserved postings");
    if (!vocabulary_) {
        std::vector<std::string> texts;
        for (auto state : {LabelState::labeled, LabelState::unlabeled}) {
            for (const auto& id : store_.postings_in_state(state)) texts.push_back(store_.posting(id)->text);
        }
        vocabulary_ = std::make_shared<const Vocabulary>(fit_vocabulary(texts, config_.vocabulary));
    }
}

void AugmentationLoop::on_trained(std::function<void(const std::shared_ptr<const ClassifierStack>&, int)> hook) {
    hook_ = std::move(hook);
}

const FeatureVector& AugmentationLoop::features(const std::string& posting_id, const OntologyStore& store) {
    auto it = cache_.find(posting_id);
    if (it != cache_.end()) return it->second;
    const auto posting = store.posting(posting_id);
    if (!posting) throw Error(ErrorCode::unknown_entity, "unknown posting '" + posting_id + "'");
    return cache_.emplace(posting_id, vectorize(posting->text, *vocabulary_)).first->second;
}

std::vector<LabeledExample> AugmentationLoop::examples(const OntologyStore& store, std::span<const std::string> ids) {
    std::vector<LabeledExample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back({id, features(id, store), store.label_of(id)});
    return out;
}

EvalReport AugmentationLoop::test_report(const OntologyStore& store, const ClassifierStack& stack, int iteration) {
    const auto test_ids = store.test_postings();
    std::vector<std::optional<Posting>> postings;
    std::vector<PoolScorer::Item> items;
    postings.reserve(test_ids.size());
    for (const auto& id : test_ids) postings.push_back(store.posting(id));
    for (std::size_t i = 0; i < test_ids.size(); ++i) {
        items.push_back({test_ids[i], postings[i]->text, &features(test_ids[i], store)});
    }
    std::vector<std::set<std::string>> gold;
    for (const auto& id : test_ids) gold.push_back(store.query_topics(id));

    EvalReport report;
    report.source = EvalReport::Source::test_set;
    for (const auto& classifier : stack.topic_classifiers()) {
        const auto p = scorer_->score(classifier, iteration, items);
        if (p.size() != items.size()) throw Error(ErrorCode::invariant_violation, "scorer returned the wrong item count");
        std::vector<std::uint8_t> truth, predicted;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw Error(ErrorCode::invariant_violation, "scorer probability outside [0, 1]");
            truth.push_back(gold[i].count(classifier.topic_id) ? 1 : 0);
            predicted.push_back(p[i] >= 0.5 ? 1 : 0);
        }
        report.per_topic[classifier.topic_id] = score_binary(truth, predicted);
    }
    report.finalize();
    return report;
}

AugmentationLoop::Trained AugmentationLoop::train_and_evaluate(const OntologyStore& store, int iteration) {
    const auto train_ids = store.training_postings();
    const auto test_ids = store.test_postings();
    const std::set<std::string> test_set(test_ids.begin(), test_ids.end());
    for (const auto& id : train_ids) {
        if (test_set.count(id)) throw Error(ErrorCode::invariant_violation, "test posting '" + id + "' in the training set");
    }
    const auto labeled = examples(store, train_ids);
    const auto iteration_seed = derive_seed(config_.seed, 0x7261696eull, static_cast<std::uint64_t>(iteration));

    std::vector<std::string> topic_ids;
    std::vector<TopicClassifier> topics;
    for (const auto& topic : store.topics()) {
        topic_ids.push_back(topic.id);
        topics.push_back(train_topic_classifier(topic.id, labeled, config_.hyperparameters, *vocabulary_, iteration_seed,
                                                iteration));
    }
    std::vector<OpinionClassifier> opinions;
    if (config_.train_opinions) {
        const auto active = store.opinions(true);
        for (const auto& topic : topic_ids) {
            std::vector<std::string> ids;
            for (const auto& op : active) {
                if (op.topic_ids.count(topic)) ids.push_back(op.id);
            }
            opinions.push_back(train_opinion_classifier(topic, ids, labeled, config_.hyperparameters, *vocabulary_,
                                                        iteration_seed, config_.opinion_threshold));
        }
    }

    Trained out;
    out.stack = std::make_shared<const ClassifierStack>(vocabulary_, std::move(topics), std::move(opinions));
    CrossValidationOptions cv;
    cv.folds = config_.folds;
    cv.base = config_.hyperparameters;
    cv.seed = derive_seed(config_.seed, 0x6376ull, static_cast<std::uint64_t>(iteration));
    out.cv = cross_validate(labeled, topic_ids, *vocabulary_, cv).report;

    if (hook_) hook_(out.stack, iteration);
    try {
        out.test = test_report(store, *out.stack, iteration);
    } catch (...) {
        if (hook_ && stack_) hook_(stack_, this->iteration());
        throw;
    }
    return out;
}

IterationRecord AugmentationLoop::make_record(int iteration, RunKind kind, const Trained& trained,
                                              const OntologyStore& store) const {
    IterationRecord r;
    r.iteration = iteration;
    r.kind = kind;
    r.cv_report = trained.cv;
    r.test_report = trained.test;
    r.cv_test_gap_accuracy = std::fabs(trained.cv.macro_accuracy - trained.test.macro_accuracy);
    r.cv_test_gap_f1 = std::fabs(trained.cv.macro_f1 - trained.test.macro_f1);
    r.labeled = store.training_postings().size();
    r.unlabeled = store.postings_in_state(LabelState::unlabeled).size();
    r.active_opinions = store.opinions(true).size();
    if (!records_.empty()) {
        r.gain = trained.test.macro_f1 - records_.back().test_report.macro_f1;
        r.new_labeled = r.labeled - records_.back().labeled;
    }
    return r;
}

const IterationRecord& AugmentationLoop::start() {
    if (records_.empty()) {
        auto trained = train_and_evaluate(store_, 0);
        auto record = make_record(0, RunKind::hitl, trained, store_);
        record.reason = "initial training on the seed set";
        stack_ = trained.stack;
        records_.push_back(std::move(record));
    }
    return records_.front();
}

const IterationRecord& AugmentationLoop::run_iteration(AnnotationSource& source, RunKind kind) {
    start();
    const int i = iteration() + 1;
    OntologyStore working = store_;

    const auto unlabeled = working.postings_in_state(LabelState::unlabeled);
    std::vector<std::optional<Posting>> postings;
    postings.reserve(unlabeled.size());
    for (const auto& id : unlabeled) postings.push_back(working.posting(id));
    std::vector<PoolScorer::Item> items;
    items.reserve(unlabeled.size());
    for (std::size_t k = 0; k < unlabeled.size(); ++k) {
        items.push_back({unlabeled[k], postings[k]->text, &features(unlabeled[k], working)});
    }

    std::vector<TopicPool> pools;
    for (const auto& classifier : stack_->topic_classifiers()) {
        TopicPool pool;
        pool.topic_id = classifier.topic_id;
        std::vector<double> p(items.size(), 0.5);
        if (kind == RunKind::hitl) {
            p = scorer_->score(classifier, i, items);
            if (p.size() != items.size()) throw Error(ErrorCode::invariant_violation, "scorer returned the wrong item count");
        }
        pool.postings.reserve(items.size());
        for (std::size_t k = 0; k < items.size(); ++k) pool.postings.push_back({unlabeled[k], p[k]});
        pools.push_back(std::move(pool));
    }
    BatchSizes sizes = config_.sizes;
    if (kind == RunKind::baseline) sizes = BatchSizes{0, 0, config_.sizes.per_topic()};
    const auto batch_seed = derive_seed(config_.seed, kind == RunKind::hitl ? 0x68ull : 0x62ull, static_cast<std::uint64_t>(i));
    const auto batch = compose_batch(i, pools, sizes, batch_seed, config_.cap);
    const auto manifest = batch.manifest();

    std::vector<AnnotationRequest> requests;
    requests.reserve(manifest.size());
    for (const auto& row : manifest) {
        const auto posting = working.posting(row.posting_id);
        if (!posting || posting->label_state != LabelState::unlabeled) {
            throw Error(ErrorCode::invariant_violation, "batch member '" + row.posting_id + "' is not in the unlabeled pool");
        }
        requests.push_back({posting->id, posting->text, posting->platform, posting->place_id, posting->timestamp, row.topic_id});
    }

    source.annotate(i, requests, working);

    std::size_t missing = 0;
    for (const auto& id : batch.posting_ids()) {
        if (working.posting(id)->label_state != LabelState::labeled) ++missing;
    }
    if (missing > 0) {
        throw Error(ErrorCode::annotation_incomplete, "iteration " + std::to_string(i) + ": " + std::to_string(missing) +
                                                          " sampled postings are still unlabeled");
    }
    if (auto problem = working.check_integrity()) throw Error(ErrorCode::invariant_violation, *problem);

    auto trained = train_and_evaluate(working, i);
    auto record = make_record(i, kind, trained, working);
    record.manifest = manifest;
    std::vector<IterationRecord> all(records_.begin(), records_.end());
    all.push_back(record);
    const auto decision = check_convergence(all, config_.epsilon);
    record.converged = decision.converged;
    record.reason = decision.reason;

    store_ = std::move(working);
    stack_ = trained.stack;
    records_.push_back(std::move(record));
    return records_.back();
}

const std::vector<IterationRecord>& AugmentationLoop::run(AnnotationSource& source, RunKind kind) {
    start();
    while (!records_.back().converged && iteration() < config_.max_iterations) run_iteration(source, kind);
    return records_;
}

void AugmentationLoop::write_ledger(std::ostream& out) const {
    for (const auto& r : records_) out << to_json(r).dump() << '\n';
}

void AugmentationLoop::write_metrics(std::ostream& out) const {
    out << "iteration,kind,topic,source,accuracy,f1\n";
    for (const auto& r : records_) {
        for (const auto* report : {&r.cv_report, &r.test_report}) {
            const auto source = to_string(report->source);
            for (const auto& [topic, s] : report->per_topic) {
                out << r.iteration << ',' << to_string(r.kind) << ',' << topic << ',' << source << ','
                    << format_double(s.accuracy) << ',' << format_double(s.f1) << '\n';
            }
            out << r.iteration << ',' << to_string(r.kind) << ",macro," << source << ','
                << format_double(report->macro_accuracy) << ',' << format_double(report->macro_f1) << '\n';
        }
    }
}

void AugmentationLoop::write_models(const std::filesystem::path& dir) const {
    if (!stack_) throw Error(ErrorCode::invalid_argument, "no trained models yet");
    write_stack(*stack_, dir);
}

std::vector<IterationRecord> run_baseline(const OntologyStore& initial, LoopConfig config, AnnotationSource& source,
                                          int iterations, std::shared_ptr<const Vocabulary> vocabulary) {
    AugmentationLoop loop(initial, std::move(config), std::move(vocabulary));
    loop.start();
    for (int i = 0; i < iterations; ++i) loop.run_iteration(source, RunKind::baseline);
    return loop.records();
}

}  // namespace opinionmap
