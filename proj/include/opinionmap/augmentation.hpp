#pragma once

#include "opinionmap/classifiers.hpp"
#include "opinionmap/external_classifier.hpp"
#include "opinionmap/ontology.hpp"
#include "opinionmap/sampler.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace opinionmap {

// What an annotator gets to see for one selection. There is deliberately no
// field for scores, predicted labels or the sampling strategy.
struct AnnotationRequest {
    std::string posting_id;
    std::string text;
    Platform platform = Platform::other;
    std::optional<std::string> place_id;
    TimePoint timestamp{};
    std::string topic_context;
};

nlohmann::json to_json(const AnnotationRequest& r);

// Labels every requested posting in `working` (creating opinions as needed).
// Postings it leaves unlabeled make the iteration incomplete.
class AnnotationSource {
public:
    virtual ~AnnotationSource() = default;
    virtual void annotate(int iteration, const std::vector<AnnotationRequest>& requests, OntologyStore& working) = 0;
};

// Gold labels keyed by posting id. Opinions are given by statement so that
// an opinion unknown to the store is created on first use.
struct GoldLabel {
    std::set<std::string> topics;
    std::set<std::string> opinion_statements;
};

struct GoldOpinion {
    std::string statement;
    std::set<std::string> topic_ids;
    bool conspiracy = false;
};

class ScriptedOracle : public AnnotationSource {
public:
    ScriptedOracle(std::map<std::string, GoldLabel> labels, std::map<std::string, GoldOpinion> opinions);

    void annotate(int iteration, const std::vector<AnnotationRequest>& requests, OntologyStore& working) override;

    // Every request ever delivered, for blindness checks.
    const std::vector<AnnotationRequest>& seen() const { return seen_; }

    // JSONL, one {"id", "topics", "opinions"} object per line, plus an
    // optional leading {"opinion": {...}} record per opinion statement.
    static ScriptedOracle load(std::istream& in);
    void save(std::ostream& out) const;

    const std::map<std::string, GoldLabel>& labels() const { return labels_; }

private:
    std::map<std::string, GoldLabel> labels_;
    std::map<std::string, GoldOpinion> opinions_;
    std::vector<AnnotationRequest> seen_;
};

// Scores a pool for one topic. The default scorer uses the native topic
// classifier; an external model can be swapped in without changing the loop.
class PoolScorer {
public:
    struct Item {
        std::string_view id;
        std::string_view text;
        const FeatureVector* features;
    };

    virtual ~PoolScorer() = default;
    // Returns p(y = 1 | x) per item, in order.
    virtual std::vector<double> score(const TopicClassifier& native, int iteration, std::span<const Item> items) = 0;
};

class NativeScorer : public PoolScorer {
public:
    std::vector<double> score(const TopicClassifier& native, int iteration, std::span<const Item> items) override;
};

// Forwards to an external classifier and validates every response. Any
// failure propagates and leaves the loop state untouched.
class ExternalScorer : public PoolScorer {
public:
    explicit ExternalScorer(ExternalClassifier& backend) : backend_(backend) {}
    std::vector<double> score(const TopicClassifier& native, int iteration, std::span<const Item> items) override;

private:
    ExternalClassifier& backend_;
};

struct LoopConfig {
    BatchSizes sizes;
    std::size_t cap = 100;
    double epsilon = 0.005;
    int max_iterations = 20;
    int folds = 5;
    Hyperparameters hyperparameters;
    double opinion_threshold = 0.5;
    VocabularyOptions vocabulary;
    std::uint64_t seed = 0;
    bool train_opinions = true;
};

enum class RunKind { hitl, baseline };
std::string_view to_string(RunKind k);

struct IterationRecord {
    int iteration = 0;
    RunKind kind = RunKind::hitl;
    std::vector<ManifestRow> manifest;
    EvalReport cv_report;
    EvalReport test_report;
    std::optional<double> gain;  // test macro-F1(i) - test macro-F1(i-1)
    double cv_test_gap_accuracy = 0.0;
    double cv_test_gap_f1 = 0.0;
    bool converged = false;
    std::string reason;
    std::size_t labeled = 0;
    std::size_t unlabeled = 0;
    std::size_t new_labeled = 0;
    std::size_t active_opinions = 0;
};

nlohmann::json to_json(const IterationRecord& r);
nlohmann::json to_json(const EvalReport& r);

struct ConvergenceDecision {
    bool converged = false;
    std::string reason;
};

// Stops when the latest test macro-F1 gain is below epsilon (a loss counts as
// no gain). The cv-test gap trend is reported alongside.
ConvergenceDecision check_convergence(std::span<const IterationRecord> records, double epsilon);

// Drives sample -> annotate -> retrain -> evaluate over a store whose
// labeled postings form L_0 and whose test-reserved postings form X_test.
class AugmentationLoop {
public:
    // Fits the vocabulary on every non-test posting unless one is given.
    AugmentationLoop(OntologyStore store, LoopConfig config, std::shared_ptr<const Vocabulary> vocabulary = nullptr);

    // Trains on L_0 and records iteration 0. Runs implicitly before the first
    // iteration; call it directly after swapping the scorer to evaluate L_0.
    const IterationRecord& start();

    // Runs one iteration. On any error the loop state is unchanged.
    const IterationRecord& run_iteration(AnnotationSource& source, RunKind kind = RunKind::hitl);

    // Iterates until convergence or the iteration cap.
    const std::vector<IterationRecord>& run(AnnotationSource& source, RunKind kind = RunKind::hitl);

    // nullptr restores the native scorer.
    void set_scorer(PoolScorer* scorer) { scorer_ = scorer ? scorer : &native_scorer_; }
    // Called after every retraining with the new stack.
    void on_trained(std::function<void(const std::shared_ptr<const ClassifierStack>&, int)> hook);

    const std::vector<IterationRecord>& records() const { return records_; }
    const OntologyStore& store() const { return store_; }
    std::shared_ptr<const ClassifierStack> classifiers() const { return stack_; }
    const Vocabulary& vocabulary() const { return *vocabulary_; }
    std::shared_ptr<const Vocabulary> vocabulary_ptr() const { return vocabulary_; }
    const LoopConfig& config() const { return config_; }
    int iteration() const { return records_.empty() ? -1 : records_.back().iteration; }

    void write_ledger(std::ostream& out) const;
    // iteration, kind, topic, source, accuracy, f1
    void write_metrics(std::ostream& out) const;
    // vocabulary.txt, topic-<id>.model, opinion-<id>.model
    void write_models(const std::filesystem::path& dir) const;

private:
    struct Trained {
        std::shared_ptr<const ClassifierStack> stack;
        EvalReport cv;
        EvalReport test;
    };

    const FeatureVector& features(const std::string& posting_id, const OntologyStore& store);
    std::vector<LabeledExample> examples(const OntologyStore& store, std::span<const std::string> ids);
    Trained train_and_evaluate(const OntologyStore& store, int iteration);
    EvalReport test_report(const OntologyStore& store, const ClassifierStack& stack, int iteration);
    IterationRecord make_record(int iteration, RunKind kind, const Trained& trained, const OntologyStore& store) const;

    OntologyStore store_;
    LoopConfig config_;
    std::shared_ptr<const Vocabulary> vocabulary_;
    std::unordered_map<std::string, FeatureVector> cache_;
    std::shared_ptr<const ClassifierStack> stack_;
    std::vector<IterationRecord> records_;
    NativeScorer native_scorer_;
    PoolScorer* scorer_ = &native_scorer_;
    std::function<void(const std::shared_ptr<const ClassifierStack>&, int)> hook_;
};

// Random-only batches of the same per-topic size for `iterations` rounds from
// the same L_0 and X_test.
std::vector<IterationRecord> run_baseline(const OntologyStore& initial, LoopConfig config, AnnotationSource& source,
                                          int iterations, std::shared_ptr<const Vocabulary> vocabulary = nullptr);

}  // namespace opinionmap
