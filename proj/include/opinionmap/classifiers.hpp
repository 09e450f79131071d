#pragma once

#include "opinionmap/logistic.hpp"
#include "opinionmap/ontology.hpp"
#include "opinionmap/text_features.hpp"

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace opinionmap {

struct LabeledExample {
    std::string posting_id;
    FeatureVector features;
    PostingLabel label;
};

// Binary classifier deciding whether a posting is about one topic.
struct TopicClassifier {
    std::string topic_id;
    LogisticModel model;
    int trained_on_iteration = 0;
    Hyperparameters hyperparameters;
    std::uint64_t vocabulary_hash = 0;

    double probability(const FeatureVector& x) const { return model.probability(x); }
    bool operator==(const TopicClassifier&) const = default;
};

// One-vs-rest opinion models for the active opinions of one topic.
struct OpinionClassifier {
    std::string topic_id;
    std::vector<std::string> opinion_ids;
    std::vector<LogisticModel> models;
    std::vector<double> thresholds;
    std::uint64_t vocabulary_hash = 0;
    Hyperparameters hyperparameters;

    bool operator==(const OpinionClassifier&) const = default;
};

struct TopicPrediction {
    std::string topic_id;
    bool label = false;
    double probability = 0.5;  // p(y = 1 | x)

    // p(y_hat | x) = max(p, 1 - p)
    double confidence() const { return probability >= 0.5 ? probability : 1.0 - probability; }
};

struct Prediction {
    std::string posting_id;
    std::vector<TopicPrediction> topics;
    std::map<std::string, double> opinion_probabilities;  // only for predicted topics
    std::set<std::string> opinions;

    std::set<std::string> predicted_topics() const;
    bool off_topic() const { return predicted_topics().empty(); }
};

// Positive examples are the postings labeled with the topic; every other
// labeled posting (other topics and off-topic) is a negative.
TopicClassifier train_topic_classifier(const std::string& topic_id, std::span<const LabeledExample> labeled,
                                       const Hyperparameters& hp, const Vocabulary& vocab, std::uint64_t seed,
                                       int iteration = 0);

// Trains on the postings labeled with the topic only. Opinions without any
// positive example still get a model (it learns a low prior).
OpinionClassifier train_opinion_classifier(const std::string& topic_id, const std::vector<std::string>& opinion_ids,
                                           std::span<const LabeledExample> labeled, const Hyperparameters& hp,
                                           const Vocabulary& vocab, std::uint64_t seed, double threshold = 0.5);

// The trained two-level stack over one frozen vocabulary.
class ClassifierStack {
public:
    ClassifierStack(std::shared_ptr<const Vocabulary> vocabulary, std::vector<TopicClassifier> topics,
                    std::vector<OpinionClassifier> opinions = {});

    const Vocabulary& vocabulary() const { return *vocabulary_; }
    std::shared_ptr<const Vocabulary> vocabulary_ptr() const { return vocabulary_; }
    const std::vector<TopicClassifier>& topic_classifiers() const { return topics_; }
    const std::vector<OpinionClassifier>& opinion_classifiers() const { return opinions_; }
    const TopicClassifier& topic_classifier(const std::string& topic_id) const;

    std::vector<TopicPrediction> predict_topics(const FeatureVector& x) const;
    // Only consults opinion classifiers of the given predicted topics.
    Prediction predict_opinions(const FeatureVector& x, std::vector<TopicPrediction> topics) const;
    Prediction predict(const std::string& posting_id, const std::string& text) const;

    // Counts how many opinion models ran, for gate checks.
    std::size_t opinion_model_invocations() const { return *invocations_; }

private:
    std::shared_ptr<const Vocabulary> vocabulary_;
    std::vector<TopicClassifier> topics_;
    std::vector<OpinionClassifier> opinions_;
    std::shared_ptr<std::atomic<std::size_t>> invocations_ = std::make_shared<std::atomic<std::size_t>>(0);
};

// Throws vocabulary_mismatch when a classifier was trained on another feature space.
void check_vocabulary(const Vocabulary& vocab, std::uint64_t classifier_hash, const std::string& what);

struct TopicScores {
    double accuracy = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// F1 on the positive class; 0 when there are no true positives.
TopicScores score_binary(std::span<const std::uint8_t> gold, std::span<const std::uint8_t> predicted);

struct EvalReport {
    enum class Source { cross_validation, test_set };

    Source source = Source::test_set;
    std::map<std::string, TopicScores> per_topic;
    double macro_accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::string> warnings;

    // Recomputes macro values as arithmetic means of the per-topic values.
    void finalize();
};

std::string_view to_string(EvalReport::Source s);

EvalReport evaluate(const std::vector<TopicClassifier>& classifiers, const Vocabulary& vocab,
                    std::span<const LabeledExample> test_set);

struct CrossValidationOptions {
    int folds = 5;
    // Number of grid points tried by the inner random search; 0 disables the
    // search and uses `base` as is.
    int search_budget = 0;
    std::vector<double> regularization_grid = {0.01, 0.1, 1.0, 10.0};
    Hyperparameters base;
    std::uint64_t seed = 0;
};

struct CrossValidationResult {
    EvalReport report;
    std::map<std::string, Hyperparameters> best;
};

// Stratified seeded fold assignment. A class with fewer than `k` members is
// dealt together with the remainder of the larger class and a warning is added.
std::vector<int> stratified_folds(std::span<const std::uint8_t> labels, int k, std::uint64_t seed,
                                  std::vector<std::string>* warnings = nullptr);

// Outer k-fold estimate per topic; with a search budget, each outer training
// split runs an inner k-fold random search over the regularization grid.
CrossValidationResult cross_validate(std::span<const LabeledExample> labeled, const std::vector<std::string>& topic_ids,
                                     const Vocabulary& vocab, const CrossValidationOptions& options);

void write_topic_classifier(std::ostream& out, const TopicClassifier& c);
TopicClassifier read_topic_classifier(std::istream& in);
void write_opinion_classifier(std::ostream& out, const OpinionClassifier& c);
OpinionClassifier read_opinion_classifier(std::istream& in);

std::string hash_hex(std::uint64_t h);

// A model directory: vocabulary.txt, topic-<id>.model, opinion-<id>.model.
void write_stack(const ClassifierStack& stack, const std::filesystem::path& dir);
ClassifierStack read_stack(const std::filesystem::path& dir);

}  // namespace opinionmap
