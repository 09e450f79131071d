#include "opinionmap/classifiers.hpp"

#include "opinionmap/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace opinionmap {

std::set<std::string> Prediction::predicted_topics() const {
    std::set<std::string> out;
    for (const auto& t : topics) {
        if (t.label) out.insert(t.topic_id);
    }
    return out;
}

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void check_vocabulary(const Vocabulary& vocab, std::uint64_t classifier_hash, const std::string& what) {
    if (vocab.hash() != classifier_hash) {
        throw Error(ErrorCode::vocabulary_mismatch, what + " was trained on vocabulary " + hash_hex(classifier_hash) +
                                                        " but the featurizer uses " + hash_hex(vocab.hash()));
    }
}

namespace {

std::uint64_t topic_seed(std::uint64_t seed, const std::string& topic_id, std::uint64_t extra = 0) {
    return derive_seed(seed, fnv1a(topic_id), extra);
}

struct BinaryView {
    std::vector<const FeatureVector*> xs;
    std::vector<std::uint8_t> ys;
};

BinaryView topic_view(std::span<const LabeledExample> labeled, const std::string& topic_id) {
    BinaryView v;
    v.xs.reserve(labeled.size());
    v.ys.reserve(labeled.size());
    for (const auto& ex : labeled) {
        v.xs.push_back(&ex.features);
        v.ys.push_back(ex.label.topics.count(topic_id) ? 1 : 0);
    }
    return v;
}

BinaryView subset(const BinaryView& v, const std::vector<int>& folds, int fold, bool inside) {
    BinaryView out;
    for (std::size_t i = 0; i < v.xs.size(); ++i) {
        if ((folds[i] == fold) == inside) {
            out.xs.push_back(v.xs[i]);
            out.ys.push_back(v.ys[i]);
        }
    }
    return out;
}

bool single_class(const BinaryView& v) {
    const auto positives = std::count(v.ys.begin(), v.ys.end(), std::uint8_t{1});
    return positives == 0 || positives == static_cast<long>(v.ys.size());
}

TopicScores score_model(const LogisticModel& model, const BinaryView& test) {
    std::vector<std::uint8_t> predicted;
    predicted.reserve(test.xs.size());
    for (const auto* x : test.xs) predicted.push_back(model.probability(*x) >= 0.5 ? 1 : 0);
    return score_binary(test.ys, predicted);
}

}  // namespace

TopicClassifier train_topic_classifier(const std::string& topic_id, std::span<const LabeledExample> labeled,
                                       const Hyperparameters& hp, const Vocabulary& vocab, std::uint64_t seed,
                                       int iteration) {
    const auto view = topic_view(labeled, topic_id);
    const auto positives = std::count(view.ys.begin(), view.ys.end(), std::uint8_t{1});
    if (positives == 0 || positives == static_cast<long>(view.ys.size())) {
        throw Error(ErrorCode::single_class, "topic '" + topic_id + "': training set needs positive and negative examples (" +
                                                 std::to_string(positives) + " of " + std::to_string(view.ys.size()) +
                                                 " positive)");
    }
    TopicClassifier c;
    c.topic_id = topic_id;
    c.hyperparameters = hp;
    c.vocabulary_hash = vocab.hash();
    c.trained_on_iteration = iteration;
    c.model = train_logistic(view.xs, view.ys, vocab.size(), hp, topic_seed(seed, topic_id));
    return c;
}

OpinionClassifier train_opinion_classifier(const std::string& topic_id, const std::vector<std::string>& opinion_ids,
                                           std::span<const LabeledExample> labeled, const Hyperparameters& hp,
                                           const Vocabulary& vocab, std::uint64_t seed, double threshold) {
    OpinionClassifier c;
    c.topic_id = topic_id;
    c.opinion_ids = opinion_ids;
    std::sort(c.opinion_ids.begin(), c.opinion_ids.end());
    c.vocabulary_hash = vocab.hash();
    c.hyperparameters = hp;
    std::vector<const LabeledExample*> relevant;
    for (const auto& ex : labeled) {
        if (ex.label.topics.count(topic_id)) relevant.push_back(&ex);
    }
    std::vector<const FeatureVector*> xs;
    for (const auto* ex : relevant) xs.push_back(&ex->features);
    for (const auto& op : c.opinion_ids) {
        std::vector<std::uint8_t> ys;
        ys.reserve(relevant.size());
        for (const auto* ex : relevant) ys.push_back(ex->label.opinions.count(op) ? 1 : 0);
        c.models.push_back(train_logistic(xs, ys, vocab.size(), hp, topic_seed(seed, topic_id, fnv1a(op))));
        c.thresholds.push_back(threshold);
    }
    return c;
}

ClassifierStack::ClassifierStack(std::shared_ptr<const Vocabulary> vocabulary, std::vector<TopicClassifier> topics,
                                 std::vector<OpinionClassifier> opinions)
    : vocabulary_(std::move(vocabulary)), topics_(std::move(topics)), opinions_(std::move(opinions)) {
    if (!vocabulary_) throw Error(ErrorCode::invalid_argument, "classifier stack needs a vocabulary");
    for (const auto& t : topics_) check_vocabulary(*vocabulary_, t.vocabulary_hash, "topic classifier '" + t.topic_id + "'");
    for (const auto& o : opinions_) {
        check_vocabulary(*vocabulary_, o.vocabulary_hash, "opinion classifier '" + o.topic_id + "'");
        if (o.models.size() != o.opinion_ids.size() || o.thresholds.size() != o.opinion_ids.size()) {
            throw Error(ErrorCode::invariant_violation, "opinion classifier '" + o.topic_id + "' is inconsistent");
        }
    }
}

const TopicClassifier& ClassifierStack::topic_classifier(const std::string& topic_id) const {
    for (const auto& t : topics_) {
        if (t.topic_id == topic_id) return t;
    }
    throw Error(ErrorCode::not_found, "no classifier for topic '" + topic_id + "'");
}

std::vector<TopicPrediction> ClassifierStack::predict_topics(const FeatureVector& x) const {
    std::vector<TopicPrediction> out;
    out.reserve(topics_.size());
    for (const auto& t : topics_) {
        const double p = t.probability(x);
        out.push_back(TopicPrediction{t.topic_id, p >= 0.5, p});
    }
    return out;
}

Prediction ClassifierStack::predict_opinions(const FeatureVector& x, std::vector<TopicPrediction> topics) const {
    Prediction pred;
    pred.topics = std::move(topics);
    const auto chosen = pred.predicted_topics();
    for (const auto& oc : opinions_) {
        if (!chosen.count(oc.topic_id)) continue;
        for (std::size_t i = 0; i < oc.opinion_ids.size(); ++i) {
            invocations_->fetch_add(1, std::memory_order_relaxed);
            const double p = oc.models[i].probability(x);
            auto [it, inserted] = pred.opinion_probabilities.emplace(oc.opinion_ids[i], p);
            if (!inserted) it->second = std::max(it->second, p);
            if (p >= oc.thresholds[i]) pred.opinions.insert(oc.opinion_ids[i]);
        }
    }
    return pred;
}

Prediction ClassifierStack::predict(const std::string& posting_id, const std::string& text) const {
    const auto x = vectorize(text, *vocabulary_);
    auto pred = predict_opinions(x, predict_topics(x));
    pred.posting_id = posting_id;
    return pred;
}

TopicScores score_binary(std::span<const std::uint8_t> gold, std::span<const std::uint8_t> predicted) {
    if (gold.size() != predicted.size()) throw Error(ErrorCode::invalid_argument, "score: size mismatch");
    if (gold.empty()) throw Error(ErrorCode::empty_input, "score: no examples");
    TopicScores s;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] && predicted[i]) ++s.tp;
        else if (!gold[i] && predicted[i]) ++s.fp;
        else if (!gold[i] && !predicted[i]) ++s.tn;
        else ++s.fn;
    }
    s.accuracy = static_cast<double>(s.tp + s.tn) / static_cast<double>(gold.size());
    const double denom = 2.0 * s.tp + s.fp + s.fn;
    s.f1 = s.tp == 0 ? 0.0 : 2.0 * s.tp / denom;
    return s;
}

void EvalReport::finalize() {
    macro_accuracy = 0.0;
    macro_f1 = 0.0;
    if (per_topic.empty()) return;
    for (const auto& [topic, s] : per_topic) {
        macro_accuracy += s.accuracy;
        macro_f1 += s.f1;
    }
    macro_accuracy /= static_cast<double>(per_topic.size());
    macro_f1 /= static_cast<double>(per_topic.size());
}

std::string_view to_string(EvalReport::Source s) {
    return s == EvalReport::Source::cross_validation ? "cross-validation" : "test-set";
}

EvalReport evaluate(const std::vector<TopicClassifier>& classifiers, const Vocabulary& vocab,
                    std::span<const LabeledExample> test_set) {
    if (test_set.empty()) throw Error(ErrorCode::empty_input, "evaluate: empty test set");
    EvalReport report;
    report.source = EvalReport::Source::test_set;
    for (const auto& c : classifiers) {
        check_vocabulary(vocab, c.vocabulary_hash, "topic classifier '" + c.topic_id + "'");
        report.per_topic[c.topic_id] = score_model(c.model, topic_view(test_set, c.topic_id));
    }
    report.finalize();
    return report;
}

std::vector<int> stratified_folds(std::span<const std::uint8_t> labels, int k, std::uint64_t seed,
                                  std::vector<std::string>* warnings) {
    if (k < 2) throw Error(ErrorCode::invalid_argument, "need at least two folds");
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] ? 1 : 0].push_back(i);
    Rng rng(seed);
    rng.shuffle(by_class[0]);
    rng.shuffle(by_class[1]);

    std::vector<std::size_t> order;
    std::vector<std::size_t> remainder;
    for (int c = 1; c >= 0; --c) {
        if (by_class[c].size() >= static_cast<std::size_t>(k) || by_class[c].empty()) {
            order.insert(order.end(), by_class[c].begin(), by_class[c].end());
        } else {
            if (warnings) {
                warnings->push_back("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                                    " members (< " + std::to_string(k) + " folds); merged into the stratification remainder");
            }
            remainder.insert(remainder.end(), by_class[c].begin(), by_class[c].end());
        }
    }
    order.insert(order.end(), remainder.begin(), remainder.end());
    std::vector<int> folds(labels.size(), 0);
    for (std::size_t i = 0; i < order.size(); ++i) folds[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return folds;
}

namespace {

struct FoldEstimate {
    TopicScores mean;
    int completed = 0;
};

FoldEstimate kfold_estimate(const BinaryView& view, std::size_t dimension, const Hyperparameters& hp, int k,
                            std::uint64_t seed, std::vector<std::string>* warnings, const std::string& topic_id,
                            const std::function<Hyperparameters(const BinaryView&, std::uint64_t)>* tune = nullptr) {
    const auto folds = stratified_folds(view.ys, k, seed, warnings);
    FoldEstimate est;
    for (int f = 0; f < k; ++f) {
        const auto train = subset(view, folds, f, false);
        const auto test = subset(view, folds, f, true);
        if (test.xs.empty()) continue;
        if (single_class(train)) {
            if (warnings) warnings->push_back("topic '" + topic_id + "': fold " + std::to_string(f) + " skipped (single-class training split)");
            continue;
        }
        const auto chosen = tune ? (*tune)(train, derive_seed(seed, 101, static_cast<std::uint64_t>(f))) : hp;
        const auto model = train_logistic(train.xs, train.ys, dimension, chosen, derive_seed(seed, 7, static_cast<std::uint64_t>(f)));
        const auto s = score_model(model, test);
        est.mean.accuracy += s.accuracy;
        est.mean.f1 += s.f1;
        est.mean.tp += s.tp;
        est.mean.fp += s.fp;
        est.mean.tn += s.tn;
        est.mean.fn += s.fn;
        ++est.completed;
    }
    if (est.completed > 0) {
        est.mean.accuracy /= est.completed;
        est.mean.f1 /= est.completed;
    }
    return est;
}

}  // namespace

CrossValidationResult cross_validate(std::span<const LabeledExample> labeled, const std::vector<std::string>& topic_ids,
                                     const Vocabulary& vocab, const CrossValidationOptions& options) {
    if (options.folds < 2) throw Error(ErrorCode::invalid_argument, "cross-validation needs at least two folds");
    if (labeled.size() < static_cast<std::size_t>(options.folds)) {
        throw Error(ErrorCode::empty_input, "cross-validation needs at least as many examples as folds");
    }
    CrossValidationResult result;
    result.report.source = EvalReport::Source::cross_validation;
    const int k = options.folds;

    for (const auto& topic_id : topic_ids) {
        const auto view = topic_view(labeled, topic_id);
        const auto seed = topic_seed(options.seed, topic_id);

        std::function<Hyperparameters(const BinaryView&, std::uint64_t)> tune =
            [&](const BinaryView& train, std::uint64_t tune_seed) {
                std::vector<double> grid = options.regularization_grid;
                Rng rng(tune_seed);
                rng.shuffle(grid);
                const auto budget = std::min<std::size_t>(static_cast<std::size_t>(options.search_budget), grid.size());
                grid.resize(budget);
                Hyperparameters best = options.base;
                double best_f1 = -1.0, best_acc = -1.0;
                for (double lambda : grid) {
                    Hyperparameters hp = options.base;
                    hp.regularization = lambda;
                    const auto est = kfold_estimate(train, vocab.size(), hp, k, tune_seed, nullptr, topic_id);
                    if (est.completed == 0) continue;
                    if (est.mean.f1 > best_f1 || (est.mean.f1 == best_f1 && est.mean.accuracy > best_acc)) {
                        best_f1 = est.mean.f1;
                        best_acc = est.mean.accuracy;
                        best = hp;
                    }
                }
                return best;
            };
        const bool searching = options.search_budget > 0 && !options.regularization_grid.empty();

        const auto est = kfold_estimate(view, vocab.size(), options.base, k, seed, &result.report.warnings, topic_id,
                                        searching ? &tune : nullptr);
        if (est.completed == 0) {
            throw Error(ErrorCode::single_class, "topic '" + topic_id + "': no fold had both classes to train on");
        }
        result.report.per_topic[topic_id] = est.mean;
        result.best[topic_id] = searching ? tune(view, derive_seed(seed, 202)) : options.base;
    }
    result.report.finalize();
    return result;
}

namespace {

void write_hyperparameters(std::ostream& out, const Hyperparameters& hp) {
    out << "regularization " << format_double(hp.regularization) << '\n'
        << "epochs " << hp.epochs << '\n'
        << "learning_rate " << format_double(hp.learning_rate) << '\n';
}

std::string expect(std::istream& in, const std::string& key) {
    std::string word, value;
    if (!(in >> word) || word != key || !(in >> value)) {
        throw Error(ErrorCode::malformed_record, "model file: expected '" + key + "'");
    }
    return value;
}

Hyperparameters read_hyperparameters(std::istream& in) {
    Hyperparameters hp;
    hp.regularization = std::stod(expect(in, "regularization"));
    hp.epochs = std::stoi(expect(in, "epochs"));
    hp.learning_rate = std::stod(expect(in, "learning_rate"));
    return hp;
}

std::uint64_t parse_hash(const std::string& hex) { return std::stoull(hex, nullptr, 16); }

}  // namespace

void write_topic_classifier(std::ostream& out, const TopicClassifier& c) {
    out << "opinionmap-topic-classifier v1\n"
        << "topic " << c.topic_id << '\n'
        << "iteration " << c.trained_on_iteration << '\n'
        << "vocabulary_hash " << hash_hex(c.vocabulary_hash) << '\n';
    write_hyperparameters(out, c.hyperparameters);
    out << "dimension " << c.model.dimension() << '\n';
    write_model(out, c.model);
}

TopicClassifier read_topic_classifier(std::istream& in) {
    std::string line;
    std::getline(in, line);
    if (line != "opinionmap-topic-classifier v1") throw Error(ErrorCode::malformed_record, "not a topic classifier file");
    TopicClassifier c;
    c.topic_id = expect(in, "topic");
    c.trained_on_iteration = std::stoi(expect(in, "iteration"));
    c.vocabulary_hash = parse_hash(expect(in, "vocabulary_hash"));
    c.hyperparameters = read_hyperparameters(in);
    const auto dimension = std::stoull(expect(in, "dimension"));
    c.model = read_model(in, dimension);
    return c;
}

void write_opinion_classifier(std::ostream& out, const OpinionClassifier& c) {
    out << "opinionmap-opinion-classifier v1\n"
        << "topic " << c.topic_id << '\n'
        << "vocabulary_hash " << hash_hex(c.vocabulary_hash) << '\n';
    write_hyperparameters(out, c.hyperparameters);
    out << "opinions " << c.opinion_ids.size() << '\n';
    const std::size_t dimension = c.models.empty() ? 0 : c.models.front().dimension();
    out << "dimension " << dimension << '\n';
    for (std::size_t i = 0; i < c.opinion_ids.size(); ++i) {
        out << "opinion " << c.opinion_ids[i] << '\n' << "threshold " << format_double(c.thresholds[i]) << '\n';
        write_model(out, c.models[i]);
    }
}

OpinionClassifier read_opinion_classifier(std::istream& in) {
    std::string line;
    std::getline(in, line);
    if (line != "opinionmap-opinion-classifier v1") throw Error(ErrorCode::malformed_record, "not an opinion classifier file");
    OpinionClassifier c;
    c.topic_id = expect(in, "topic");
    c.vocabulary_hash = parse_hash(expect(in, "vocabulary_hash"));
    c.hyperparameters = read_hyperparameters(in);
    const auto count = std::stoull(expect(in, "opinions"));
    const auto dimension = std::stoull(expect(in, "dimension"));
    for (std::size_t i = 0; i < count; ++i) {
        c.opinion_ids.push_back(expect(in, "opinion"));
        c.thresholds.push_back(std::stod(expect(in, "threshold")));
        c.models.push_back(read_model(in, dimension));
    }
    return c;
}

void write_stack(const ClassifierStack& stack, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [](const std::filesystem::path& file) {
        std::ofstream out(file, std::ios::binary);
        if (!out) throw Error(ErrorCode::io_error, "cannot write " + file.string());
        return out;
    };
    {
        auto out = open(dir / "vocabulary.txt");
        stack.vocabulary().save(out);
    }
    for (const auto& c : stack.topic_classifiers()) {
        auto out = open(dir / ("topic-" + c.topic_id + ".model"));
        write_topic_classifier(out, c);
    }
    for (const auto& c : stack.opinion_classifiers()) {
        auto out = open(dir / ("opinion-" + c.topic_id + ".model"));
        write_opinion_classifier(out, c);
    }
}

ClassifierStack read_stack(const std::filesystem::path& dir) {
    auto open = [](const std::filesystem::path& file) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw Error(ErrorCode::io_error, "cannot read " + file.string());
        return in;
    };
    std::shared_ptr<const Vocabulary> vocab;
    {
        auto in = open(dir / "vocabulary.txt");
        vocab = std::make_shared<const Vocabulary>(Vocabulary::load(in));
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<TopicClassifier> topics;
    std::vector<OpinionClassifier> opinions;
    for (const auto& file : files) {
        const auto name = file.filename().string();
        if (file.extension() != ".model") continue;
        auto in = open(file);
        if (name.starts_with("topic-")) topics.push_back(read_topic_classifier(in));
        else if (name.starts_with("opinion-")) opinions.push_back(read_opinion_classifier(in));
    }
    if (topics.empty()) throw Error(ErrorCode::empty_input, "no topic models in " + dir.string());
    return ClassifierStack(std::move(vocab), std::move(topics), std::move(opinions));
}

}  // namespace opinionmap
