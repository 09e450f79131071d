#include "opinionmap/logistic.hpp"

#include "opinionmap/common.hpp"
#include "opinionmap/rng.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

namespace opinionmap {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double LogisticModel::decision(const FeatureVector& x) const {
    double z = bias_;
    for (const auto& [index, value] : x.entries) {
        if (index < weights_.size()) z += weights_[index] * value;
    }
    return z;
}

double LogisticModel::probability(const FeatureVector& x) const { return sigmoid(decision(x)); }

LossGradient loss_and_gradient(const LogisticModel& model, std::span<const FeatureVector* const> xs,
                               std::span<const std::uint8_t> labels, double regularization) {
    if (xs.size() != labels.size()) throw Error(ErrorCode::invalid_argument, "loss: feature/label count mismatch");
    if (xs.empty()) throw Error(ErrorCode::empty_input, "loss: empty batch");
    const double n = static_cast<double>(xs.size());
    LossGradient out;
    out.weight_gradient.assign(model.dimension(), 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double z = model.decision(*xs[i]);
        const double s = labels[i] ? 1.0 : -1.0;
        out.loss += softplus(-s * z);
        // d/dz log(1 + exp(-s z)) = sigmoid(z) - y
        const double g = sigmoid(z) - (labels[i] ? 1.0 : 0.0);
        for (const auto& [index, value] : xs[i]->entries) out.weight_gradient[index] += g * value;
        out.bias_gradient += g;
    }
    double sq = 0.0;
    for (std::size_t j = 0; j < model.dimension(); ++j) {
        const double w = model.weights()[j];
        sq += w * w;
        out.weight_gradient[j] = (out.weight_gradient[j] + regularization * w) / n;
    }
    out.loss = (out.loss + 0.5 * regularization * sq) / n;
    out.bias_gradient /= n;
    return out;
}

LogisticModel train_logistic(std::span<const FeatureVector* const> xs, std::span<const std::uint8_t> labels,
                             std::size_t dimension, const Hyperparameters& hp, std::uint64_t seed) {
    if (xs.size() != labels.size()) throw Error(ErrorCode::invalid_argument, "train: feature/label count mismatch");
    if (hp.epochs < 0 || hp.learning_rate <= 0 || hp.regularization < 0) {
        throw Error(ErrorCode::invalid_argument, "train: invalid hyperparameters");
    }
    LogisticModel model(dimension);
    if (xs.empty() || hp.epochs == 0) return model;

    std::vector<double>& w = model.weights_;
    double& bias = model.bias_;
    // Per-coordinate AdaGrad accumulators. Rare n-grams keep large steps while
    // the bias, touched by every example, settles quickly.
    constexpr double kDelta = 1e-8;
    std::vector<double> g2(dimension, 0.0);
    double bias_g2 = 0.0;
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t idx : order) {
            const FeatureVector& x = *xs[idx];
            double z = bias;
            for (const auto& [index, value] : x.entries) z += w[index] * value;
            const double g = sigmoid(z) - (labels[idx] ? 1.0 : 0.0);
            for (const auto& [index, value] : x.entries) {
                const double gj = g * value;
                g2[index] += gj * gj;
                w[index] -= hp.learning_rate * gj / std::sqrt(g2[index] + kDelta);
            }
            bias_g2 += g * g;
            bias -= hp.learning_rate * g / std::sqrt(bias_g2 + kDelta);
        }
        // One epoch carries the full penalty gradient lambda * w; apply it as a
        // proximal shrink with each coordinate's current step size.
        if (hp.regularization > 0) {
            for (std::size_t j = 0; j < dimension; ++j) {
                if (g2[j] > 0) w[j] /= 1.0 + hp.learning_rate * hp.regularization / std::sqrt(g2[j] + kDelta);
            }
        }
    }
    return model;
}

void write_model(std::ostream& out, const LogisticModel& model) {
    out << "bias " << format_double(model.bias()) << '\n';
    for (double w : model.weights()) out << format_double(w) << '\n';
}

LogisticModel read_model(std::istream& in, std::size_t dimension) {
    std::string word;
    double bias = 0.0;
    if (!(in >> word) || word != "bias") throw Error(ErrorCode::malformed_record, "model: expected 'bias'");
    std::string text;
    in >> text;
    bias = std::stod(text);
    std::vector<double> weights(dimension);
    for (std::size_t j = 0; j < dimension; ++j) {
        if (!(in >> text)) throw Error(ErrorCode::malformed_record, "model: truncated weights");
        weights[j] = std::stod(text);
    }
    return LogisticModel(std::move(weights), bias);
}

}  // namespace opinionmap
