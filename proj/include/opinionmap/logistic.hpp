#pragma once

#include "opinionmap/text_features.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace opinionmap {

struct Hyperparameters {
    // L2 penalty on the weights (bias is not penalised).
    double regularization = 0.01;
    int epochs = 40;
    double learning_rate = 1.0;

    bool operator==(const Hyperparameters&) const = default;
};

// Binary L2-regularised logistic regression over sparse features.
//
// Objective over n examples:
//   J(w, b) = (1/n) * [ sum_i log(1 + exp(-s_i * (w.x_i + b))) + (lambda/2) * ||w||^2 ]
// with s_i = +1 for positives and -1 for negatives.
class LogisticModel {
public:
    LogisticModel() = default;
    explicit LogisticModel(std::size_t dimension) : weights_(dimension, 0.0) {}
    LogisticModel(std::vector<double> weights, double bias) : weights_(std::move(weights)), bias_(bias) {}

    std::size_t dimension() const { return weights_.size(); }
    const std::vector<double>& weights() const { return weights_; }
    double bias() const { return bias_; }

    double decision(const FeatureVector& x) const;
    double probability(const FeatureVector& x) const;  // p(y = 1 | x)

    bool operator==(const LogisticModel&) const = default;

private:
    friend LogisticModel train_logistic(std::span<const FeatureVector* const>, std::span<const std::uint8_t>,
                                        std::size_t, const Hyperparameters&, std::uint64_t);
    std::vector<double> weights_;
    double bias_ = 0.0;
};

double sigmoid(double z);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> weight_gradient;
    double bias_gradient = 0.0;
};

LossGradient loss_and_gradient(const LogisticModel& model, std::span<const FeatureVector* const> xs,
                               std::span<const std::uint8_t> labels, double regularization);

// Seeded AdaGrad on the data term of J, one example at a time in a fresh
// seeded order per epoch, followed by a proximal L2 shrink of each touched
// weight at the end of the epoch. Zero epochs returns the all-zero model
// (p = 0.5 everywhere).
LogisticModel train_logistic(std::span<const FeatureVector* const> xs, std::span<const std::uint8_t> labels,
                             std::size_t dimension, const Hyperparameters& hp, std::uint64_t seed);

void write_model(std::ostream& out, const LogisticModel& model);
LogisticModel read_model(std::istream& in, std::size_t dimension);

}  // namespace opinionmap
