#pragma once

// Independent reference implementations shared by unit and acceptance tests.

#include "opinionmap/logistic.hpp"
#include "opinionmap/rng.hpp"
#include "opinionmap/text_features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace opinionmap::testing {

using Strings = std::vector<std::string>;

// Reference pipeline written from the formulas alone: split on anything that
// is not [a-z0-9] after lowercasing (the random corpora are ASCII), count
// n-grams with plain maps.
inline Strings naive_tokens(const std::string& text) {
    Strings out;
    std::string cur;
    for (char ch : text) {
        char c = (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cur += c;
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::map<std::string, int> naive_counts(const std::string& text, int lo, int hi) {
    const auto t = naive_tokens(text);
    std::map<std::string, int> counts;
    for (int n = lo; n <= hi; ++n) {
        for (std::size_t i = 0; i + n <= t.size(); ++i) {
            std::string g = t[i];
            for (int j = 1; j < n; ++j) g += " " + t[i + j];
            ++counts[g];
        }
    }
    return counts;
}

inline std::map<std::string, double> naive_tfidf(const Strings& corpus, const std::string& doc, int lo, int hi, int min_df) {
    std::map<std::string, int> df;
    for (const auto& d : corpus)
        for (const auto& [g, c] : naive_counts(d, lo, hi)) ++df[g];
    const double n = static_cast<double>(corpus.size());
    std::map<std::string, double> w;
    double sq = 0.0;
    for (const auto& [g, tf] : naive_counts(doc, lo, hi)) {
        auto it = df.find(g);
        if (it == df.end() || it->second < min_df) continue;
        const double v = tf * (std::log((1.0 + n) / (1.0 + it->second)) + 1.0);
        w[g] = v;
        sq += v * v;
    }
    for (auto& [g, v] : w) v /= std::sqrt(sq);
    return w;
}

inline Strings random_corpus(Rng& rng, std::size_t docs) {
    static const char* words[] = {"climate", "hoax", "fire", "Arson", "vaccine", "5G", "wuhan", "the", "is", "a",
                                  "plandemic", "bushfire", "green", "UN", "covid-19", "mask", "lab", "leak"};
    static const char* seps[] = {" ", "  ", ", ", "! ", "-", "'", " ... "};
    Strings corpus;
    for (std::size_t d = 0; d < docs; ++d) {
        std::string text;
        const auto len = rng.below(12);
        for (std::uint64_t i = 0; i < len; ++i) {
            if (i) text += seps[rng.below(std::size(seps))];
            text += words[rng.below(std::size(words))];
        }
        corpus.push_back(text);
    }
    return corpus;
}

struct Batch {
    std::vector<FeatureVector> xs;
    std::vector<const FeatureVector*> ptrs;
    std::vector<std::uint8_t> labels;
};

inline Batch random_batch(Rng& rng, std::size_t n, std::size_t dim) {
    Batch b;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureVector x;
        for (std::uint32_t j = 0; j < dim; ++j) {
            if (rng.below(3) == 0) x.entries.emplace_back(j, rng.uniform() * 2.0);
        }
        b.xs.push_back(std::move(x));
        b.labels.push_back(static_cast<std::uint8_t>(rng.below(2)));
    }
    for (const auto& x : b.xs) b.ptrs.push_back(&x);
    return b;
}

// Direct evaluation of J from its definition.
inline double objective(const std::vector<double>& w, double bias, const Batch& b, double lambda) {
    double sum = 0.0;
    for (std::size_t i = 0; i < b.xs.size(); ++i) {
        double z = bias;
        for (const auto& [j, v] : b.xs[i].entries) z += w[j] * v;
        const double s = b.labels[i] ? 1.0 : -1.0;
        sum += std::log1p(std::exp(-s * z));
    }
    double sq = 0.0;
    for (double x : w) sq += x * x;
    return (sum + 0.5 * lambda * sq) / static_cast<double>(b.xs.size());
}

inline double relative_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

}  // namespace opinionmap::testing
