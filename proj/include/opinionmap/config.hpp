#pragma once

#include "opinionmap/augmentation.hpp"

#include <cstdint>
#include <string>

namespace opinionmap {

// Settings shared by every CLI subcommand. The CLI fills it from a key-value
// config file, OPINIONMAP_* environment variables and flags, in rising order
// of precedence.
struct RunConfig {
    std::string store = "store.jsonl";
    std::string out_dir = "out";
    std::uint64_t seed = 0;

    std::size_t active = 10;
    std::size_t top_confidence = 10;
    std::size_t random = 5;
    std::size_t cap = 100;
    double epsilon = 0.005;
    int max_iterations = 20;
    int folds = 5;
    std::size_t test_size = 114;

    int ngram_min = 1;
    int ngram_max = 2;
    std::uint32_t min_df = 2;
    double regularization = 0.01;
    int epochs = 40;
    double learning_rate = 1.0;
    int search_budget = 0;
    double opinion_threshold = 0.5;

    std::string bind = "127.0.0.1:8080";
    int lease_minutes = 30;
    std::string external_classifier;  // base URL; empty uses the native model

    // Throws config_error naming the first offending field.
    void validate() const;
    LoopConfig loop() const;
};

struct HostPort {
    std::string host;
    int port = 0;
};

HostPort parse_bind(const std::string& bind);

}  // namespace opinionmap
