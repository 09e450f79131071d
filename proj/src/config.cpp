#include "opinionmap/config.hpp"

#include <charconv>

namespace opinionmap {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
    throw Error(ErrorCode::config_error, field + ": " + why);
}

}  // namespace

void RunConfig::validate() const {
    if (store.empty()) bad("store", "must not be empty");
    if (out_dir.empty()) bad("out_dir", "must not be empty");
    if (active + top_confidence + random == 0) bad("active", "per-topic batch size must be positive");
    if (cap == 0) bad("cap", "must be positive");
    if (!(epsilon > 0.0)) bad("epsilon", "must be positive");
    if (max_iterations < 1) bad("max_iterations", "must be at least 1");
    if (folds < 2) bad("folds", "must be at least 2");
    if (ngram_min < 1) bad("ngram_min", "must be at least 1");
    if (ngram_max < ngram_min) bad("ngram_max", "must be at least ngram_min");
    if (min_df < 1) bad("min_df", "must be at least 1");
    if (!(regularization >= 0.0)) bad("regularization", "must be non-negative");
    if (epochs < 0) bad("epochs", "must be non-negative");
    if (!(learning_rate > 0.0)) bad("learning_rate", "must be positive");
    if (search_budget < 0) bad("search_budget", "must be non-negative");
    if (!(opinion_threshold > 0.0 && opinion_threshold < 1.0)) bad("opinion_threshold", "must be in (0, 1)");
    if (lease_minutes < 1) bad("lease_minutes", "must be at least 1");
    parse_bind(bind);
    // The topic count is known only once a store is loaded; the loop checks again then.
    validate_batch_sizes(BatchSizes{active, top_confidence, random}, 1, cap);
}

LoopConfig RunConfig::loop() const {
    LoopConfig c;
    c.sizes = {active, top_confidence, random};
    c.cap = cap;
    c.epsilon = epsilon;
    c.max_iterations = max_iterations;
    c.folds = folds;
    c.hyperparameters.regularization = regularization;
    c.hyperparameters.epochs = epochs;
    c.hyperparameters.learning_rate = learning_rate;
    c.opinion_threshold = opinion_threshold;
    c.vocabulary.ngram_min = ngram_min;
    c.vocabulary.ngram_max = ngram_max;
    c.vocabulary.min_df = min_df;
    c.seed = seed;
    return c;
}

HostPort parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos || colon == 0) bad("bind", "expected host:port, got '" + bind + "'");
    HostPort hp;
    hp.host = bind.substr(0, colon);
    const auto port = std::string_view(bind).substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), hp.port);
    if (ec != std::errc() || ptr != port.data() + port.size() || hp.port < 0 || hp.port > 65535) {
        bad("bind", "bad port in '" + bind + "'");
    }
    return hp;
}

}  // namespace opinionmap
