#include "opinionmap/config.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace opinionmap;
using opinionmap::testing::error_code_of;

namespace {

std::string message_of(const RunConfig& c) {
    try {
        c.validate();
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config_error);
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("defaults follow the study setup") {
    const RunConfig c;
    CHECK(c.active == 10);
    CHECK(c.top_confidence == 10);
    CHECK(c.random == 5);
    CHECK(c.cap == 100);
    CHECK(c.folds == 5);
    CHECK(c.test_size == 114);
    CHECK(c.epsilon == 0.005);
    CHECK(c.ngram_min == 1);
    CHECK(c.ngram_max == 2);
    CHECK(c.lease_minutes == 30);
    CHECK(message_of(c).empty());

    const auto loop = c.loop();
    CHECK(loop.sizes.active == 10);
    CHECK(loop.sizes.top_confidence == 10);
    CHECK(loop.sizes.random == 5);
    CHECK(loop.cap == 100);
    CHECK(loop.folds == 5);
    CHECK(loop.epsilon == 0.005);
    CHECK(loop.vocabulary.min_df == c.min_df);
    CHECK(loop.hyperparameters.regularization == c.regularization);
    CHECK(loop.opinion_threshold == 0.5);
}

TEST_CASE("validation names the offending field") {
    auto broken = [](auto edit) {
        RunConfig c;
        edit(c);
        return message_of(c);
    };
    CHECK(broken([](RunConfig& c) { c.store = ""; }).starts_with("store:"));
    CHECK(broken([](RunConfig& c) { c.out_dir = ""; }).starts_with("out_dir:"));
    CHECK(broken([](RunConfig& c) { c.folds = 1; }).starts_with("folds:"));
    CHECK(broken([](RunConfig& c) { c.epsilon = 0; }).starts_with("epsilon:"));
    CHECK(broken([](RunConfig& c) { c.max_iterations = 0; }).starts_with("max_iterations:"));
    CHECK(broken([](RunConfig& c) { c.ngram_max = 0; }).starts_with("ngram_max:"));
    CHECK(broken([](RunConfig& c) { c.ngram_min = 0; }).starts_with("ngram_min:"));
    CHECK(broken([](RunConfig& c) { c.min_df = 0; }).starts_with("min_df:"));
    CHECK(broken([](RunConfig& c) { c.regularization = -1; }).starts_with("regularization:"));
    CHECK(broken([](RunConfig& c) { c.learning_rate = 0; }).starts_with("learning_rate:"));
    CHECK(broken([](RunConfig& c) { c.opinion_threshold = 1.0; }).starts_with("opinion_threshold:"));
    CHECK(broken([](RunConfig& c) { c.lease_minutes = 0; }).starts_with("lease_minutes:"));
    CHECK(broken([](RunConfig& c) { c.cap = 0; }).starts_with("cap:"));
    CHECK(broken([](RunConfig& c) { c.active = c.top_confidence = c.random = 0; }).starts_with("active:"));
    CHECK(broken([](RunConfig& c) { c.bind = "localhost"; }).starts_with("bind:"));
    // One topic's batch alone over the cap.
    CHECK_FALSE(broken([](RunConfig& c) { c.active = 200; }).empty());
}

TEST_CASE("bind addresses") {
    const auto hp = parse_bind("0.0.0.0:9000");
    CHECK(hp.host == "0.0.0.0");
    CHECK(hp.port == 9000);
    CHECK(parse_bind("[::1]:80").host == "[::1]");
    CHECK(parse_bind("127.0.0.1:0").port == 0);
    for (const char* bad : {"", ":80", "host:", "host:http", "host:70000", "host:-1", "host:80x"}) {
        CAPTURE(bad);
        CHECK(error_code_of([&] { parse_bind(bad); }) == ErrorCode::config_error);
    }
}
