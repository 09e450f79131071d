#pragma once

#include "opinionmap/classifiers.hpp"

#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace opinionmap {

// Wire protocol for a model that lives outside the process.
//   request:  {"topic": id, "iteration": i, "items": [{"id", "text"}]}
//   response: {"items": [{"id", "label", "probability"}]}
// where probability is p(y = 1 | x) for the requested topic.
struct ClassifyItem {
    std::string id;
    std::string text;
};

struct ClassifyRequest {
    std::string topic_id;
    int iteration = 0;
    std::vector<ClassifyItem> items;
};

struct ClassifyResult {
    std::string id;
    bool label = false;
    double probability = 0.5;
};

nlohmann::json to_json(const ClassifyRequest& r);
ClassifyRequest request_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<ClassifyResult>& results);
std::vector<ClassifyResult> results_from_json(const nlohmann::json& j);

class ExternalClassifier {
public:
    virtual ~ExternalClassifier() = default;
    virtual std::vector<ClassifyResult> classify(const ClassifyRequest& request) = 0;
};

// Checks a response against its request: same ids in the same order,
// probability in [0, 1], label == (probability >= 0.5). Throws
// invariant_violation otherwise.
void validate_response(const ClassifyRequest& request, const std::vector<ClassifyResult>& results);

// Serves a native classifier stack through the protocol. The stack can be
// swapped while requests are in flight.
class NativeEndpoint : public ExternalClassifier {
public:
    explicit NativeEndpoint(std::shared_ptr<const ClassifierStack> stack = nullptr) : stack_(std::move(stack)) {}

    void set_stack(std::shared_ptr<const ClassifierStack> stack);
    std::vector<ClassifyResult> classify(const ClassifyRequest& request) override;

private:
    std::mutex mutex_;
    std::shared_ptr<const ClassifierStack> stack_;
};

// Constant answer for every item; useful as a stub backend.
class FixedClassifier : public ExternalClassifier {
public:
    explicit FixedClassifier(double probability) : probability_(probability) {}
    std::vector<ClassifyResult> classify(const ClassifyRequest& request) override;

private:
    double probability_;
};

// POSTs requests to {base_url}/v1/classify. Connection failures, timeouts and
// 5xx answers raise RetryableError; malformed answers raise invariant_violation.
class HttpExternalClassifier : public ExternalClassifier {
public:
    HttpExternalClassifier(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(30));
    std::vector<ClassifyResult> classify(const ClassifyRequest& request) override;

private:
    std::string base_url_;
    std::chrono::milliseconds timeout_;
};

}  // namespace opinionmap
