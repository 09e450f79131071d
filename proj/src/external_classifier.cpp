#include "opinionmap/external_classifier.hpp"

#include <httplib.h>

namespace opinionmap {

using nlohmann::json;

json to_json(const ClassifyRequest& r) {
    json items = json::array();
    for (const auto& item : r.items) items.push_back({{"id", item.id}, {"text", item.text}});
    return {{"topic", r.topic_id}, {"iteration", r.iteration}, {"items", std::move(items)}};
}

ClassifyRequest request_from_json(const json& j) {
    try {
        ClassifyRequest r;
        r.topic_id = j.at("topic").get<std::string>();
        r.iteration = j.value("iteration", 0);
        for (const auto& item : j.at("items")) {
            r.items.push_back({item.at("id").get<std::string>(), item.at("text").get<std::string>()});
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_record, std::string("classify request: ") + e.what());
    }
}

json to_json(const std::vector<ClassifyResult>& results) {
    json items = json::array();
    for (const auto& r : results) items.push_back({{"id", r.id}, {"label", r.label ? 1 : 0}, {"probability", r.probability}});
    return {{"items", std::move(items)}};
}

std::vector<ClassifyResult> results_from_json(const json& j) {
    try {
        std::vector<ClassifyResult> out;
        for (const auto& item : j.at("items")) {
            ClassifyResult r;
            r.id = item.at("id").get<std::string>();
            const auto& label = item.at("label");
            r.label = label.is_boolean() ? label.get<bool>() : label.get<int>() != 0;
            r.probability = item.at("probability").get<double>();
            out.push_back(std::move(r));
        }
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invariant_violation, std::string("classify response: ") + e.what());
    }
}

void validate_response(const ClassifyRequest& request, const std::vector<ClassifyResult>& results) {
    if (results.size() != request.items.size()) {
        throw Error(ErrorCode::invariant_violation, "external classifier returned " + std::to_string(results.size()) +
                                                        " items for " + std::to_string(request.items.size()));
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (r.id != request.items[i].id) {
            throw Error(ErrorCode::invariant_violation, "external classifier answered '" + r.id + "' where '" +
                                                            request.items[i].id + "' was expected");
        }
        if (!(r.probability >= 0.0 && r.probability <= 1.0)) {
            throw Error(ErrorCode::invariant_violation,
                        "external classifier probability " + format_double(r.probability) + " for '" + r.id + "' is outside [0, 1]");
        }
        if (r.label != (r.probability >= 0.5)) {
            throw Error(ErrorCode::invariant_violation, "external classifier label for '" + r.id + "' contradicts its probability");
        }
    }
}

void NativeEndpoint::set_stack(std::shared_ptr<const ClassifierStack> stack) {
    std::lock_guard lock(mutex_);
    stack_ = std::move(stack);
}

std::vector<ClassifyResult> NativeEndpoint::classify(const ClassifyRequest& request) {
    std::shared_ptr<const ClassifierStack> stack;
    {
        std::lock_guard lock(mutex_);
        stack = stack_;
    }
    if (!stack) throw RetryableError(ErrorCode::unavailable, "no model loaded");
    const auto& model = stack->topic_classifier(request.topic_id);
    std::vector<ClassifyResult> out;
    out.reserve(request.items.size());
    for (const auto& item : request.items) {
        const double p = model.probability(vectorize(item.text, stack->vocabulary()));
        out.push_back({item.id, p >= 0.5, p});
    }
    return out;
}

std::vector<ClassifyResult> FixedClassifier::classify(const ClassifyRequest& request) {
    std::vector<ClassifyResult> out;
    for (const auto& item : request.items) out.push_back({item.id, probability_ >= 0.5, probability_});
    return out;
}

HttpExternalClassifier::HttpExternalClassifier(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::vector<ClassifyResult> HttpExternalClassifier::classify(const ClassifyRequest& request) {
    httplib::Client client(base_url_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    auto res = client.Post("/v1/classify", to_json(request).dump(), "application/json");
    if (!res) {
        throw RetryableError(ErrorCode::unavailable,
                             "external classifier at " + base_url_ + " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status >= 500) {
        throw RetryableError(ErrorCode::unavailable, "external classifier answered HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::invariant_violation, "external classifier answered HTTP " + std::to_string(res->status));
    }
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invariant_violation, std::string("external classifier sent invalid JSON: ") + e.what());
    }
    auto results = results_from_json(body);
    validate_response(request, results);
    return results;
}

}  // namespace opinionmap
