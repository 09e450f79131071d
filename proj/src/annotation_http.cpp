#include "opinionmap/annotation_http.hpp"

#include <httplib.h>

#include <thread>

namespace opinionmap {

using nlohmann::json;

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::not_found:
    case ErrorCode::unknown_entity: return 404;
    case ErrorCode::unknown_annotator: return 403;
    case ErrorCode::already_published:
    case ErrorCode::duplicate_entity:
    case ErrorCode::stale_lease:
    case ErrorCode::not_claimed:
    case ErrorCode::annotation_incomplete: return 409;
    case ErrorCode::unavailable: return 503;
    case ErrorCode::io_error:
    case ErrorCode::invariant_violation: return 500;
    default: return 400;
    }
}

struct HttpServer::Impl {
    httplib::Server server;
    std::thread thread;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
    try {
        return req.body.empty() ? json::object() : json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("request body is not valid JSON: ") + e.what());
    }
}

int path_int(const httplib::Request& req, std::size_t index) {
    try {
        return std::stoi(req.matches[static_cast<int>(index)].str());
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "bad iteration in path");
    }
}

// Every handler goes through here so errors always carry a code.
template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, http_status(e.code()), to_string(e.code()), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, to_string(ErrorCode::invalid_argument), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

json opinion_json(const Opinion& op) {
    return {{"id", op.id}, {"statement", op.statement}, {"topics", op.topic_ids}, {"conspiracy", op.conspiracy}};
}

}  // namespace

HttpServer::HttpServer() : impl_(std::make_unique<Impl>()) {
    impl_->server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            send_error(res, res.status, res.status == 404 ? "not_found" : "http_error", "HTTP " + std::to_string(res.status));
        }
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorCode::io_error, "cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw Error(ErrorCode::io_error, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpServer::start() {
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

AnnotationHttpServer::AnnotationHttpServer(AnnotationService& service) {
    auto& srv = impl_->server;
    AnnotationService* svc = &service;

    srv.Post("/v1/annotators", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 const auto id = body.at("id").get<std::string>();
                 svc->register_annotator(id);
                 send_json(res, 201, {{"id", id}});
             }));

    srv.Post(R"(/v1/iterations/(-?\d+)/batch)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                 const int iteration = path_int(req, 1);
                 const auto body = parse_body(req);
                 std::vector<AnnotationRequest> requests;
                 for (const auto& sel : body.at("selections")) {
                     const auto id = sel.at("posting_id").get<std::string>();
                     const auto p = svc->store().posting(id);
                     if (!p) throw Error(ErrorCode::unknown_entity, "unknown posting '" + id + "'");
                     requests.push_back({p->id, p->text, p->platform, p->place_id, p->timestamp, sel.at("topic").get<std::string>()});
                 }
                 const auto ids = svc->publish_batch(iteration, requests);
                 send_json(res, 201, {{"iteration", iteration}, {"task_ids", ids}});
             }));

    srv.Get("/v1/tasks/next", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                if (!req.has_param("annotator")) throw Error(ErrorCode::invalid_argument, "missing annotator parameter");
                const auto task = svc->claim_next(req.get_param_value("annotator"));
                send_json(res, 200, {{"task", task ? task_payload(*task, svc->store()) : json(nullptr)}});
            }));

    srv.Post(R"(/v1/tasks/([^/]+)/labels)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                 const auto receipt = svc->submit_labels(submission_from_json(req.matches[1].str(), parse_body(req)));
                 send_json(res, 200,
                           {{"task_id", receipt.task_id},
                            {"triples_written", receipt.triples_written},
                            {"created_opinions", receipt.created_opinions}});
             }));

    srv.Post("/v1/opinions", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 OpinionProposal p{body.at("statement").get<std::string>(), body.at("topics").get<std::set<std::string>>(),
                                   body.value("conspiracy", false)};
                 const auto id = svc->create_opinion(p);
                 send_json(res, 201, {{"opinion", opinion_json(*svc->store().opinion(id))}});
             }));

    srv.Post(R"(/v1/opinions/([^/]+)/merge)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 const auto kept = svc->merge_opinions(req.matches[1].str(), body.at("absorb").get<std::string>());
                 send_json(res, 200, {{"opinion", opinion_json(kept)}});
             }));

    srv.Get(R"(/v1/iterations/(-?\d+)/progress)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, to_json(svc->progress(path_int(req, 1))));
            }));

    srv.Get("/v1/opinions", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                const auto topic = req.has_param("topic") ? std::optional(req.get_param_value("topic")) : std::nullopt;
                json list = json::array();
                for (const auto& op : svc->store().opinions(true)) {
                    if (!topic || op.topic_ids.count(*topic)) list.push_back(opinion_json(op));
                }
                send_json(res, 200, {{"opinions", std::move(list)}});
            }));

    srv.Get("/v1/topics", guarded([svc](const httplib::Request&, httplib::Response& res) {
                json list = json::array();
                for (const auto& t : svc->store().topics()) list.push_back({{"id", t.id}, {"name", t.name}});
                send_json(res, 200, {{"topics", std::move(list)}});
            }));
}

ClassifierHttpServer::ClassifierHttpServer(ExternalClassifier& classifier) {
    ExternalClassifier* model = &classifier;
    impl_->server.Post("/v1/classify", guarded([model](const httplib::Request& req, httplib::Response& res) {
                           const auto request = request_from_json(parse_body(req));
                           send_json(res, 200, to_json(model->classify(request)));
                       }));
}

}  // namespace opinionmap
