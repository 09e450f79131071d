#pragma once

#include "opinionmap/annotation_service.hpp"
#include "opinionmap/external_classifier.hpp"

#include <memory>
#include <string>

namespace opinionmap {

// Maps an error code to its HTTP status; bodies are
// {"error": {"code": "...", "message": "..."}}.
int http_status(ErrorCode code);

// Base for the two servers below: binds, runs on a background thread, stops
// on destruction.
class HttpServer {
public:
    virtual ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    void start();  // serve on a background thread
    void run();    // serve on the calling thread until stop()
    void stop();

protected:
    HttpServer();
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Annotator-facing protocol under /v1:
//   POST /v1/annotators                 register {"id"}
//   POST /v1/iterations/{i}/batch       publish {"selections": [{"posting_id", "topic"}]}
//   GET  /v1/tasks/next?annotator=ID    claim; {"task": null} when nothing is open
//   POST /v1/tasks/{id}/labels          submit
//   POST /v1/opinions                   create {"statement", "topics", "conspiracy"}
//   POST /v1/opinions/{id}/merge        absorb {"absorb": other_id} into {id}
//   GET  /v1/iterations/{i}/progress    task counts by state
//   GET  /v1/opinions[?topic=ID]        active opinions
//   GET  /v1/topics
class AnnotationHttpServer : public HttpServer {
public:
    explicit AnnotationHttpServer(AnnotationService& service);
};

// Model endpoint for the external classifier protocol: POST /v1/classify.
// Kept apart from the annotation server so annotators never reach it.
class ClassifierHttpServer : public HttpServer {
public:
    explicit ClassifierHttpServer(ExternalClassifier& classifier);
};

}  // namespace opinionmap
