#pragma once

#include "opinionmap/augmentation.hpp"
#include "opinionmap/ontology.hpp"

#include <chrono>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace opinionmap {

enum class TaskState { open, claimed, submitted, finalized };
std::string_view to_string(TaskState s);

// Second coder tasks exist only in double-coding mode and never write triples.
enum class CoderRole { primary, secondary };

struct AnnotationTask {
    std::string id;
    int iteration = 0;
    CoderRole role = CoderRole::primary;
    AnnotationRequest request;
    TaskState state = TaskState::open;
    std::optional<std::string> annotator;
    std::optional<TimePoint> lease_expiry;
};

// Everything an annotator sees for a task: posting text, metadata and the
// topic context. Built field by field, so nothing else can leak in.
nlohmann::json task_payload(const AnnotationTask& task, const OntologyStore& store);

struct OpinionProposal {
    std::string statement;
    std::set<std::string> topic_ids;
    bool conspiracy = false;
};

struct LabelSubmission {
    std::string task_id;
    std::string annotator_id;
    bool off_topic = false;
    std::set<std::string> topics;
    std::set<std::string> opinions;
    std::vector<OpinionProposal> new_opinions;
};

// {"annotator", "off_topic", "topics", "opinions", "new_opinions": [{"statement", "topics", "conspiracy"}]}
LabelSubmission submission_from_json(const std::string& task_id, const nlohmann::json& body);

struct SubmissionReceipt {
    std::string task_id;
    std::size_t triples_written = 0;
    std::vector<std::string> created_opinions;
};

struct Progress {
    int iteration = 0;
    std::size_t open = 0;
    std::size_t claimed = 0;
    std::size_t submitted = 0;
    std::size_t finalized = 0;

    std::size_t total() const { return open + claimed + submitted + finalized; }
    bool complete() const { return total() > 0 && open == 0 && claimed == 0; }
};

nlohmann::json to_json(const Progress& p);

// Serves sampled postings to annotators and writes accepted labels into the
// store it wraps. Claim and submit are linearised by one mutex; the store does
// its own locking for readers.
class AnnotationService {
public:
    using Clock = std::function<TimePoint()>;

    struct Options {
        std::chrono::seconds lease{std::chrono::minutes(30)};
        bool double_coding = false;
        Clock clock;  // system clock when empty
    };

    explicit AnnotationService(OntologyStore& store);
    AnnotationService(OntologyStore& store, Options options);

    void register_annotator(const std::string& id);
    bool has_annotator(const std::string& id) const;

    // One task per request (two in double-coding mode). A second publish for
    // the same iteration is rejected and creates nothing.
    std::vector<std::string> publish_batch(int iteration, const std::vector<AnnotationRequest>& requests);
    bool published(int iteration) const;

    // Oldest open task the annotator may take, or nothing. In double-coding
    // mode an annotator never gets both roles of one posting.
    std::optional<AnnotationTask> claim_next(const std::string& annotator_id);
    SubmissionReceipt submit_labels(const LabelSubmission& submission);

    std::optional<AnnotationTask> task(const std::string& task_id) const;
    std::vector<AnnotationTask> tasks(int iteration) const;
    Progress progress(int iteration) const;

    // Marks every submitted task of a complete iteration finalized.
    void finalize(int iteration);

    // Share of postings both annotators labeled in the iteration whose full
    // label (topics and opinions) is identical. Disjoint sets are rejected.
    double agreement(int iteration, const std::string& annotator_a, const std::string& annotator_b) const;

    std::string create_opinion(const OpinionProposal& proposal);
    Opinion merge_opinions(const std::string& keep, const std::string& absorb);

    OntologyStore& store() { return store_; }
    const OntologyStore& store() const { return store_; }

private:
    struct Coded {
        std::string annotator;
        std::set<std::string> items;  // "topic:<id>", "opinion:<id>", "new:<statement>"
    };

    TimePoint now() const;
    void expire_leases(TimePoint now);
    void validate(const LabelSubmission& s) const;

    OntologyStore& store_;
    Options options_;
    mutable std::mutex mutex_;
    std::set<std::string> annotators_;
    std::map<std::string, AnnotationTask> tasks_;
    std::vector<std::string> order_;  // publication order
    std::map<int, std::vector<std::string>> by_iteration_;
    std::map<std::string, std::set<std::string>> expired_;  // task -> annotators whose lease lapsed
    // iteration -> posting -> one entry per submission, latest last
    std::map<int, std::map<std::string, std::vector<Coded>>> coded_;
};

// Publishes each loop batch to a service, waits until annotators have
// submitted every task, then copies opinions and labels into the loop's
// working store.
class ServiceAnnotationSource : public AnnotationSource {
public:
    struct Options {
        std::chrono::milliseconds poll{std::chrono::milliseconds(200)};
        std::chrono::milliseconds timeout{std::chrono::hours(24)};
    };

    explicit ServiceAnnotationSource(AnnotationService& service);
    ServiceAnnotationSource(AnnotationService& service, Options options);

    void annotate(int iteration, const std::vector<AnnotationRequest>& requests, OntologyStore& working) override;

private:
    AnnotationService& service_;
    Options options_;
};

// Exact-set agreement over the postings both coders labeled: each label is a
// set of items such as "topic:<id>" and "opinion:<id>". Rejects coders with
// no posting in common.
using CodedLabels = std::map<std::string, std::set<std::string>>;  // posting -> items
double label_agreement(const CodedLabels& a, const CodedLabels& b);

// posting_id<TAB>comma-separated items per line.
CodedLabels read_coded_labels(std::istream& in);

// Adds opinions missing from `to` and replays merges, by id.
void sync_opinions(const OntologyStore& from, OntologyStore& to);

}  // namespace opinionmap
