#include "opinionmap/annotation_service.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <sstream>
#include <thread>

namespace opinionmap {

using nlohmann::json;

std::string_view to_string(TaskState s) {
    switch (s) {
    case TaskState::open: return "open";
    case TaskState::claimed: return "claimed";
    case TaskState::submitted: return "submitted";
    case TaskState::finalized: return "finalized";
    }
    return "open";
}

json task_payload(const AnnotationTask& task, const OntologyStore& store) {
    const auto& r = task.request;
    json posting = {{"id", r.posting_id},
                    {"text", r.text},
                    {"platform", std::string(to_string(r.platform))},
                    {"timestamp", format_timestamp(r.timestamp)}};
    if (r.place_id) {
        json place = {{"id", *r.place_id}};
        if (const auto p = store.place(*r.place_id)) {
            place["platform"] = std::string(to_string(p->platform));
            place["url"] = p->url_or_handle;
        }
        posting["place"] = std::move(place);
    }
    json topic = {{"id", r.topic_context}};
    if (const auto t = store.topic(r.topic_context)) topic["name"] = t->name;
    json j = {{"task_id", task.id},
              {"iteration", task.iteration},
              {"state", std::string(to_string(task.state))},
              {"posting", std::move(posting)},
              {"topic_context", std::move(topic)}};
    if (task.lease_expiry) j["lease_expires"] = format_timestamp(*task.lease_expiry);
    return j;
}

LabelSubmission submission_from_json(const std::string& task_id, const json& body) {
    try {
        LabelSubmission s;
        s.task_id = task_id;
        s.annotator_id = body.at("annotator").get<std::string>();
        s.off_topic = body.value("off_topic", false);
        if (body.contains("topics")) s.topics = body.at("topics").get<std::set<std::string>>();
        if (body.contains("opinions")) s.opinions = body.at("opinions").get<std::set<std::string>>();
        if (body.contains("new_opinions")) {
            for (const auto& p : body.at("new_opinions")) {
                OpinionProposal proposal;
                proposal.statement = p.at("statement").get<std::string>();
                proposal.topic_ids = p.at("topics").get<std::set<std::string>>();
                proposal.conspiracy = p.value("conspiracy", false);
                s.new_opinions.push_back(std::move(proposal));
            }
        }
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("label submission: ") + e.what());
    }
}

json to_json(const Progress& p) {
    return {{"iteration", p.iteration},
            {"open", p.open},
            {"claimed", p.claimed},
            {"submitted", p.submitted},
            {"finalized", p.finalized},
            {"total", p.total()},
            {"complete", p.complete()}};
}

AnnotationService::AnnotationService(OntologyStore& store) : AnnotationService(store, Options{}) {}

AnnotationService::AnnotationService(OntologyStore& store, Options options) : store_(store), options_(std::move(options)) {
    if (options_.lease <= std::chrono::seconds::zero()) throw Error(ErrorCode::config_error, "lease must be positive");
}

TimePoint AnnotationService::now() const {
    if (options_.clock) return options_.clock();
    return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

void AnnotationService::register_annotator(const std::string& id) {
    if (id.empty()) throw Error(ErrorCode::invalid_argument, "annotator id is empty");
    std::lock_guard lock(mutex_);
    annotators_.insert(id);
}

bool AnnotationService::has_annotator(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return annotators_.count(id) > 0;
}

std::vector<std::string> AnnotationService::publish_batch(int iteration, const std::vector<AnnotationRequest>& requests) {
    std::lock_guard lock(mutex_);
    if (by_iteration_.count(iteration)) {
        throw Error(ErrorCode::already_published, "iteration " + std::to_string(iteration) + " is already published");
    }
    for (const auto& r : requests) {
        if (!store_.posting(r.posting_id)) throw Error(ErrorCode::unknown_entity, "unknown posting '" + r.posting_id + "'");
        if (!store_.topic(r.topic_context)) throw Error(ErrorCode::unknown_entity, "unknown topic '" + r.topic_context + "'");
    }
    auto& ids = by_iteration_[iteration];
    std::size_t n = 0;
    for (const auto& r : requests) {
        ++n;
        for (auto role : {CoderRole::primary, CoderRole::secondary}) {
            if (role == CoderRole::secondary && !options_.double_coding) break;
            char buf[48];
            std::snprintf(buf, sizeof buf, "i%d-%04zu%s", iteration, n, role == CoderRole::secondary ? "-2" : "");
            AnnotationTask t;
            t.id = buf;
            t.iteration = iteration;
            t.role = role;
            t.request = r;
            tasks_.emplace(t.id, t);
            order_.push_back(t.id);
            ids.push_back(t.id);
        }
    }
    return ids;
}

bool AnnotationService::published(int iteration) const {
    std::lock_guard lock(mutex_);
    return by_iteration_.count(iteration) > 0;
}

void AnnotationService::expire_leases(TimePoint t) {
    for (auto& [id, task] : tasks_) {
        if (task.state == TaskState::claimed && task.lease_expiry && *task.lease_expiry <= t) {
            expired_[id].insert(*task.annotator);
            task.state = TaskState::open;
            task.annotator.reset();
            task.lease_expiry.reset();
        }
    }
}

std::optional<AnnotationTask> AnnotationService::claim_next(const std::string& annotator_id) {
    std::lock_guard lock(mutex_);
    if (!annotators_.count(annotator_id)) {
        throw Error(ErrorCode::unknown_annotator, "annotator '" + annotator_id + "' is not registered");
    }
    const auto t = now();
    expire_leases(t);
    for (const auto& id : order_) {
        auto& task = tasks_.at(id);
        if (task.state != TaskState::open) continue;
        if (options_.double_coding) {
            // The other role of the same selection must go to someone else.
            const bool other_role_mine = std::any_of(by_iteration_.at(task.iteration).begin(), by_iteration_.at(task.iteration).end(),
                                                     [&](const std::string& other) {
                                                         const auto& o = tasks_.at(other);
                                                         return other != id && o.request.posting_id == task.request.posting_id &&
                                                                o.annotator == annotator_id;
                                                     });
            if (other_role_mine) continue;
        }
        task.state = TaskState::claimed;
        task.annotator = annotator_id;
        task.lease_expiry = t + options_.lease;
        return task;
    }
    return std::nullopt;
}

void AnnotationService::validate(const LabelSubmission& s) const {
    if (s.off_topic) {
        if (!s.topics.empty() || !s.opinions.empty() || !s.new_opinions.empty()) {
            throw Error(ErrorCode::invalid_argument, "an off-topic label cannot carry topics or opinions");
        }
        return;
    }
    if (s.topics.empty()) throw Error(ErrorCode::invalid_argument, "select at least one topic or mark the posting off-topic");
    for (const auto& t : s.topics) {
        if (!store_.topic(t)) throw Error(ErrorCode::unknown_entity, "unknown topic '" + t + "'");
    }
    auto under_selected = [&](const std::set<std::string>& topics) {
        return std::any_of(topics.begin(), topics.end(), [&](const std::string& t) { return s.topics.count(t) > 0; });
    };
    for (const auto& id : s.opinions) {
        const auto op = store_.opinion(id);
        if (!op) throw Error(ErrorCode::unknown_entity, "unknown opinion '" + id + "'");
        if (!op->active()) throw Error(ErrorCode::invalid_argument, "opinion '" + id + "' is no longer active");
        if (!under_selected(op->topic_ids)) {
            throw Error(ErrorCode::invalid_argument, "opinion '" + id + "' does not belong to a selected topic");
        }
    }
    for (const auto& p : s.new_opinions) {
        if (p.statement.empty()) throw Error(ErrorCode::invalid_argument, "new opinion has an empty statement");
        if (p.topic_ids.empty()) throw Error(ErrorCode::invalid_argument, "new opinion '" + p.statement + "' has no topic");
        for (const auto& t : p.topic_ids) {
            if (!s.topics.count(t)) {
                throw Error(ErrorCode::invalid_argument, "new opinion '" + p.statement + "' is under unselected topic '" + t + "'");
            }
        }
    }
}

SubmissionReceipt AnnotationService::submit_labels(const LabelSubmission& s) {
    std::lock_guard lock(mutex_);
    auto it = tasks_.find(s.task_id);
    if (it == tasks_.end()) throw Error(ErrorCode::not_found, "unknown task '" + s.task_id + "'");
    if (!annotators_.count(s.annotator_id)) {
        throw Error(ErrorCode::unknown_annotator, "annotator '" + s.annotator_id + "' is not registered");
    }
    auto& task = it->second;
    const auto t = now();
    const bool holder = task.state == TaskState::claimed && task.annotator == s.annotator_id;
    if (holder && *task.lease_expiry <= t) {
        expire_leases(t);
        throw Error(ErrorCode::stale_lease, "lease on task '" + s.task_id + "' expired");
    }
    if (!holder) {
        if (expired_.count(s.task_id) && expired_.at(s.task_id).count(s.annotator_id)) {
            throw Error(ErrorCode::stale_lease, "lease on task '" + s.task_id + "' expired");
        }
        throw Error(ErrorCode::not_claimed, "task '" + s.task_id + "' is not claimed by '" + s.annotator_id + "'");
    }
    validate(s);

    SubmissionReceipt receipt;
    receipt.task_id = s.task_id;
    Coded coded{s.annotator_id, {}};
    for (const auto& topic : s.topics) coded.items.insert("topic:" + topic);
    for (const auto& op : s.opinions) coded.items.insert("opinion:" + op);

    if (task.role == CoderRole::primary) {
        PostingLabel label;
        label.topics = s.topics;
        label.opinions = s.opinions;
        std::map<std::string, std::string> active;
        for (const auto& op : store_.opinions(true)) active.emplace(op.statement, op.id);
        for (const auto& p : s.new_opinions) {
            // A statement someone already added is reused rather than rejected.
            auto found = active.find(p.statement);
            std::string id;
            if (found != active.end()) {
                id = found->second;
            } else {
                id = store_.create_opinion(NewOpinion{p.statement, p.topic_ids, p.conspiracy});
                active.emplace(p.statement, id);
                receipt.created_opinions.push_back(id);
            }
            label.opinions.insert(id);
            coded.items.insert("opinion:" + id);
        }
        const auto before = store_.triple_count();
        store_.apply_label(task.request.posting_id, label, task.iteration);
        receipt.triples_written = store_.triple_count() - before;
    } else {
        for (const auto& p : s.new_opinions) coded.items.insert("new:" + p.statement);
    }

    coded_[task.iteration][task.request.posting_id].push_back(std::move(coded));
    task.state = TaskState::submitted;
    task.lease_expiry.reset();
    return receipt;
}

std::optional<AnnotationTask> AnnotationService::task(const std::string& task_id) const {
    std::lock_guard lock(mutex_);
    const auto it = tasks_.find(task_id);
    if (it == tasks_.end()) return std::nullopt;
    return it->second;
}

std::vector<AnnotationTask> AnnotationService::tasks(int iteration) const {
    std::lock_guard lock(mutex_);
    std::vector<AnnotationTask> out;
    if (const auto it = by_iteration_.find(iteration); it != by_iteration_.end()) {
        for (const auto& id : it->second) out.push_back(tasks_.at(id));
    }
    return out;
}

Progress AnnotationService::progress(int iteration) const {
    std::lock_guard lock(mutex_);
    Progress p;
    p.iteration = iteration;
    const auto it = by_iteration_.find(iteration);
    if (it == by_iteration_.end()) return p;
    const auto t = now();
    for (const auto& id : it->second) {
        const auto& task = tasks_.at(id);
        switch (task.state) {
        case TaskState::open: ++p.open; break;
        case TaskState::claimed: ++(*task.lease_expiry <= t ? p.open : p.claimed); break;
        case TaskState::submitted: ++p.submitted; break;
        case TaskState::finalized: ++p.finalized; break;
        }
    }
    return p;
}

void AnnotationService::finalize(int iteration) {
    std::lock_guard lock(mutex_);
    const auto it = by_iteration_.find(iteration);
    if (it == by_iteration_.end()) throw Error(ErrorCode::not_found, "iteration " + std::to_string(iteration) + " was never published");
    std::size_t pending = 0;
    for (const auto& id : it->second) {
        const auto s = tasks_.at(id).state;
        if (s == TaskState::open || s == TaskState::claimed) ++pending;
    }
    if (pending > 0) {
        throw Error(ErrorCode::annotation_incomplete,
                    "iteration " + std::to_string(iteration) + " has " + std::to_string(pending) + " unsubmitted tasks");
    }
    for (const auto& id : it->second) tasks_.at(id).state = TaskState::finalized;
}

double AnnotationService::agreement(int iteration, const std::string& a, const std::string& b) const {
    std::lock_guard lock(mutex_);
    std::map<std::string, std::string> by_statement;
    for (const auto& op : store_.opinions(true)) by_statement.emplace(op.statement, op.id);
    // Opinions merged since submission compare as their surviving opinion.
    auto normalise = [&](const std::set<std::string>& items) {
        std::set<std::string> out;
        for (const auto& item : items) {
            if (item.starts_with("new:")) {
                const auto found = by_statement.find(item.substr(4));
                out.insert(found == by_statement.end() ? item : "opinion:" + found->second);
            } else if (item.starts_with("opinion:")) {
                auto id = item.substr(8);
                for (auto op = store_.opinion(id); op && op->status == Opinion::Status::merged; op = store_.opinion(id)) {
                    id = op->successors.front();
                }
                out.insert("opinion:" + id);
            } else {
                out.insert(item);
            }
        }
        return out;
    };
    auto latest = [](const std::vector<Coded>& entries, const std::string& who) -> const Coded* {
        for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
            if (it->annotator == who) return &*it;
        }
        return nullptr;
    };

    CodedLabels first, second;
    if (const auto it = coded_.find(iteration); it != coded_.end()) {
        for (const auto& [posting, entries] : it->second) {
            if (const auto* x = latest(entries, a)) first[posting] = normalise(x->items);
            if (const auto* y = latest(entries, b)) second[posting] = normalise(y->items);
        }
    }
    try {
        return label_agreement(first, second);
    } catch (const Error&) {
        throw Error(ErrorCode::invalid_argument, "annotators '" + a + "' and '" + b + "' share no labeled posting in iteration " +
                                                     std::to_string(iteration));
    }
}

double label_agreement(const CodedLabels& a, const CodedLabels& b) {
    std::size_t shared = 0, matches = 0;
    for (const auto& [posting, items] : a) {
        const auto other = b.find(posting);
        if (other == b.end()) continue;
        ++shared;
        if (items == other->second) ++matches;
    }
    if (shared == 0) throw Error(ErrorCode::invalid_argument, "the two label sets share no posting");
    return static_cast<double>(matches) / static_cast<double>(shared);
}

CodedLabels read_coded_labels(std::istream& in) {
    CodedLabels out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        const auto posting = line.substr(0, tab);
        if (posting.empty()) throw Error(ErrorCode::malformed_record, "labels line " + std::to_string(line_no) + ": empty posting id");
        std::set<std::string> items;
        if (tab != std::string::npos) {
            std::stringstream rest(line.substr(tab + 1));
            for (std::string item; std::getline(rest, item, ',');) {
                if (!item.empty()) items.insert(item);
            }
        }
        if (!out.emplace(posting, std::move(items)).second) {
            throw Error(ErrorCode::malformed_record, "labels line " + std::to_string(line_no) + ": posting '" + posting + "' repeated");
        }
    }
    return out;
}

std::string AnnotationService::create_opinion(const OpinionProposal& proposal) {
    std::lock_guard lock(mutex_);
    if (proposal.statement.empty()) throw Error(ErrorCode::invalid_argument, "opinion statement is empty");
    return store_.create_opinion(NewOpinion{proposal.statement, proposal.topic_ids, proposal.conspiracy});
}

Opinion AnnotationService::merge_opinions(const std::string& keep, const std::string& absorb) {
    std::lock_guard lock(mutex_);
    return store_.merge_opinions(keep, absorb);
}

void sync_opinions(const OntologyStore& from, OntologyStore& to) {
    const auto all = from.opinions(false);
    for (const auto& op : all) {
        if (!to.opinion(op.id)) to.add_opinion(op);
    }
    for (const auto& op : all) {
        if (op.status != Opinion::Status::merged) continue;
        const auto mine = to.opinion(op.id);
        if (!mine || !mine->active()) continue;
        auto target = op.successors.front();
        for (auto next = from.opinion(target); next && next->status == Opinion::Status::merged; next = from.opinion(target)) {
            target = next->successors.front();
        }
        to.merge_opinions(target, op.id);
    }
}

ServiceAnnotationSource::ServiceAnnotationSource(AnnotationService& service) : ServiceAnnotationSource(service, Options{}) {}

ServiceAnnotationSource::ServiceAnnotationSource(AnnotationService& service, Options options)
    : service_(service), options_(options) {}

void ServiceAnnotationSource::annotate(int iteration, const std::vector<AnnotationRequest>& requests, OntologyStore& working) {
    try {
        service_.publish_batch(iteration, requests);
    } catch (const Error& e) {
        // A retried iteration picks up the batch it published before.
        if (e.code() != ErrorCode::already_published) throw;
    }
    const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
    while (!service_.progress(iteration).complete()) {
        if (std::chrono::steady_clock::now() >= deadline) {
            throw Error(ErrorCode::annotation_incomplete, "timed out waiting for iteration " + std::to_string(iteration));
        }
        std::this_thread::sleep_for(options_.poll);
    }
    service_.finalize(iteration);

    const auto& source = service_.store();
    sync_opinions(source, working);
    std::set<std::string> done;
    for (const auto& r : requests) {
        if (!done.insert(r.posting_id).second) continue;
        working.apply_label(r.posting_id, source.label_of(r.posting_id), iteration);
    }
}

}  // namespace opinionmap
