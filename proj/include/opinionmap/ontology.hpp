#pragma once

#include "opinionmap/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

namespace opinionmap {

enum class Platform { facebook, twitter, youtube, other };
enum class LabelState { unlabeled, labeled, test_reserved };
enum class Predicate { expresses_opinion, about_topic, posted_in, opinion_of_topic };

std::string_view to_string(Platform p);
std::string_view to_string(LabelState s);
std::string_view to_string(Predicate p);
Platform parse_platform(std::string_view text);  // unknown names map to other
LabelState parse_label_state(std::string_view text);
Predicate parse_predicate(std::string_view text);

struct Topic {
    std::string id;
    std::string name;
    std::set<std::string> keywords;
};

struct Opinion {
    enum class Status { active, merged, split };

    std::string id;
    std::string statement;
    std::set<std::string> topic_ids;
    bool conspiracy = false;
    Status status = Status::active;
    // merged: the single opinion it was merged into; split: the new opinions.
    std::vector<std::string> successors;

    bool active() const { return status == Status::active; }
};

struct InternetPlace {
    std::string id;
    Platform platform = Platform::other;
    std::string url_or_handle;
};

struct Posting {
    std::string id;
    std::string text;
    Platform platform = Platform::other;
    std::optional<std::string> place_id;
    TimePoint timestamp{};
    LabelState label_state = LabelState::unlabeled;
    std::optional<int> source_batch;
    // Topics whose collection keywords matched at ingestion; empty means off-keyword.
    std::set<std::string> keyword_topics;
};

struct Triple {
    std::string subject;
    Predicate predicate = Predicate::about_topic;
    std::string object;

    auto operator<=>(const Triple&) const = default;
};

struct TriplePattern {
    std::optional<std::string> subject;
    std::optional<Predicate> predicate;
    std::optional<std::string> object;
};

// Full label of one posting. Empty topics on a labeled posting is the explicit
// off-topic label.
struct PostingLabel {
    std::set<std::string> topics;
    std::set<std::string> opinions;

    bool off_topic() const { return topics.empty(); }
    bool operator==(const PostingLabel&) const = default;
};

struct NewOpinion {
    std::string statement;
    std::set<std::string> topic_ids;
    bool conspiracy = false;
};

// Keyword sets per topic used to route ingested postings.
using TopicKeywords = std::map<std::string, std::set<std::string>>;

struct IngestionReport {
    struct RecordError {
        std::size_t line = 0;
        std::string message;
    };

    std::size_t ingested = 0;
    std::size_t duplicates = 0;
    std::size_t off_keyword = 0;
    std::map<std::string, std::size_t> per_topic;
    std::vector<RecordError> errors;
};

// Dense 0/1 view of the labels: one row per labeled posting, one column per
// topic and per active opinion.
struct LabelMatrix {
    std::vector<std::string> topic_columns;
    std::vector<std::string> opinion_columns;
    std::vector<std::string> rows;
    std::vector<std::vector<std::uint8_t>> values;

    std::size_t column_count() const { return topic_columns.size() + opinion_columns.size(); }
    void write_tsv(std::ostream& out) const;
};

// Matches topic keywords as whole-token sequences after tokenization.
class KeywordMatcher {
public:
    explicit KeywordMatcher(const TopicKeywords& keywords);
    std::set<std::string> match(std::string_view text) const;

private:
    struct Entry {
        std::vector<std::string> tokens;
        std::string topic;
    };
    std::map<std::string, std::vector<Entry>> by_first_token_;
};

// The four study topics with their collection keywords. The first two and
// the last two topics share one keyword group each.
std::vector<Topic> default_topics();

// Entity + triple store. One writer at a time, any number of readers; every
// public member takes the appropriate lock.
class OntologyStore {
public:
    OntologyStore() = default;
    OntologyStore(const OntologyStore& other);
    OntologyStore& operator=(const OntologyStore& other);

    void add_topic(Topic topic);
    void add_place(InternetPlace place);
    void add_posting(Posting posting);
    // Asserts opinion_of_topic for every listed topic.
    void add_opinion(Opinion opinion);
    std::string create_opinion(const NewOpinion& proposal);

    // Returns the change in stored triple count (0 or 1).
    int assert_triple(const Triple& triple);
    std::vector<Triple> query(const TriplePattern& pattern) const;
    std::size_t triple_count() const;

    // Explicit about_topic links plus the topics of every expressed opinion.
    std::set<std::string> query_topics(const std::string& posting_id) const;
    PostingLabel label_of(const std::string& posting_id) const;

    // Writes the label as triples (union with any existing label) and marks
    // the posting labeled, unless it is test-reserved.
    void apply_label(const std::string& posting_id, const PostingLabel& label, std::optional<int> batch = {});
    void reserve_for_test(const std::string& posting_id);

    Opinion merge_opinions(const std::string& keep, const std::string& absorb);
    std::vector<std::string> split_opinion(const std::string& id, const std::vector<NewOpinion>& parts);

    IngestionReport ingest_postings(std::istream& records, const TopicKeywords& keywords);

    std::optional<Topic> topic(const std::string& id) const;
    std::optional<Opinion> opinion(const std::string& id) const;
    std::optional<Posting> posting(const std::string& id) const;
    std::optional<InternetPlace> place(const std::string& id) const;
    bool contains(const std::string& id) const;

    std::vector<Topic> topics() const;
    std::vector<Opinion> opinions(bool active_only = true) const;
    std::vector<std::string> postings_in_state(LabelState state) const;
    std::size_t posting_count() const;

    // Labeled postings that may be used for training; never test-reserved.
    std::vector<std::string> training_postings() const;
    std::vector<std::string> test_postings() const;

    LabelMatrix export_labels(bool include_test = false) const;
    void export_triples(std::ostream& out) const;  // sorted subject\tpredicate\tobject
    // Canonical newline-delimited record stream (entities, then triples).
    void write_records(std::ostream& out) const;
    static OntologyStore read_records(std::istream& in);

    void save(const std::filesystem::path& file) const;
    static OntologyStore load(const std::filesystem::path& file);

    // Every triple resolves and is well typed; returns the first violation.
    std::optional<std::string> check_integrity() const;

private:
    enum class Kind { topic, opinion, place, posting };

    struct Data {
        std::map<std::string, Topic> topics;
        std::map<std::string, Opinion> opinions;
        std::map<std::string, InternetPlace> places;
        std::map<std::string, Posting> postings;
        std::map<std::string, Kind> kinds;
        std::set<Triple> triples;
        std::set<std::tuple<std::string, Predicate, std::string>> reverse;  // object, predicate, subject
    };

    void require(const std::string& id, Kind kind, const char* role) const;
    int insert_triple(const Triple& t);
    bool erase_triple(const Triple& t);
    std::set<std::string> topics_of_unlocked(const std::string& posting_id) const;
    std::string next_opinion_id() const;
    void check_statement_unique(const std::string& statement, const std::string& except = {}) const;
    std::string create_opinion_unlocked(const NewOpinion& proposal);
    void add_opinion_unlocked(Opinion opinion);

    mutable std::shared_mutex mutex_;
    Data data_;
};

}  // namespace opinionmap
