#include "opinionmap/ontology.hpp"

#include "opinionmap/text_features.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>

namespace opinionmap {

using json = nlohmann::json;

std::string_view to_string(Platform p) {
    switch (p) {
    case Platform::facebook: return "facebook";
    case Platform::twitter: return "twitter";
    case Platform::youtube: return "youtube";
    case Platform::other: return "other";
    }
    return "other";
}

std::string_view to_string(LabelState s) {
    switch (s) {
    case LabelState::unlabeled: return "unlabeled";
    case LabelState::labeled: return "labeled";
    case LabelState::test_reserved: return "test-reserved";
    }
    return "unlabeled";
}

std::string_view to_string(Predicate p) {
    switch (p) {
    case Predicate::expresses_opinion: return "expresses_opinion";
    case Predicate::about_topic: return "about_topic";
    case Predicate::posted_in: return "posted_in";
    case Predicate::opinion_of_topic: return "opinion_of_topic";
    }
    return "about_topic";
}

Platform parse_platform(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "facebook") return Platform::facebook;
    if (lower == "twitter") return Platform::twitter;
    if (lower == "youtube") return Platform::youtube;
    return Platform::other;
}

LabelState parse_label_state(std::string_view text) {
    if (text == "unlabeled") return LabelState::unlabeled;
    if (text == "labeled") return LabelState::labeled;
    if (text == "test-reserved") return LabelState::test_reserved;
    throw Error(ErrorCode::malformed_record, "unknown label state '" + std::string(text) + "'");
}

Predicate parse_predicate(std::string_view text) {
    for (auto p : {Predicate::expresses_opinion, Predicate::about_topic, Predicate::posted_in,
                   Predicate::opinion_of_topic}) {
        if (to_string(p) == text) return p;
    }
    throw Error(ErrorCode::malformed_record, "unknown predicate '" + std::string(text) + "'");
}

void LabelMatrix::write_tsv(std::ostream& out) const {
    out << "posting";
    for (const auto& t : topic_columns) out << "\ttopic:" << t;
    for (const auto& o : opinion_columns) out << "\topinion:" << o;
    out << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out << rows[r];
        for (auto v : values[r]) out << '\t' << static_cast<int>(v);
        out << '\n';
    }
}

KeywordMatcher::KeywordMatcher(const TopicKeywords& keywords) {
    for (const auto& [topic, words] : keywords) {
        for (const auto& word : words) {
            auto tokens = tokenize(word);
            if (tokens.empty()) continue;
            auto first = tokens.front();
            by_first_token_[first].push_back(Entry{std::move(tokens), topic});
        }
    }
}

std::set<std::string> KeywordMatcher::match(std::string_view text) const {
    std::set<std::string> topics;
    const auto tokens = tokenize(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto it = by_first_token_.find(tokens[i]);
        if (it == by_first_token_.end()) continue;
        for (const auto& entry : it->second) {
            if (i + entry.tokens.size() > tokens.size()) continue;
            if (std::equal(entry.tokens.begin(), entry.tokens.end(), tokens.begin() + static_cast<long>(i))) {
                topics.insert(entry.topic);
            }
        }
    }
    return topics;
}

std::vector<Topic> default_topics() {
    const std::set<std::string> fire_climate = {
        "bushfire",       "australian fires",   "arson",          "scottyfrommarketing", "liarfromtheshiar",
        "australiaburns", "australiaburning",   "itsthegreensfault", "backburning",      "back burning",
        "climate change", "climate mergency",   "climate hoax",   "climate crisis",      "climate action now"};
    const std::set<std::string> covid_vaccine = {
        "covid",     "coronavirus", "covid-19",  "pandemic",   "world health organization", "vaccine",
        "social distancing", "quarantine", "plandemic", "chinavirus", "wuhan", "stayhome",
        "MadeinChina", "ChinaLiedPeopleDied", "5G", "chinacentric"};
    return {
        Topic{"bushfire", "2019-20 Australian bushfire season", fire_climate},
        Topic{"climate-change", "Climate change", fire_climate},
        Topic{"covid-19", "COVID-19", covid_vaccine},
        Topic{"vaccination", "Vaccination", covid_vaccine},
    };
}

OntologyStore::OntologyStore(const OntologyStore& other) {
    std::shared_lock lock(other.mutex_);
    data_ = other.data_;
}

OntologyStore& OntologyStore::operator=(const OntologyStore& other) {
    if (this == &other) return *this;
    Data copy;
    {
        std::shared_lock lock(other.mutex_);
        copy = other.data_;
    }
    std::unique_lock lock(mutex_);
    data_ = std::move(copy);
    return *this;
}

void OntologyStore::require(const std::string& id, Kind kind, const char* role) const {
    auto it = data_.kinds.find(id);
    if (it == data_.kinds.end()) {
        throw Error(ErrorCode::unknown_entity, std::string("unknown entity '") + id + "' (" + role + ")");
    }
    if (it->second != kind) {
        throw Error(ErrorCode::invalid_argument, std::string("entity '") + id + "' has the wrong kind for " + role);
    }
}

void OntologyStore::add_topic(Topic topic) {
    std::unique_lock lock(mutex_);
    if (topic.id.empty()) throw Error(ErrorCode::invalid_argument, "topic id is empty");
    if (data_.kinds.count(topic.id)) throw Error(ErrorCode::duplicate_entity, "duplicate id '" + topic.id + "'");
    data_.kinds.emplace(topic.id, Kind::topic);
    data_.topics.emplace(topic.id, std::move(topic));
}

void OntologyStore::add_place(InternetPlace place) {
    std::unique_lock lock(mutex_);
    if (place.id.empty()) throw Error(ErrorCode::invalid_argument, "place id is empty");
    if (data_.kinds.count(place.id)) throw Error(ErrorCode::duplicate_entity, "duplicate id '" + place.id + "'");
    data_.kinds.emplace(place.id, Kind::place);
    data_.places.emplace(place.id, std::move(place));
}

void OntologyStore::add_posting(Posting posting) {
    std::unique_lock lock(mutex_);
    if (posting.id.empty()) throw Error(ErrorCode::invalid_argument, "posting id is empty");
    if (data_.kinds.count(posting.id)) throw Error(ErrorCode::duplicate_entity, "duplicate id '" + posting.id + "'");
    if (posting.place_id) require(*posting.place_id, Kind::place, "place");
    const auto id = posting.id;
    const auto place = posting.place_id;
    data_.kinds.emplace(id, Kind::posting);
    data_.postings.emplace(id, std::move(posting));
    if (place) insert_triple(Triple{id, Predicate::posted_in, *place});
}

void OntologyStore::check_statement_unique(const std::string& statement, const std::string& except) const {
    for (const auto& [id, op] : data_.opinions) {
        if (op.active() && id != except && op.statement == statement) {
            throw Error(ErrorCode::duplicate_entity, "an active opinion already states '" + statement + "' (" + id + ")");
        }
    }
}

void OntologyStore::add_opinion_unlocked(Opinion opinion) {
    if (opinion.id.empty()) throw Error(ErrorCode::invalid_argument, "opinion id is empty");
    if (data_.kinds.count(opinion.id)) throw Error(ErrorCode::duplicate_entity, "duplicate id '" + opinion.id + "'");
    if (opinion.active()) {
        if (opinion.topic_ids.empty()) {
            throw Error(ErrorCode::invalid_argument, "opinion '" + opinion.id + "' must link to at least one topic");
        }
        check_statement_unique(opinion.statement);
    }
    for (const auto& t : opinion.topic_ids) require(t, Kind::topic, "opinion topic");
    const auto id = opinion.id;
    const auto topics = opinion.topic_ids;
    data_.kinds.emplace(id, Kind::opinion);
    data_.opinions.emplace(id, std::move(opinion));
    for (const auto& t : topics) insert_triple(Triple{id, Predicate::opinion_of_topic, t});
}

void OntologyStore::add_opinion(Opinion opinion) {
    std::unique_lock lock(mutex_);
    add_opinion_unlocked(std::move(opinion));
}

std::string OntologyStore::next_opinion_id() const {
    std::size_t n = data_.opinions.size() + 1;
    for (;; ++n) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "op-%04zu", n);
        if (!data_.kinds.count(buf)) return buf;
    }
}

std::string OntologyStore::create_opinion_unlocked(const NewOpinion& proposal) {
    Opinion op;
    op.id = next_opinion_id();
    op.statement = proposal.statement;
    op.topic_ids = proposal.topic_ids;
    op.conspiracy = proposal.conspiracy;
    add_opinion_unlocked(op);
    return op.id;
}

std::string OntologyStore::create_opinion(const NewOpinion& proposal) {
    std::unique_lock lock(mutex_);
    return create_opinion_unlocked(proposal);
}

int OntologyStore::insert_triple(const Triple& t) {
    if (!data_.triples.insert(t).second) return 0;
    data_.reverse.emplace(t.object, t.predicate, t.subject);
    return 1;
}

bool OntologyStore::erase_triple(const Triple& t) {
    if (!data_.triples.erase(t)) return false;
    data_.reverse.erase(std::make_tuple(t.object, t.predicate, t.subject));
    return true;
}

int OntologyStore::assert_triple(const Triple& triple) {
    std::unique_lock lock(mutex_);
    switch (triple.predicate) {
    case Predicate::expresses_opinion:
        require(triple.subject, Kind::posting, "subject");
        require(triple.object, Kind::opinion, "object");
        if (!data_.opinions.at(triple.object).active()) {
            throw Error(ErrorCode::invalid_argument, "opinion '" + triple.object + "' is not active");
        }
        break;
    case Predicate::about_topic:
        require(triple.subject, Kind::posting, "subject");
        require(triple.object, Kind::topic, "object");
        break;
    case Predicate::posted_in:
        require(triple.subject, Kind::posting, "subject");
        require(triple.object, Kind::place, "object");
        break;
    case Predicate::opinion_of_topic:
        require(triple.subject, Kind::opinion, "subject");
        require(triple.object, Kind::topic, "object");
        break;
    }
    const int delta = insert_triple(triple);
    if (delta && triple.predicate == Predicate::opinion_of_topic) {
        data_.opinions.at(triple.subject).topic_ids.insert(triple.object);
    }
    return delta;
}

std::vector<Triple> OntologyStore::query(const TriplePattern& pattern) const {
    std::shared_lock lock(mutex_);
    std::vector<Triple> out;
    auto matches = [&](const Triple& t) {
        return (!pattern.predicate || t.predicate == *pattern.predicate) && (!pattern.object || t.object == *pattern.object) &&
               (!pattern.subject || t.subject == *pattern.subject);
    };
    if (pattern.subject) {
        for (auto it = data_.triples.lower_bound(Triple{*pattern.subject, Predicate::expresses_opinion, ""});
             it != data_.triples.end() && it->subject == *pattern.subject; ++it) {
            if (matches(*it)) out.push_back(*it);
        }
    } else if (pattern.object) {
        for (auto it = data_.reverse.lower_bound(std::make_tuple(*pattern.object, Predicate::expresses_opinion, std::string()));
             it != data_.reverse.end() && std::get<0>(*it) == *pattern.object; ++it) {
            Triple t{std::get<2>(*it), std::get<1>(*it), std::get<0>(*it)};
            if (matches(t)) out.push_back(std::move(t));
        }
        std::sort(out.begin(), out.end());
    } else {
        for (const auto& t : data_.triples) {
            if (matches(t)) out.push_back(t);
        }
    }
    return out;
}

std::size_t OntologyStore::triple_count() const {
    std::shared_lock lock(mutex_);
    return data_.triples.size();
}

std::set<std::string> OntologyStore::topics_of_unlocked(const std::string& posting_id) const {
    std::set<std::string> topics;
    for (auto it = data_.triples.lower_bound(Triple{posting_id, Predicate::expresses_opinion, ""});
         it != data_.triples.end() && it->subject == posting_id; ++it) {
        if (it->predicate == Predicate::about_topic) {
            topics.insert(it->object);
        } else if (it->predicate == Predicate::expresses_opinion) {
            const auto& op = data_.opinions.at(it->object);
            topics.insert(op.topic_ids.begin(), op.topic_ids.end());
        }
    }
    return topics;
}

std::set<std::string> OntologyStore::query_topics(const std::string& posting_id) const {
    std::shared_lock lock(mutex_);
    return topics_of_unlocked(posting_id);
}

PostingLabel OntologyStore::label_of(const std::string& posting_id) const {
    std::shared_lock lock(mutex_);
    PostingLabel label;
    label.topics = topics_of_unlocked(posting_id);
    for (auto it = data_.triples.lower_bound(Triple{posting_id, Predicate::expresses_opinion, ""});
         it != data_.triples.end() && it->subject == posting_id && it->predicate == Predicate::expresses_opinion; ++it) {
        if (data_.opinions.at(it->object).active()) label.opinions.insert(it->object);
    }
    return label;
}

void OntologyStore::apply_label(const std::string& posting_id, const PostingLabel& label, std::optional<int> batch) {
    std::unique_lock lock(mutex_);
    require(posting_id, Kind::posting, "posting");
    for (const auto& t : label.topics) require(t, Kind::topic, "topic label");
    for (const auto& o : label.opinions) {
        require(o, Kind::opinion, "opinion label");
        if (!data_.opinions.at(o).active()) {
            throw Error(ErrorCode::invalid_argument, "opinion '" + o + "' is not active");
        }
    }
    for (const auto& t : label.topics) insert_triple(Triple{posting_id, Predicate::about_topic, t});
    for (const auto& o : label.opinions) insert_triple(Triple{posting_id, Predicate::expresses_opinion, o});
    auto& posting = data_.postings.at(posting_id);
    if (posting.label_state != LabelState::test_reserved) {
        if (posting.label_state == LabelState::unlabeled && batch) posting.source_batch = batch;
        posting.label_state = LabelState::labeled;
    }
}

void OntologyStore::reserve_for_test(const std::string& posting_id) {
    std::unique_lock lock(mutex_);
    require(posting_id, Kind::posting, "posting");
    auto& posting = data_.postings.at(posting_id);
    if (posting.label_state == LabelState::labeled) {
        throw Error(ErrorCode::invalid_argument, "posting '" + posting_id + "' is already in the labeled set");
    }
    posting.label_state = LabelState::test_reserved;
}

Opinion OntologyStore::merge_opinions(const std::string& keep, const std::string& absorb) {
    std::unique_lock lock(mutex_);
    if (keep == absorb) throw Error(ErrorCode::invalid_argument, "cannot merge opinion '" + keep + "' into itself");
    require(keep, Kind::opinion, "merge target");
    require(absorb, Kind::opinion, "merged opinion");
    auto& kept = data_.opinions.at(keep);
    auto& gone = data_.opinions.at(absorb);
    if (!kept.active() || !gone.active()) throw Error(ErrorCode::invalid_argument, "both opinions must be active to merge");

    std::vector<std::string> postings;
    for (auto it = data_.reverse.lower_bound(std::make_tuple(absorb, Predicate::expresses_opinion, std::string()));
         it != data_.reverse.end() && std::get<0>(*it) == absorb && std::get<1>(*it) == Predicate::expresses_opinion; ++it) {
        postings.push_back(std::get<2>(*it));
    }
    for (const auto& p : postings) {
        erase_triple(Triple{p, Predicate::expresses_opinion, absorb});
        insert_triple(Triple{p, Predicate::expresses_opinion, keep});
    }
    for (const auto& t : gone.topic_ids) {
        if (kept.topic_ids.insert(t).second) insert_triple(Triple{keep, Predicate::opinion_of_topic, t});
    }
    gone.status = Opinion::Status::merged;
    gone.successors = {keep};
    return kept;
}

std::vector<std::string> OntologyStore::split_opinion(const std::string& id, const std::vector<NewOpinion>& parts) {
    std::unique_lock lock(mutex_);
    require(id, Kind::opinion, "split opinion");
    if (!data_.opinions.at(id).active()) throw Error(ErrorCode::invalid_argument, "opinion '" + id + "' is not active");
    if (parts.size() < 2) throw Error(ErrorCode::invalid_argument, "a split needs at least two parts");
    // The original stays active until its parts exist so statement checks see it.
    const auto saved = data_;
    std::vector<std::string> ids;
    try {
        data_.opinions.at(id).status = Opinion::Status::split;
        for (const auto& part : parts) ids.push_back(create_opinion_unlocked(part));
    } catch (...) {
        data_ = saved;
        throw;
    }
    data_.opinions.at(id).successors = ids;
    return ids;
}

IngestionReport OntologyStore::ingest_postings(std::istream& records, const TopicKeywords& keywords) {
    IngestionReport report;
    const KeywordMatcher matcher(keywords);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(records, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Posting posting;
        std::optional<std::string> place;
        try {
            const auto rec = json::parse(line);
            if (!rec.is_object()) throw Error(ErrorCode::malformed_record, "record is not an object");
            for (const char* field : {"id", "text", "platform"}) {
                if (!rec.contains(field) || !rec[field].is_string()) {
                    throw Error(ErrorCode::malformed_record, std::string("missing string field '") + field + "'");
                }
            }
            const char* ts_key = rec.contains("timestamp_iso8601") ? "timestamp_iso8601" : "timestamp";
            if (!rec.contains(ts_key) || !rec[ts_key].is_string()) {
                throw Error(ErrorCode::malformed_record, "missing string field 'timestamp'");
            }
            posting.id = rec["id"].get<std::string>();
            if (posting.id.empty()) throw Error(ErrorCode::malformed_record, "empty id");
            posting.text = rec["text"].get<std::string>();
            posting.platform = parse_platform(rec["platform"].get<std::string>());
            posting.timestamp = parse_timestamp(rec[ts_key].get<std::string>());
            if (rec.contains("place") && rec["place"].is_string() && !rec["place"].get<std::string>().empty()) {
                place = rec["place"].get<std::string>();
            }
        } catch (const json::exception& e) {
            report.errors.push_back({line_no, std::string("invalid JSON: ") + e.what()});
            continue;
        } catch (const Error& e) {
            report.errors.push_back({line_no, e.what()});
            continue;
        }

        std::unique_lock lock(mutex_);
        if (data_.kinds.count(posting.id)) {
            ++report.duplicates;
            continue;
        }
        if (place) {
            const std::string place_id = "place:" + *place;
            if (!data_.kinds.count(place_id)) {
                data_.kinds.emplace(place_id, Kind::place);
                data_.places.emplace(place_id, InternetPlace{place_id, posting.platform, *place});
            }
            posting.place_id = place_id;
        }
        posting.keyword_topics = matcher.match(posting.text);
        for (const auto& t : posting.keyword_topics) ++report.per_topic[t];
        if (posting.keyword_topics.empty()) ++report.off_keyword;
        const auto id = posting.id;
        const auto place_id = posting.place_id;
        data_.kinds.emplace(id, Kind::posting);
        data_.postings.emplace(id, std::move(posting));
        if (place_id) insert_triple(Triple{id, Predicate::posted_in, *place_id});
        ++report.ingested;
    }
    return report;
}

std::optional<Topic> OntologyStore::topic(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = data_.topics.find(id);
    return it == data_.topics.end() ? std::nullopt : std::optional<Topic>(it->second);
}

std::optional<Opinion> OntologyStore::opinion(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = data_.opinions.find(id);
    return it == data_.opinions.end() ? std::nullopt : std::optional<Opinion>(it->second);
}

std::optional<Posting> OntologyStore::posting(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = data_.postings.find(id);
    return it == data_.postings.end() ? std::nullopt : std::optional<Posting>(it->second);
}

std::optional<InternetPlace> OntologyStore::place(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = data_.places.find(id);
    return it == data_.places.end() ? std::nullopt : std::optional<InternetPlace>(it->second);
}

bool OntologyStore::contains(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return data_.kinds.count(id) > 0;
}

std::vector<Topic> OntologyStore::topics() const {
    std::shared_lock lock(mutex_);
    std::vector<Topic> out;
    for (const auto& [id, t] : data_.topics) out.push_back(t);
    return out;
}

std::vector<Opinion> OntologyStore::opinions(bool active_only) const {
    std::shared_lock lock(mutex_);
    std::vector<Opinion> out;
    for (const auto& [id, op] : data_.opinions) {
        if (!active_only || op.active()) out.push_back(op);
    }
    return out;
}

std::vector<std::string> OntologyStore::postings_in_state(LabelState state) const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, p] : data_.postings) {
        if (p.label_state == state) out.push_back(id);
    }
    return out;
}

std::size_t OntologyStore::posting_count() const {
    std::shared_lock lock(mutex_);
    return data_.postings.size();
}

std::vector<std::string> OntologyStore::training_postings() const { return postings_in_state(LabelState::labeled); }
std::vector<std::string> OntologyStore::test_postings() const { return postings_in_state(LabelState::test_reserved); }

LabelMatrix OntologyStore::export_labels(bool include_test) const {
    std::shared_lock lock(mutex_);
    LabelMatrix m;
    for (const auto& [id, t] : data_.topics) m.topic_columns.push_back(id);
    for (const auto& [id, op] : data_.opinions) {
        if (op.active()) m.opinion_columns.push_back(id);
    }
    for (const auto& [id, p] : data_.postings) {
        if (p.label_state == LabelState::unlabeled) continue;
        if (p.label_state == LabelState::test_reserved && !include_test) continue;
        const auto topics = topics_of_unlocked(id);
        std::vector<std::uint8_t> row;
        row.reserve(m.column_count());
        for (const auto& t : m.topic_columns) row.push_back(topics.count(t) ? 1 : 0);
        for (const auto& o : m.opinion_columns) {
            row.push_back(data_.triples.count(Triple{id, Predicate::expresses_opinion, o}) ? 1 : 0);
        }
        m.rows.push_back(id);
        m.values.push_back(std::move(row));
    }
    return m;
}

void OntologyStore::export_triples(std::ostream& out) const {
    std::vector<std::string> lines;
    {
        std::shared_lock lock(mutex_);
        lines.reserve(data_.triples.size());
        for (const auto& t : data_.triples) {
            lines.push_back(t.subject + '\t' + std::string(to_string(t.predicate)) + '\t' + t.object + '\n');
        }
    }
    // Byte order of the rendered lines, so plain `sort` agrees with the file.
    std::sort(lines.begin(), lines.end());
    for (const auto& l : lines) out << l;
}

namespace {

json to_json(const std::set<std::string>& s) { return json(std::vector<std::string>(s.begin(), s.end())); }

std::string_view status_name(Opinion::Status s) {
    switch (s) {
    case Opinion::Status::active: return "active";
    case Opinion::Status::merged: return "merged";
    case Opinion::Status::split: return "split";
    }
    return "active";
}

}  // namespace

void OntologyStore::write_records(std::ostream& out) const {
    std::shared_lock lock(mutex_);
    for (const auto& [id, t] : data_.topics) {
        out << json{{"kind", "topic"}, {"id", id}, {"name", t.name}, {"keywords", to_json(t.keywords)}}.dump() << '\n';
    }
    for (const auto& [id, p] : data_.places) {
        out << json{{"kind", "place"}, {"id", id}, {"platform", to_string(p.platform)}, {"handle", p.url_or_handle}}.dump()
            << '\n';
    }
    for (const auto& [id, op] : data_.opinions) {
        out << json{{"kind", "opinion"},          {"id", id},
                    {"statement", op.statement},  {"topics", to_json(op.topic_ids)},
                    {"conspiracy", op.conspiracy}, {"status", status_name(op.status)},
                    {"successors", op.successors}}
                   .dump()
            << '\n';
    }
    for (const auto& [id, p] : data_.postings) {
        json rec{{"kind", "posting"},
                 {"id", id},
                 {"text", p.text},
                 {"platform", to_string(p.platform)},
                 {"timestamp", format_timestamp(p.timestamp)},
                 {"label_state", to_string(p.label_state)},
                 {"keyword_topics", to_json(p.keyword_topics)}};
        if (p.place_id) rec["place"] = *p.place_id;
        if (p.source_batch) rec["source_batch"] = *p.source_batch;
        out << rec.dump() << '\n';
    }
    for (const auto& t : data_.triples) {
        out << json{{"kind", "triple"}, {"s", t.subject}, {"p", to_string(t.predicate)}, {"o", t.object}}.dump() << '\n';
    }
}

OntologyStore OntologyStore::read_records(std::istream& in) {
    OntologyStore store;
    auto& d = store.data_;
    std::string line;
    std::size_t line_no = 0;
    std::vector<Triple> triples;
    try {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto rec = json::parse(line);
            const auto kind = rec.at("kind").get<std::string>();
            if (kind == "topic") {
                Topic t{rec.at("id"), rec.at("name"), rec.at("keywords").get<std::set<std::string>>()};
                d.kinds.emplace(t.id, Kind::topic);
                d.topics.emplace(t.id, std::move(t));
            } else if (kind == "place") {
                InternetPlace p{rec.at("id"), parse_platform(rec.at("platform").get<std::string>()), rec.at("handle")};
                d.kinds.emplace(p.id, Kind::place);
                d.places.emplace(p.id, std::move(p));
            } else if (kind == "opinion") {
                Opinion op;
                op.id = rec.at("id");
                op.statement = rec.at("statement");
                op.topic_ids = rec.at("topics").get<std::set<std::string>>();
                op.conspiracy = rec.at("conspiracy");
                const auto status = rec.at("status").get<std::string>();
                op.status = status == "merged" ? Opinion::Status::merged
                            : status == "split" ? Opinion::Status::split
                                                : Opinion::Status::active;
                op.successors = rec.value("successors", std::vector<std::string>{});
                d.kinds.emplace(op.id, Kind::opinion);
                d.opinions.emplace(op.id, std::move(op));
            } else if (kind == "posting") {
                Posting p;
                p.id = rec.at("id");
                p.text = rec.at("text");
                p.platform = parse_platform(rec.at("platform").get<std::string>());
                p.timestamp = parse_timestamp(rec.at("timestamp").get<std::string>());
                p.label_state = parse_label_state(rec.at("label_state").get<std::string>());
                p.keyword_topics = rec.value("keyword_topics", std::set<std::string>{});
                if (rec.contains("place")) p.place_id = rec["place"].get<std::string>();
                if (rec.contains("source_batch")) p.source_batch = rec["source_batch"].get<int>();
                d.kinds.emplace(p.id, Kind::posting);
                d.postings.emplace(p.id, std::move(p));
            } else if (kind == "triple") {
                triples.push_back(Triple{rec.at("s"), parse_predicate(rec.at("p").get<std::string>()), rec.at("o")});
            } else {
                throw Error(ErrorCode::malformed_record, "unknown record kind '" + kind + "'");
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_record, "store line " + std::to_string(line_no) + ": " + e.what());
    }
    for (const auto& t : triples) store.insert_triple(t);
    if (auto problem = store.check_integrity()) throw Error(ErrorCode::invariant_violation, *problem);
    return store;
}

void OntologyStore::save(const std::filesystem::path& file) const {
    std::ostringstream buffer;
    write_records(buffer);
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    const auto tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io_error, "cannot write " + tmp);
        out << buffer.str();
        if (!out.flush()) throw Error(ErrorCode::io_error, "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, file);
}

OntologyStore OntologyStore::load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read store " + file.string());
    return read_records(in);
}

std::optional<std::string> OntologyStore::check_integrity() const {
    std::shared_lock lock(mutex_);
    auto kind_of = [&](const std::string& id) -> std::optional<Kind> {
        auto it = data_.kinds.find(id);
        return it == data_.kinds.end() ? std::nullopt : std::optional<Kind>(it->second);
    };
    for (const auto& t : data_.triples) {
        const auto s = kind_of(t.subject);
        const auto o = kind_of(t.object);
        if (!s) return "triple subject '" + t.subject + "' does not resolve";
        if (!o) return "triple object '" + t.object + "' does not resolve";
        Kind want_s = Kind::posting, want_o = Kind::topic;
        switch (t.predicate) {
        case Predicate::expresses_opinion: want_o = Kind::opinion; break;
        case Predicate::about_topic: break;
        case Predicate::posted_in: want_o = Kind::place; break;
        case Predicate::opinion_of_topic: want_s = Kind::opinion; break;
        }
        if (*s != want_s || *o != want_o) {
            return "triple " + t.subject + " " + std::string(to_string(t.predicate)) + " " + t.object + " is ill-typed";
        }
    }
    for (const auto& [id, op] : data_.opinions) {
        if (op.active() && op.topic_ids.empty()) return "active opinion '" + id + "' has no topic";
        for (const auto& t : op.topic_ids) {
            if (!data_.triples.count(Triple{id, Predicate::opinion_of_topic, t})) {
                return "opinion '" + id + "' lacks its opinion_of_topic link to '" + t + "'";
            }
        }
    }
    return std::nullopt;
}

}  // namespace opinionmap
