#include "opinionmap/sampler.hpp"

#include "opinionmap/common.hpp"
#include "opinionmap/rng.hpp"
#include "opinionmap/text_features.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace opinionmap {

double uncertainty(double probability) {
    const double confidence = probability >= 0.5 ? probability : 1.0 - probability;
    return 1.0 - confidence;
}

namespace {

struct Ranked {
    const ScoredPosting* posting;
    double key;
};

// Highest key first, ties by ascending id.
bool ranks_before(const Ranked& a, const Ranked& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.posting->id < b.posting->id;
}

void check_probability(const ScoredPosting& p) {
    if (!(p.probability >= 0.0 && p.probability <= 1.0)) {
        throw Error(ErrorCode::invariant_violation, "posting '" + p.id + "' has probability outside [0, 1]");
    }
}

// Top k of `candidates` under ranks_before, appended to `out`.
void take_top(std::vector<Ranked>& candidates, std::size_t k, Selection& out) {
    const auto n = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(),
                      ranks_before);
    for (std::size_t i = 0; i < n; ++i) {
        out.ids.push_back(candidates[i].posting->id);
        out.scores.push_back(candidates[i].key);
    }
}

}  // namespace

Selection sample_active(std::span<const ScoredPosting> pool, std::size_t k, const std::set<std::string>& exclude) {
    std::vector<Ranked> candidates;
    candidates.reserve(pool.size());
    for (const auto& p : pool) {
        check_probability(p);
        if (!exclude.count(p.id)) candidates.push_back({&p, uncertainty(p.probability)});
    }
    Selection out;
    out.shortfall = candidates.size() < k;
    take_top(candidates, k, out);
    return out;
}

Selection sample_top_confidence(std::span<const ScoredPosting> pool, std::size_t k,
                                const std::set<std::string>& exclude) {
    std::vector<Ranked> positives, negatives;
    for (const auto& p : pool) {
        check_probability(p);
        if (exclude.count(p.id)) continue;
        (p.probability >= 0.5 ? positives : negatives).push_back({&p, p.probability});
    }
    Selection out;
    out.shortfall = positives.size() + negatives.size() < k;
    take_top(positives, k, out);
    if (out.size() < k && !negatives.empty()) {
        out.filled_from_negatives = true;
        take_top(negatives, k - out.size(), out);
    }
    return out;
}

Selection sample_random(std::span<const ScoredPosting> pool, std::size_t k, std::uint64_t seed,
                        const std::set<std::string>& exclude) {
    std::vector<std::string> candidates;
    candidates.reserve(pool.size());
    for (const auto& p : pool) {
        if (!exclude.count(p.id)) candidates.push_back(p.id);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    Selection out;
    out.shortfall = candidates.size() < k;
    const auto n = std::min(k, candidates.size());
    // Partial Fisher-Yates: the first n slots end up a uniform n-subset.
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
        out.ids.push_back(candidates[i]);
        out.scores.push_back(0.0);
    }
    return out;
}

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::active: return "active";
    case Strategy::top_confidence: return "top_confidence";
    case Strategy::random: return "random";
    }
    return "random";
}

Strategy parse_strategy(std::string_view text) {
    if (text == "active") return Strategy::active;
    if (text == "top_confidence") return Strategy::top_confidence;
    if (text == "random") return Strategy::random;
    throw Error(ErrorCode::malformed_record, "unknown strategy '" + std::string(text) + "'");
}

std::size_t SampleBatch::total() const {
    std::size_t n = 0;
    for (const auto& t : topics) n += t.size();
    return n;
}

std::set<std::string> SampleBatch::posting_ids() const {
    std::set<std::string> ids;
    for (const auto& t : topics) {
        for (const auto* s : {&t.active, &t.top_confidence, &t.random}) ids.insert(s->ids.begin(), s->ids.end());
    }
    return ids;
}

std::vector<ManifestRow> SampleBatch::manifest() const {
    std::vector<ManifestRow> rows;
    for (const auto& t : topics) {
        const std::pair<Strategy, const Selection*> parts[] = {
            {Strategy::active, &t.active}, {Strategy::top_confidence, &t.top_confidence}, {Strategy::random, &t.random}};
        for (const auto& [strategy, sel] : parts) {
            for (std::size_t i = 0; i < sel->ids.size(); ++i) {
                rows.push_back({iteration, t.topic_id, strategy, sel->ids[i], sel->scores[i]});
            }
        }
    }
    return rows;
}

void validate_batch_sizes(const BatchSizes& sizes, std::size_t topic_count, std::size_t cap) {
    if (sizes.per_topic() * topic_count > cap) {
        throw Error(ErrorCode::config_error, "batch sizes " + std::to_string(sizes.active) + "+" +
                                                 std::to_string(sizes.top_confidence) + "+" + std::to_string(sizes.random) +
                                                 " over " + std::to_string(topic_count) + " topics exceed the cap of " +
                                                 std::to_string(cap) + " selections");
    }
}

SampleBatch compose_batch(int iteration, std::span<const TopicPool> pools, const BatchSizes& sizes, std::uint64_t seed,
                          std::size_t cap) {
    validate_batch_sizes(sizes, pools.size(), cap);
    SampleBatch batch;
    batch.iteration = iteration;
    batch.seed = seed;
    for (const auto& pool : pools) {
        TopicPartition part;
        part.topic_id = pool.topic_id;
        part.empty_pool = pool.postings.empty();
        std::set<std::string> taken;
        part.active = sample_active(pool.postings, sizes.active, taken);
        taken.insert(part.active.ids.begin(), part.active.ids.end());
        part.top_confidence = sample_top_confidence(pool.postings, sizes.top_confidence, taken);
        taken.insert(part.top_confidence.ids.begin(), part.top_confidence.ids.end());
        const auto topic_seed = derive_seed(seed, fnv1a(pool.topic_id), static_cast<std::uint64_t>(iteration));
        part.random = sample_random(pool.postings, sizes.random, topic_seed, taken);
        batch.topics.push_back(std::move(part));
    }
    return batch;
}

void write_manifest(std::ostream& out, std::span<const ManifestRow> rows) {
    out << "iteration\ttopic\tstrategy\tposting_id\tscore\n";
    for (const auto& r : rows) {
        out << r.iteration << '\t' << r.topic_id << '\t' << to_string(r.strategy) << '\t' << r.posting_id << '\t'
            << format_double(r.score) << '\n';
    }
}

std::vector<ManifestRow> read_manifest(std::istream& in) {
    std::vector<ManifestRow> rows;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || (number == 1 && line.rfind("iteration\t", 0) == 0)) continue;
        std::istringstream fields(line);
        std::string iteration, topic, strategy, id, score;
        if (!std::getline(fields, iteration, '\t') || !std::getline(fields, topic, '\t') ||
            !std::getline(fields, strategy, '\t') || !std::getline(fields, id, '\t') || !std::getline(fields, score)) {
            throw Error(ErrorCode::malformed_record, "manifest line " + std::to_string(number) + ": expected 5 fields");
        }
        try {
            rows.push_back({std::stoi(iteration), topic, parse_strategy(strategy), id, std::stod(score)});
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::malformed_record, "manifest line " + std::to_string(number) + ": bad number");
        }
    }
    return rows;
}

}  // namespace opinionmap
