#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opinionmap {

// One unlabeled posting with the current topic classifier's p(y = 1 | x).
struct ScoredPosting {
    std::string id;
    double probability = 0.5;
};

// u(x) = 1 - p(y_hat | x), with p(y_hat | x) = max(p, 1 - p).
double uncertainty(double probability);

struct Selection {
    std::vector<std::string> ids;
    std::vector<double> scores;  // u for active, p for top-confidence, 0 for random
    bool shortfall = false;      // fewer candidates than requested
    bool filled_from_negatives = false;

    std::size_t size() const { return ids.size(); }
};

// Ranks by u descending, ties by ascending id. Candidates in `exclude` are skipped.
Selection sample_active(std::span<const ScoredPosting> pool, std::size_t k, const std::set<std::string>& exclude = {});

// Among predicted positives (p >= 0.5), ranks by p descending with the same
// tie-break; tops up from the highest-p negatives when positives run out.
Selection sample_top_confidence(std::span<const ScoredPosting> pool, std::size_t k,
                                const std::set<std::string>& exclude = {});

// Uniform without replacement. The draw depends only on the set of candidate
// ids and the seed, not on pool order.
Selection sample_random(std::span<const ScoredPosting> pool, std::size_t k, std::uint64_t seed,
                        const std::set<std::string>& exclude = {});

struct BatchSizes {
    std::size_t active = 10;
    std::size_t top_confidence = 10;
    std::size_t random = 5;

    std::size_t per_topic() const { return active + top_confidence + random; }
};

enum class Strategy { active, top_confidence, random };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

struct TopicPartition {
    std::string topic_id;
    Selection active;
    Selection top_confidence;
    Selection random;
    bool empty_pool = false;

    std::size_t size() const { return active.size() + top_confidence.size() + random.size(); }
    bool shortfall() const { return active.shortfall || top_confidence.shortfall || random.shortfall; }
};

struct TopicPool {
    std::string topic_id;
    std::vector<ScoredPosting> postings;
};

struct ManifestRow {
    int iteration = 0;
    std::string topic_id;
    Strategy strategy = Strategy::random;
    std::string posting_id;
    double score = 0.0;
};

struct SampleBatch {
    int iteration = 0;
    std::uint64_t seed = 0;
    std::vector<TopicPartition> topics;

    // Posting-topic selections; a posting picked for two topics counts twice.
    std::size_t total() const;
    std::set<std::string> posting_ids() const;
    std::vector<ManifestRow> manifest() const;
};

// Rejects sizes whose per-iteration total over `topic_count` topics exceeds `cap`.
void validate_batch_sizes(const BatchSizes& sizes, std::size_t topic_count, std::size_t cap);

// Runs the three strategies per topic with within-topic deduplication
// (active first, then top-confidence, then random). Each topic draws its
// random share from its own seed stream.
SampleBatch compose_batch(int iteration, std::span<const TopicPool> pools, const BatchSizes& sizes, std::uint64_t seed,
                          std::size_t cap = 100);

// Tab-separated: iteration, topic, strategy, posting_id, score.
void write_manifest(std::ostream& out, std::span<const ManifestRow> rows);
std::vector<ManifestRow> read_manifest(std::istream& in);

}  // namespace opinionmap
