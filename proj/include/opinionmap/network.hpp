#pragma once

#include "opinionmap/common.hpp"
#include "opinionmap/ontology.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace opinionmap {

using Rational = boost::multiprecision::cpp_rational;

struct OpinionRelation {
    std::string posting_id;
    std::string opinion_id;
    Day day{};

    auto operator<=>(const OpinionRelation&) const = default;
};

// Tab-separated posting_id, opinion_id, YYYY-MM-DD. A header line is
// optional. Repeated pairs collapse; a posting must keep one date.
std::vector<OpinionRelation> read_relations(std::istream& in);
void write_relations(std::ostream& out, std::span<const OpinionRelation> relations);

// expresses_opinion triples of every labeled or test-reserved posting, dated
// by the posting's UTC day. Sorted.
std::vector<OpinionRelation> relations_from_store(const OntologyStore& store);

// Inclusive range of days.
struct DayWindow {
    Day first{};
    Day last{};

    bool contains(Day d) const { return first <= d && d <= last; }
    static DayWindow single(Day d) { return {d, d}; }
    // "14d" ending at `last`.
    static DayWindow ending(Day last, std::string_view length);
};

// Smallest window covering every relation; nullopt when there are none.
std::optional<DayWindow> span_of(std::span<const OpinionRelation> relations);

struct OpinionCount {
    std::string opinion_id;
    std::size_t count = 0;
};

// Relations per opinion, descending by count, ties by id.
std::vector<OpinionCount> frequency_distribution(std::span<const OpinionRelation> relations,
                                                 std::optional<DayWindow> window = {});

struct Centrality {
    double degree = 0.0;
    double closeness = 0.0;
    double betweenness = 0.0;
};

struct ExactCentrality {
    Rational degree;
    Rational closeness;
    Rational betweenness;
};

using EdgeKey = std::pair<std::string, std::string>;  // first < second

struct NetworkSnapshot {
    DayWindow window;
    std::vector<std::string> nodes;          // sorted
    std::map<EdgeKey, std::uint64_t> edges;  // weight >= 1
    std::map<std::string, Centrality> centrality;

    std::uint64_t weight(const std::string& a, const std::string& b) const;
    std::uint64_t total_weight() const;
};

EdgeKey edge_key(const std::string& a, const std::string& b);
std::string edge_label(const EdgeKey& e);  // "a|b"

// Every posting with k opinions in the window adds one to each of its C(k,2)
// opinion pairs. Nodes are all opinions seen in the window.
NetworkSnapshot build_snapshot(std::span<const OpinionRelation> relations, DayWindow window);

// One snapshot per day that has relations, in day order.
std::map<Day, NetworkSnapshot> daily_snapshots(std::span<const OpinionRelation> relations,
                                               std::optional<DayWindow> window = {});

// Unweighted existence graph. Degree and harmonic closeness are normalised by
// n - 1, betweenness (over unordered pairs) by (n - 1)(n - 2) / 2.
std::map<std::string, ExactCentrality> exact_centrality(const NetworkSnapshot& snapshot);
void compute_centrality(NetworkSnapshot& snapshot);

struct SeriesPoint {
    Day day{};
    std::string key;
    std::optional<double> value;  // nullopt is a gap
};

// Per day, w_e / sum of weights. Days without edges contribute nothing.
std::vector<SeriesPoint> edge_weight_proportions(const std::map<Day, NetworkSnapshot>& daily);

// Mean of each measure over the members of each group present that day; a
// group absent on a day yields a gap. Keys are "<group>.<measure>" with groups
// "conspiracy" and "non_conspiracy". Snapshots need centrality.
std::vector<SeriesPoint> group_centrality_series(const std::map<Day, NetworkSnapshot>& daily,
                                                 const std::map<std::string, bool>& conspiracy);

std::map<std::string, bool> conspiracy_flags(const OntologyStore& store);

// date,ratio CSV with an optional header. Values outside [0, 1] are rejected
// with the offending line number.
std::map<Day, double> read_ratios(std::istream& in);

struct OverlayPoint {
    Day day{};
    std::string key;
    std::optional<double> value;
    std::optional<double> ratio;  // nullopt where the ratio file has no entry
};

std::vector<OverlayPoint> overlay_series(std::span<const SeriesPoint> series, const std::map<Day, double>& ratios);

void write_frequency_csv(std::ostream& out, std::span<const OpinionCount> counts);
void write_series_csv(std::ostream& out, std::span<const SeriesPoint> series);  // date,key,value
void write_overlay_csv(std::ostream& out, std::span<const OverlayPoint> series);
// start,end,opinion_id,degree,closeness,betweenness; one row per node.
void write_centrality_csv(std::ostream& out, const NetworkSnapshot& snapshot);
// Node-link JSON: nodes carry degree, closeness, betweenness and the
// conspiracy flag, links carry weight. Needs centrality.
void write_node_link(std::ostream& out, const NetworkSnapshot& snapshot, const std::map<std::string, bool>& conspiracy);

}  // namespace opinionmap
