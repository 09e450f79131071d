#include "opinionmap/network.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

namespace opinionmap {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Centrality values as CSV/JSON numbers.
double to_double(const Rational& r) { return r.convert_to<double>(); }

}  // namespace

std::vector<OpinionRelation> read_relations(std::istream& in) {
    std::map<std::string, Day> posting_day;
    std::set<OpinionRelation> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto fields = split(text, '\t');
        if (line_no == 1 && fields.size() == 3 && fields[0] == "posting_id") continue;
        auto fail = [&](const std::string& why) {
            throw Error(ErrorCode::malformed_record, "relations line " + std::to_string(line_no) + ": " + why);
        };
        if (fields.size() != 3) fail("expected 3 tab-separated fields");
        if (fields[0].empty() || fields[1].empty()) fail("empty id");
        Day day;
        try {
            day = parse_day(fields[2]);
        } catch (const Error& e) {
            fail(e.what());
        }
        const std::string posting(fields[0]);
        auto [it, inserted] = posting_day.emplace(posting, day);
        if (!inserted && it->second != day) fail("posting '" + posting + "' appears with two dates");
        out.insert({posting, std::string(fields[1]), day});
    }
    return {out.begin(), out.end()};
}

void write_relations(std::ostream& out, std::span<const OpinionRelation> relations) {
    out << "posting_id\topinion_id\tdate\n";
    for (const auto& r : relations) out << r.posting_id << '\t' << r.opinion_id << '\t' << format_day(r.day) << '\n';
}

std::vector<OpinionRelation> relations_from_store(const OntologyStore& store) {
    std::vector<OpinionRelation> out;
    std::map<std::string, std::optional<Day>> days;
    for (const auto& t : store.query({std::nullopt, Predicate::expresses_opinion, std::nullopt})) {
        auto it = days.find(t.subject);
        if (it == days.end()) {
            const auto p = store.posting(t.subject);
            std::optional<Day> day;
            if (p && p->label_state != LabelState::unlabeled) day = day_of(p->timestamp);
            it = days.emplace(t.subject, day).first;
        }
        if (it->second) out.push_back({t.subject, t.object, *it->second});
    }
    std::sort(out.begin(), out.end());
    return out;
}

DayWindow DayWindow::ending(Day last, std::string_view length) {
    int days = 0;
    const auto digits = length.substr(0, length.size() - (length.ends_with('d') ? 1 : 0));
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), days);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || days < 1) {
        throw Error(ErrorCode::invalid_argument, "bad window length '" + std::string(length) + "', expected e.g. 14d");
    }
    return {last - std::chrono::days(days - 1), last};
}

std::optional<DayWindow> span_of(std::span<const OpinionRelation> relations) {
    if (relations.empty()) return std::nullopt;
    DayWindow w{relations.front().day, relations.front().day};
    for (const auto& r : relations) {
        w.first = std::min(w.first, r.day);
        w.last = std::max(w.last, r.day);
    }
    return w;
}

std::vector<OpinionCount> frequency_distribution(std::span<const OpinionRelation> relations,
                                                 std::optional<DayWindow> window) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : relations) {
        if (!window || window->contains(r.day)) ++counts[r.opinion_id];
    }
    std::vector<OpinionCount> out;
    for (const auto& [id, n] : counts) out.push_back({id, n});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
    return out;
}

EdgeKey edge_key(const std::string& a, const std::string& b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

std::string edge_label(const EdgeKey& e) { return e.first + "|" + e.second; }

std::uint64_t NetworkSnapshot::weight(const std::string& a, const std::string& b) const {
    const auto it = edges.find(edge_key(a, b));
    return it == edges.end() ? 0 : it->second;
}

std::uint64_t NetworkSnapshot::total_weight() const {
    std::uint64_t total = 0;
    for (const auto& [e, w] : edges) total += w;
    return total;
}

NetworkSnapshot build_snapshot(std::span<const OpinionRelation> relations, DayWindow window) {
    std::map<std::string, std::set<std::string>> by_posting;
    std::set<std::string> nodes;
    for (const auto& r : relations) {
        if (!window.contains(r.day)) continue;
        by_posting[r.posting_id].insert(r.opinion_id);
        nodes.insert(r.opinion_id);
    }
    NetworkSnapshot s;
    s.window = window;
    s.nodes.assign(nodes.begin(), nodes.end());
    for (const auto& [posting, opinions] : by_posting) {
        for (auto a = opinions.begin(); a != opinions.end(); ++a) {
            for (auto b = std::next(a); b != opinions.end(); ++b) ++s.edges[{*a, *b}];
        }
    }
    return s;
}

std::map<Day, NetworkSnapshot> daily_snapshots(std::span<const OpinionRelation> relations,
                                               std::optional<DayWindow> window) {
    std::map<Day, std::vector<OpinionRelation>> by_day;
    for (const auto& r : relations) {
        if (!window || window->contains(r.day)) by_day[r.day].push_back(r);
    }
    std::map<Day, NetworkSnapshot> out;
    for (const auto& [day, rs] : by_day) out.emplace(day, build_snapshot(rs, DayWindow::single(day)));
    return out;
}

std::map<std::string, ExactCentrality> exact_centrality(const NetworkSnapshot& snapshot) {
    using boost::multiprecision::cpp_int;
    const std::size_t n = snapshot.nodes.size();
    std::map<std::string, ExactCentrality> out;
    for (const auto& id : snapshot.nodes) out[id] = {};
    if (n < 2) return out;

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[snapshot.nodes[i]] = i;
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& [e, w] : snapshot.edges) {
        const auto a = index.at(e.first), b = index.at(e.second);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }

    std::vector<Rational> closeness(n), betweenness(n);
    std::vector<long> dist(n);
    std::vector<cpp_int> sigma(n);
    std::vector<Rational> delta(n);
    std::vector<std::vector<std::size_t>> preds(n);
    std::vector<std::size_t> order, queue;
    for (std::size_t s = 0; s < n; ++s) {
        std::fill(dist.begin(), dist.end(), -1);
        std::fill(sigma.begin(), sigma.end(), 0);
        for (auto& p : preds) p.clear();
        order.clear();
        queue.assign(1, s);
        dist[s] = 0;
        sigma[s] = 1;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const auto v = queue[head];
            order.push_back(v);
            for (auto w : adj[v]) {
                if (dist[w] < 0) {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if (dist[w] == dist[v] + 1) {
                    sigma[w] += sigma[v];
                    preds[w].push_back(v);
                }
            }
        }
        for (auto v : order) {
            if (v != s) closeness[s] += Rational(1, dist[v]);
        }
        std::fill(delta.begin(), delta.end(), Rational(0));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const auto w = *it;
            for (auto v : preds[w]) delta[v] += Rational(sigma[v], sigma[w]) * (1 + delta[w]);
            if (w != s) betweenness[w] += delta[w];
        }
    }

    const Rational n1(static_cast<long>(n - 1));
    const Rational pairs = Rational(static_cast<long>((n - 1) * (n - 2)), 2);
    for (std::size_t i = 0; i < n; ++i) {
        auto& c = out[snapshot.nodes[i]];
        c.degree = Rational(static_cast<long>(adj[i].size())) / n1;
        c.closeness = closeness[i] / n1;
        // Every unordered pair was counted from both ends.
        c.betweenness = pairs == 0 ? Rational(0) : betweenness[i] / 2 / pairs;
    }
    return out;
}

void compute_centrality(NetworkSnapshot& snapshot) {
    snapshot.centrality.clear();
    for (const auto& [id, c] : exact_centrality(snapshot)) {
        snapshot.centrality[id] = {to_double(c.degree), to_double(c.closeness), to_double(c.betweenness)};
    }
}

std::vector<SeriesPoint> edge_weight_proportions(const std::map<Day, NetworkSnapshot>& daily) {
    std::vector<SeriesPoint> out;
    for (const auto& [day, s] : daily) {
        const auto total = s.total_weight();
        if (total == 0) continue;
        for (const auto& [e, w] : s.edges) {
            out.push_back({day, edge_label(e), static_cast<double>(w) / static_cast<double>(total)});
        }
    }
    return out;
}

std::vector<SeriesPoint> group_centrality_series(const std::map<Day, NetworkSnapshot>& daily,
                                                 const std::map<std::string, bool>& conspiracy) {
    static const char* const groups[] = {"conspiracy", "non_conspiracy"};
    static const char* const measures[] = {"degree", "closeness", "betweenness"};
    std::vector<SeriesPoint> out;
    for (const auto& [day, s] : daily) {
        double sum[2][3] = {};
        std::size_t members[2] = {};
        for (const auto& id : s.nodes) {
            const auto flag = conspiracy.find(id);
            if (flag == conspiracy.end()) {
                throw Error(ErrorCode::unknown_entity, "opinion '" + id + "' has no conspiracy flag");
            }
            const auto c = s.centrality.find(id);
            if (c == s.centrality.end()) {
                throw Error(ErrorCode::invalid_argument, "snapshot for " + format_day(day) + " has no centrality");
            }
            const int g = flag->second ? 0 : 1;
            ++members[g];
            sum[g][0] += c->second.degree;
            sum[g][1] += c->second.closeness;
            sum[g][2] += c->second.betweenness;
        }
        for (int g = 0; g < 2; ++g) {
            for (int m = 0; m < 3; ++m) {
                SeriesPoint p{day, std::string(groups[g]) + "." + measures[m], std::nullopt};
                if (members[g] > 0) p.value = sum[g][m] / static_cast<double>(members[g]);
                out.push_back(std::move(p));
            }
        }
    }
    return out;
}

std::map<std::string, bool> conspiracy_flags(const OntologyStore& store) {
    std::map<std::string, bool> out;
    for (const auto& o : store.opinions(false)) out[o.id] = o.conspiracy;
    return out;
}

std::map<Day, double> read_ratios(std::istream& in) {
    std::map<Day, double> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto fields = split(text, ',');
        auto fail = [&](const std::string& why) {
            throw Error(ErrorCode::invalid_argument, "ratio file line " + std::to_string(line_no) + ": " + why);
        };
        if (fields.size() != 2) fail("expected date,ratio");
        if (line_no == 1 && trim(fields[0]) == "date") continue;
        Day day;
        try {
            day = parse_day(trim(fields[0]));
        } catch (const Error& e) {
            fail(e.what());
        }
        const auto value_text = trim(fields[1]);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
        if (ec != std::errc() || ptr != value_text.data() + value_text.size()) {
            fail("'" + std::string(value_text) + "' is not a number");
        }
        if (!(value >= 0.0 && value <= 1.0)) fail("ratio " + std::string(value_text) + " is outside [0, 1]");
        if (!out.emplace(day, value).second) fail("duplicate date " + format_day(day));
    }
    return out;
}

std::vector<OverlayPoint> overlay_series(std::span<const SeriesPoint> series, const std::map<Day, double>& ratios) {
    std::vector<OverlayPoint> out;
    out.reserve(series.size());
    for (const auto& p : series) {
        OverlayPoint o{p.day, p.key, p.value, std::nullopt};
        if (const auto it = ratios.find(p.day); it != ratios.end()) o.ratio = it->second;
        out.push_back(std::move(o));
    }
    return out;
}

namespace {

void write_optional(std::ostream& out, const std::optional<double>& v) {
    if (v) out << format_double(*v);
}

}  // namespace

void write_frequency_csv(std::ostream& out, std::span<const OpinionCount> counts) {
    out << "opinion_id,count\n";
    for (const auto& c : counts) out << c.opinion_id << ',' << c.count << '\n';
}

void write_series_csv(std::ostream& out, std::span<const SeriesPoint> series) {
    out << "date,key,value\n";
    for (const auto& p : series) {
        out << format_day(p.day) << ',' << p.key << ',';
        write_optional(out, p.value);
        out << '\n';
    }
}

void write_overlay_csv(std::ostream& out, std::span<const OverlayPoint> series) {
    out << "date,key,value,ratio\n";
    for (const auto& p : series) {
        out << format_day(p.day) << ',' << p.key << ',';
        write_optional(out, p.value);
        out << ',';
        write_optional(out, p.ratio);
        out << '\n';
    }
}

void write_centrality_csv(std::ostream& out, const NetworkSnapshot& snapshot) {
    out << "start,end,opinion_id,degree,closeness,betweenness\n";
    const auto start = format_day(snapshot.window.first), end = format_day(snapshot.window.last);
    for (const auto& id : snapshot.nodes) {
        const auto& c = snapshot.centrality.at(id);
        out << start << ',' << end << ',' << id << ',' << format_double(c.degree) << ',' << format_double(c.closeness)
            << ',' << format_double(c.betweenness) << '\n';
    }
}

void write_node_link(std::ostream& out, const NetworkSnapshot& snapshot, const std::map<std::string, bool>& conspiracy) {
    using nlohmann::ordered_json;
    ordered_json nodes = ordered_json::array();
    for (const auto& id : snapshot.nodes) {
        const auto c = snapshot.centrality.find(id);
        if (c == snapshot.centrality.end()) throw Error(ErrorCode::invalid_argument, "snapshot has no centrality");
        const auto flag = conspiracy.find(id);
        nodes.push_back({{"id", id},
                         {"degree", c->second.degree},
                         {"closeness", c->second.closeness},
                         {"betweenness", c->second.betweenness},
                         {"conspiracy", flag != conspiracy.end() && flag->second}});
    }
    ordered_json links = ordered_json::array();
    for (const auto& [e, w] : snapshot.edges) links.push_back({{"source", e.first}, {"target", e.second}, {"weight", w}});
    ordered_json doc = {{"directed", false},
                        {"multigraph", false},
                        {"graph", {{"start", format_day(snapshot.window.first)}, {"end", format_day(snapshot.window.last)}}},
                        {"nodes", std::move(nodes)},
                        {"links", std::move(links)}};
    out << doc.dump(2) << '\n';
}

}  // namespace opinionmap
