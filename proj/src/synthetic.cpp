#include "opinionmap/synthetic.hpp"

#include "opinionmap/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace opinionmap {

namespace {

const char* const kSyllables[] = {"ka", "lo", "mi", "ru", "te", "sa", "no", "vi", "de", "po", "qu", "zi", "fa", "gu", "he",
                                  "jo", "be", "xa", "wy", "ce", "do", "ni", "ra", "so", "tu", "ve", "mo", "li", "ge", "pa"};

class WordFactory {
public:
    explicit WordFactory(Rng& rng) : rng_(rng) {
        for (const auto& t : default_topics()) {
            for (const auto& k : t.keywords) {
                for (auto& token : tokenize(k)) used_.insert(token);
            }
        }
    }

    void reserve(const std::string& word) { used_.insert(word); }

    std::string make(int syllables) {
        for (;;) {
            std::string w;
            for (int i = 0; i < syllables; ++i) w += kSyllables[rng_.below(std::size(kSyllables))];
            if (used_.insert(w).second) return w;
        }
    }

private:
    Rng& rng_;
    std::set<std::string> used_;
};

struct OpinionPlan {
    std::string statement;
    std::vector<std::string> words;
};

struct Theme {
    std::vector<std::string> words;
    std::vector<OpinionPlan> opinions;
};

struct TopicPlan {
    std::string id;
    std::vector<std::string> general;
    std::vector<Theme> themes;
    std::size_t partner = 0;  // topic most often co-labeled with this one
};

const std::map<std::string, std::vector<std::string>>& general_words() {
    static const std::map<std::string, std::vector<std::string>> words = {
        {"bushfire", {"bushfire", "fires", "smoke", "blaze"}},
        {"climate-change", {"climate", "warming", "emissions", "carbon"}},
        {"covid-19", {"covid", "virus", "lockdown", "outbreak"}},
        {"vaccination", {"vaccine", "jab", "vaccination", "immunity"}},
    };
    return words;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
    return items[rng.below(items.size())];
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& o) {
    if (o.themes_per_topic < 1 || o.seed_themes < 1 || o.seed_themes > o.themes_per_topic ||
        o.theme_words_per_posting > o.theme_words || o.filler_min > o.filler_max || o.filler_vocabulary == 0) {
        throw Error(ErrorCode::invalid_argument, "synthetic corpus: inconsistent options");
    }
    Rng rng(derive_seed(o.seed, 0x73796eull));
    WordFactory words(rng);
    for (const auto& [topic, list] : general_words()) {
        for (const auto& w : list) words.reserve(w);
    }

    SyntheticCorpus corpus;
    const auto topics = default_topics();
    for (const auto& t : topics) corpus.store.add_topic(t);

    std::vector<TopicPlan> plans;
    for (std::size_t ti = 0; ti < topics.size(); ++ti) {
        TopicPlan plan;
        plan.id = topics[ti].id;
        plan.general = general_words().at(plan.id);
        plan.partner = ti ^ 1;  // bushfire/climate-change, covid-19/vaccination
        for (int th = 0; th < o.themes_per_topic; ++th) {
            Theme theme;
            for (int w = 0; w < o.theme_words; ++w) theme.words.push_back(words.make(4));
            for (int k = 0; k < o.opinions_per_theme; ++k) {
                OpinionPlan op;
                if (plan.id == "climate-change" && th == 0 && k == 0) {
                    op.statement = "Climate change is a UN hoax";
                } else {
                    char buf[96];
                    std::snprintf(buf, sizeof buf, "%s claim %d.%d", plan.id.c_str(), th + 1, k + 1);
                    op.statement = buf;
                }
                for (int w = 0; w < o.signature_words; ++w) op.words.push_back(words.make(4));
                GoldOpinion gold{op.statement, {plan.id}, (th + k) % 3 == 0};
                corpus.opinions[op.statement] = gold;
                if (th < o.seed_themes) corpus.store.create_opinion(NewOpinion{op.statement, {plan.id}, gold.conspiracy});
                theme.opinions.push_back(std::move(op));
            }
            plan.themes.push_back(std::move(theme));
        }
        plans.push_back(std::move(plan));
    }
    std::vector<std::string> filler;
    for (std::size_t i = 0; i < o.filler_vocabulary; ++i) filler.push_back(words.make(3));

    const std::size_t total = o.seed_labeled + o.test + o.unlabeled;
    const Day start = parse_day("2019-09-01");
    std::map<std::string, std::string> statement_to_id;
    for (const auto& op : corpus.store.opinions(true)) statement_to_id[op.statement] = op.id;

    for (std::size_t n = 0; n < total; ++n) {
        const bool in_seed = n < o.seed_labeled;
        const bool in_test = !in_seed && n < o.seed_labeled + o.test;
        const int theme_limit = in_seed ? o.seed_themes : o.themes_per_topic;

        std::vector<std::string> tokens;
        const int filler_count = o.filler_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(o.filler_max - o.filler_min + 1)));
        for (int i = 0; i < filler_count; ++i) {
            // Squared uniform skews toward frequent filler words.
            const double u = rng.uniform();
            tokens.push_back(filler[static_cast<std::size_t>(u * u * static_cast<double>(filler.size()))]);
        }

        GoldLabel label;
        if (rng.uniform() < o.off_topic_rate) {
            if (rng.uniform() < o.distractor_rate) tokens.push_back(pick(rng, pick(rng, plans).general));
        } else {
            std::vector<std::size_t> chosen = {static_cast<std::size_t>(rng.below(plans.size()))};
            if (rng.uniform() < o.second_topic_rate) chosen.push_back(plans[chosen[0]].partner);
            for (auto ti : chosen) {
                const auto& plan = plans[ti];
                label.topics.insert(plan.id);
                const auto& theme = plan.themes[rng.below(static_cast<std::uint64_t>(theme_limit))];
                auto theme_words = theme.words;
                rng.shuffle(theme_words);
                for (int i = 0; i < o.theme_words_per_posting; ++i) tokens.push_back(theme_words[static_cast<std::size_t>(i)]);
                if (rng.uniform() < o.general_word_rate) tokens.push_back(pick(rng, plan.general));
                const double r = rng.uniform();
                const std::size_t opinion_count = r < 0.2 ? 0 : r < 0.8 ? 1 : 2;
                std::vector<std::size_t> order(theme.opinions.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                rng.shuffle(order);
                for (std::size_t i = 0; i < std::min(opinion_count, order.size()); ++i) {
                    const auto& op = theme.opinions[order[i]];
                    label.opinion_statements.insert(op.statement);
                    auto sig = op.words;
                    rng.shuffle(sig);
                    // All but one signature word, so no single word is required.
                    const std::size_t used = sig.size() > 1 ? sig.size() - 1 : sig.size();
                    for (std::size_t w = 0; w < used; ++w) tokens.push_back(sig[w]);
                }
            }
        }
        rng.shuffle(tokens);
        std::string text;
        for (const auto& t : tokens) {
            if (!text.empty()) text.push_back(' ');
            text += t;
        }

        char id[32];
        std::snprintf(id, sizeof id, "s%06zu", n + 1);
        Posting p;
        p.id = id;
        p.text = std::move(text);
        p.platform = Platform::facebook;
        const auto day = start + std::chrono::days(static_cast<int>(rng.below(static_cast<std::uint64_t>(o.days))));
        p.timestamp = TimePoint(day) + std::chrono::seconds(static_cast<long>(rng.below(86400)));
        corpus.store.add_posting(p);

        if (in_seed || in_test) {
            PostingLabel stored;
            stored.topics = label.topics;
            for (const auto& s : label.opinion_statements) {
                auto it = statement_to_id.find(s);
                if (it == statement_to_id.end()) {
                    it = statement_to_id.emplace(s, corpus.store.create_opinion(NewOpinion{s, corpus.opinions[s].topic_ids,
                                                                                           corpus.opinions[s].conspiracy}))
                             .first;
                }
                stored.opinions.insert(it->second);
            }
            if (in_test) corpus.store.reserve_for_test(p.id);
            corpus.store.apply_label(p.id, stored, 0);
        }
        corpus.gold[p.id] = std::move(label);
    }
    return corpus;
}

}  // namespace opinionmap
