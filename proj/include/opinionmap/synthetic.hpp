#pragma once

#include "opinionmap/augmentation.hpp"
#include "opinionmap/ontology.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace opinionmap {

// Planted-signal corpus over the four default topics. Each topic has a number
// of themes with private vocabularies and opinions with signature words; the
// seed set only covers the first few themes, so the rest has to be found in
// the unlabeled pool.
struct SyntheticOptions {
    std::uint64_t seed = 1;
    std::size_t seed_labeled = 800;
    std::size_t unlabeled = 20000;
    std::size_t test = 2000;

    int themes_per_topic = 4;
    int seed_themes = 3;
    int theme_words = 3;
    int theme_words_per_posting = 2;
    int opinions_per_theme = 2;
    int signature_words = 3;

    double off_topic_rate = 0.5;
    double second_topic_rate = 0.15;
    double general_word_rate = 1.0;   // on-topic postings carrying a topic-wide word
    double distractor_rate = 0.05;    // off-topic postings carrying one anyway

    std::size_t filler_vocabulary = 2000;
    int filler_min = 5;
    int filler_max = 10;

    int days = 120;
};

struct SyntheticCorpus {
    // Seed postings labeled, test postings reserved (and labeled), the pool
    // unlabeled. Only opinions of seed themes exist up front.
    OntologyStore store;
    std::map<std::string, GoldLabel> gold;
    std::map<std::string, GoldOpinion> opinions;

    ScriptedOracle oracle() const { return ScriptedOracle(gold, opinions); }
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

}  // namespace opinionmap
