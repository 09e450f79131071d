#include "opinionmap/rng.hpp"
#include "opinionmap/text_features.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace opinionmap;
using namespace opinionmap::testing;

TEST_CASE("tokenize follows the stated rules") {
    CHECK(tokenize("Climate-change ISN'T real!") == Strings{"climate", "change", "isn", "t", "real"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("  ,,!! ").empty());
    CHECK(tokenize("Café COVID-19") == Strings{"café", "covid", "19"});
}

TEST_CASE("tokenize is deterministic on random unicode") {
    opinionmap::Rng rng(11);
    static const char* pieces[] = {"a", "Z", "9", " ", "-", "é", "日本", "😀", "\t", "ß", "!", "İ"};
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        const auto len = rng.below(30);
        for (std::uint64_t j = 0; j < len; ++j) s += pieces[rng.below(std::size(pieces))];
        const auto a = tokenize(s);
        CHECK(a == tokenize(s));
        for (const auto& t : a) CHECK_FALSE(t.empty());
    }
}

TEST_CASE("ngrams joins contiguous tokens") {
    const Strings t{"a", "b", "c"};
    CHECK(ngrams(t, 1, 2) == Strings{"a", "b", "c", "a b", "b c"});
    CHECK(ngrams(t, 2, 3) == Strings{"a b", "b c", "a b c"});
    CHECK(ngrams(Strings{}, 1, 2).empty());
}

TEST_CASE("fit_vocabulary applies min_df over unigrams and bigrams") {
    const Strings corpus{"climate hoax", "climate change"};
    VocabularyOptions one;
    one.min_df = 1;
    const auto v1 = fit_vocabulary(corpus, one);
    CHECK(v1.terms() == Strings{"change", "climate", "climate change", "climate hoax", "hoax"});
    CHECK(v1.corpus_size() == 2);

    const auto v2 = fit_vocabulary(corpus, VocabularyOptions{});
    CHECK(v2.terms() == Strings{"climate"});
    CHECK(v2.document_frequencies() == std::vector<std::uint32_t>{2});

    CHECK(error_code_of([] { fit_vocabulary(Strings{}); }) == ErrorCode::empty_input);
}

TEST_CASE("vocabulary matches a brute-force n-gram counter on a 50-doc fixture") {
    opinionmap::Rng rng(50);
    const auto corpus = random_corpus(rng, 50);
    for (std::uint32_t min_df : {1u, 2u, 3u}) {
        VocabularyOptions opt;
        opt.min_df = min_df;
        const auto vocab = fit_vocabulary(corpus, opt);

        std::map<std::string, std::uint32_t> df;
        for (const auto& d : corpus)
            for (const auto& [g, c] : naive_counts(d, 1, 2)) ++df[g];
        Strings terms;
        std::vector<std::uint32_t> dfs;
        for (const auto& [g, c] : df) {
            if (c >= min_df) {
                terms.push_back(g);
                dfs.push_back(c);
            }
        }
        CHECK(vocab.terms() == terms);
        CHECK(vocab.document_frequencies() == dfs);
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            CHECK(vocab.document_frequencies()[i] >= 1);
            CHECK(vocab.document_frequencies()[i] <= vocab.corpus_size());
        }
    }
}

TEST_CASE("vectorize reproduces the hand-computed two-document weights") {
    // Unigrams only: with bigrams "climate hoax" would be a third term.
    const Strings corpus{"climate hoax", "climate change"};
    VocabularyOptions opt;
    opt.min_df = 1;
    opt.ngram_max = 1;
    const auto vocab = fit_vocabulary(corpus, opt);
    const auto x = vectorize("climate hoax", vocab);
    REQUIRE(x.entries.size() == 2);
    const double idf_hoax = std::log(3.0 / 2.0) + 1.0;
    const double norm = std::sqrt(1.0 + idf_hoax * idf_hoax);
    CHECK(x.weight(static_cast<std::uint32_t>(vocab.index_of("climate"))) == doctest::Approx(1.0 / norm).epsilon(1e-12));
    CHECK(x.weight(static_cast<std::uint32_t>(vocab.index_of("hoax"))) == doctest::Approx(idf_hoax / norm).epsilon(1e-12));
    CHECK(x.weight(static_cast<std::uint32_t>(vocab.index_of("climate"))) == doctest::Approx(0.5797).epsilon(1e-4));
    CHECK(x.weight(static_cast<std::uint32_t>(vocab.index_of("hoax"))) == doctest::Approx(0.8148).epsilon(1e-4));
}

TEST_CASE("single-term documents and out-of-vocabulary text") {
    VocabularyOptions opt;
    opt.min_df = 1;
    const auto vocab = fit_vocabulary(Strings{"hoax"}, opt);
    const auto x = vectorize("hoax", vocab);
    REQUIRE(x.entries.size() == 1);
    CHECK(x.entries[0].second == 1.0);
    const auto z = vectorize("nothing known here", vocab);
    CHECK(z.empty());
    CHECK(z.norm() == 0.0);
}

TEST_CASE("weights match the naive reference on random corpora") {
    opinionmap::Rng rng(20);
    for (int c = 0; c < 20; ++c) {
        const auto corpus = random_corpus(rng, 1 + rng.below(100));
        const int min_df = 1 + static_cast<int>(rng.below(2));
        VocabularyOptions opt;
        opt.min_df = static_cast<std::uint32_t>(min_df);
        const auto vocab = fit_vocabulary(corpus, opt);
        for (const auto& doc : corpus) {
            const auto expected = naive_tfidf(corpus, doc, 1, 2, min_df);
            const auto got = vectorize(doc, vocab);
            REQUIRE(got.entries.size() == expected.size());
            for (const auto& [idx, w] : got.entries) {
                const auto it = expected.find(vocab.terms()[idx]);
                REQUIRE(it != expected.end());
                CHECK(std::abs(w - it->second) <= 1e-9);
            }
        }
    }
}

TEST_CASE("vectors are unit length, non-negative and in bounds") {
    opinionmap::Rng rng(5);
    const auto corpus = random_corpus(rng, 80);
    const auto vocab = fit_vocabulary(corpus);
    for (const auto& doc : corpus) {
        const auto x = vectorize(doc, vocab);
        if (x.empty()) continue;
        CHECK(std::abs(x.norm() - 1.0) <= 1e-9);
        for (std::size_t i = 0; i < x.entries.size(); ++i) {
            CHECK(x.entries[i].first < vocab.size());
            CHECK(x.entries[i].second > 0.0);
            if (i) CHECK(x.entries[i - 1].first < x.entries[i].first);
        }
    }
}

TEST_CASE("rarer terms get larger weight at equal term frequency") {
    opinionmap::Rng rng(6);
    const auto corpus = random_corpus(rng, 100);
    VocabularyOptions opt;
    opt.min_df = 1;
    const auto vocab = fit_vocabulary(corpus, opt);
    for (std::size_t i = 1; i < vocab.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const auto di = vocab.document_frequencies()[i], dj = vocab.document_frequencies()[j];
            if (di < dj) CHECK(vocab.idf(i) > vocab.idf(j));
            if (di == dj) CHECK(vocab.idf(i) == vocab.idf(j));
        }
    }
    for (const auto& doc : corpus) {
        const auto counts = naive_counts(doc, 1, 2);
        const auto x = vectorize(doc, vocab);
        for (const auto& [a, wa] : x.entries) {
            for (const auto& [b, wb] : x.entries) {
                if (counts.at(vocab.terms()[a]) != counts.at(vocab.terms()[b])) continue;
                if (vocab.document_frequencies()[a] < vocab.document_frequencies()[b]) CHECK(wa > wb);
            }
        }
    }
}

TEST_CASE("vocabulary serialization round-trips exactly") {
    opinionmap::Rng rng(8);
    const auto vocab = fit_vocabulary(random_corpus(rng, 60));
    std::stringstream s;
    vocab.save(s);
    const auto back = Vocabulary::load(s);
    CHECK(back.terms() == vocab.terms());
    CHECK(back.document_frequencies() == vocab.document_frequencies());
    CHECK(back.corpus_size() == vocab.corpus_size());
    CHECK(back.hash() == vocab.hash());
    std::stringstream again;
    back.save(again);
    std::stringstream first;
    vocab.save(first);
    CHECK(again.str() == first.str());

    std::istringstream junk("not a vocabulary\n");
    CHECK(error_code_of([&] { Vocabulary::load(junk); }) == ErrorCode::malformed_record);
}
