#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace opinionmap {

// Lowercases ASCII letters and splits on every byte that is neither an ASCII
// letter/digit nor part of a multi-byte UTF-8 sequence. Non-ASCII code points
// therefore stay inside tokens ("café" is one token).
std::vector<std::string> tokenize(std::string_view text);

// Contiguous n-grams for n in [min_n, max_n], tokens joined by a single space.
std::vector<std::string> ngrams(std::span<const std::string> tokens, int min_n, int max_n);

struct VocabularyOptions {
    std::uint32_t min_df = 2;
    int ngram_min = 1;
    int ngram_max = 2;
};

class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> document_frequencies,
               std::uint32_t corpus_size, VocabularyOptions options);

    std::size_t size() const { return terms_.size(); }
    bool empty() const { return terms_.empty(); }
    const std::vector<std::string>& terms() const { return terms_; }
    const std::vector<std::uint32_t>& document_frequencies() const { return df_; }
    std::uint32_t corpus_size() const { return corpus_size_; }
    const VocabularyOptions& options() const { return options_; }

    // Index of a term, or -1 when absent.
    std::int64_t index_of(std::string_view term) const;

    // ln((1 + N) / (1 + df)) + 1
    double idf(std::size_t index) const { return idf_[index]; }

    // Text format: header line, then one "term\tdf" line per term.
    void save(std::ostream& out) const;
    static Vocabulary load(std::istream& in);

    // FNV-1a over the serialized form; identifies the feature space.
    std::uint64_t hash() const { return hash_; }

private:
    void finish();

    std::vector<std::string> terms_;
    std::vector<std::uint32_t> df_;
    std::vector<double> idf_;
    std::uint32_t corpus_size_ = 0;
    VocabularyOptions options_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::uint64_t hash_ = 0;
};

Vocabulary fit_vocabulary(std::span<const std::string> corpus, const VocabularyOptions& options = {});

// Sparse, index-sorted, L2-normalised TF-IDF weights. Empty when the text
// shares no term with the vocabulary.
struct FeatureVector {
    std::vector<std::pair<std::uint32_t, double>> entries;

    bool empty() const { return entries.empty(); }
    double norm() const;
    double weight(std::uint32_t index) const;
};

FeatureVector vectorize(std::string_view text, const Vocabulary& vocab);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace opinionmap
