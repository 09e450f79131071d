#include "opinionmap/text_features.hpp"

#include "opinionmap/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace opinionmap {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
            current.push_back(ch);
        } else if (c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<std::string> ngrams(std::span<const std::string> tokens, int min_n, int max_n) {
    std::vector<std::string> out;
    const auto count = static_cast<int>(tokens.size());
    for (int n = std::max(min_n, 1); n <= max_n; ++n) {
        for (int i = 0; i + n <= count; ++i) {
            std::string gram = tokens[i];
            for (int j = 1; j < n; ++j) {
                gram.push_back(' ');
                gram += tokens[i + j];
            }
            out.push_back(std::move(gram));
        }
    }
    return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> document_frequencies,
                       std::uint32_t corpus_size, VocabularyOptions options)
    : terms_(std::move(terms)), df_(std::move(document_frequencies)), corpus_size_(corpus_size), options_(options) {
    if (terms_.size() != df_.size()) {
        throw Error(ErrorCode::invariant_violation, "vocabulary: term and df counts differ");
    }
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        if (i > 0 && !(terms_[i - 1] < terms_[i])) {
            throw Error(ErrorCode::invariant_violation, "vocabulary: terms not strictly sorted at '" + terms_[i] + "'");
        }
        if (df_[i] < 1 || df_[i] > corpus_size_) {
            throw Error(ErrorCode::invariant_violation, "vocabulary: df out of range for '" + terms_[i] + "'");
        }
    }
    finish();
}

void Vocabulary::finish() {
    idf_.resize(terms_.size());
    index_.clear();
    index_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        idf_[i] = std::log((1.0 + corpus_size_) / (1.0 + df_[i])) + 1.0;
        index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
    }
    std::ostringstream text;
    save(text);
    hash_ = fnv1a(text.str());
}

std::int64_t Vocabulary::index_of(std::string_view term) const {
    auto it = index_.find(std::string(term));
    return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

void Vocabulary::save(std::ostream& out) const {
    out << "vocabulary\tv1\tN=" << corpus_size_ << "\tmin_df=" << options_.min_df << "\tngram=" << options_.ngram_min
        << "-" << options_.ngram_max << "\tterms=" << terms_.size() << "\n";
    for (std::size_t i = 0; i < terms_.size(); ++i) out << terms_[i] << '\t' << df_[i] << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw Error(ErrorCode::malformed_record, "vocabulary: missing header");
    unsigned long n = 0, min_df = 0, count = 0;
    int lo = 0, hi = 0;
    if (std::sscanf(header.c_str(), "vocabulary\tv1\tN=%lu\tmin_df=%lu\tngram=%d-%d\tterms=%lu", &n, &min_df, &lo, &hi,
                    &count) != 5) {
        throw Error(ErrorCode::malformed_record, "vocabulary: bad header '" + header + "'");
    }
    std::vector<std::string> terms;
    std::vector<std::uint32_t> df;
    terms.reserve(count);
    df.reserve(count);
    std::string line;
    for (unsigned long i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw Error(ErrorCode::malformed_record, "vocabulary: truncated term list");
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) throw Error(ErrorCode::malformed_record, "vocabulary: bad line '" + line + "'");
        terms.push_back(line.substr(0, tab));
        df.push_back(static_cast<std::uint32_t>(std::stoul(line.substr(tab + 1))));
    }
    VocabularyOptions options;
    options.min_df = static_cast<std::uint32_t>(min_df);
    options.ngram_min = lo;
    options.ngram_max = hi;
    return Vocabulary(std::move(terms), std::move(df), static_cast<std::uint32_t>(n), options);
}

Vocabulary fit_vocabulary(std::span<const std::string> corpus, const VocabularyOptions& options) {
    if (corpus.empty()) throw Error(ErrorCode::empty_input, "fit_vocabulary: empty corpus");
    if (options.ngram_min < 1 || options.ngram_max < options.ngram_min) {
        throw Error(ErrorCode::invalid_argument, "fit_vocabulary: bad n-gram range");
    }
    std::unordered_map<std::string, std::uint32_t> df;
    std::unordered_set<std::string> seen;
    for (const auto& text : corpus) {
        seen.clear();
        const auto tokens = tokenize(text);
        for (auto& gram : ngrams(tokens, options.ngram_min, options.ngram_max)) {
            if (seen.insert(gram).second) ++df[gram];
        }
    }
    std::vector<std::pair<std::string, std::uint32_t>> kept;
    for (auto& [term, count] : df) {
        if (count >= options.min_df) kept.emplace_back(term, count);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<std::string> terms;
    std::vector<std::uint32_t> counts;
    terms.reserve(kept.size());
    counts.reserve(kept.size());
    for (auto& [term, count] : kept) {
        terms.push_back(std::move(term));
        counts.push_back(count);
    }
    return Vocabulary(std::move(terms), std::move(counts), static_cast<std::uint32_t>(corpus.size()), options);
}

double FeatureVector::norm() const {
    double sum = 0.0;
    for (const auto& [index, w] : entries) sum += w * w;
    return std::sqrt(sum);
}

double FeatureVector::weight(std::uint32_t index) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), index,
                               [](const auto& entry, std::uint32_t i) { return entry.first < i; });
    return it != entries.end() && it->first == index ? it->second : 0.0;
}

FeatureVector vectorize(std::string_view text, const Vocabulary& vocab) {
    const auto tokens = tokenize(text);
    std::map<std::uint32_t, std::uint32_t> tf;
    for (const auto& gram : ngrams(tokens, vocab.options().ngram_min, vocab.options().ngram_max)) {
        const auto index = vocab.index_of(gram);
        if (index >= 0) ++tf[static_cast<std::uint32_t>(index)];
    }
    FeatureVector vec;
    vec.entries.reserve(tf.size());
    double sum = 0.0;
    for (const auto& [index, count] : tf) {
        const double w = count * vocab.idf(index);
        vec.entries.emplace_back(index, w);
        sum += w * w;
    }
    if (sum > 0.0) {
        const double inv = 1.0 / std::sqrt(sum);
        for (auto& entry : vec.entries) entry.second *= inv;
    }
    return vec;
}

}  // namespace opinionmap
