#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace revision {

using TokenList = std::vector<std::string>;

inline TokenList whitespace_tokens(std::string_view text) {
    TokenList out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

namespace detail {

// n-gram counts keyed by the joined token string; '\x1f' never appears in
// whitespace tokens so joining is unambiguous.
inline std::map<std::string, int> ngram_counts(const TokenList& tokens, std::size_t n) {
    std::map<std::string, int> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) {
            key += '\x1f';
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BLEU-4: brevity-penalized geometric mean of modified n-gram precisions,
// n = 1..4, candidate counts clipped at the per-reference maximum. Any
// zero-valued precision (including candidates shorter than 4 tokens) zeroes
// the whole score. Brevity penalty uses the closest reference length, shorter
// one on ties.
// ---------------------------------------------------------------------------
inline double bleu4(const TokenList& candidate, const std::vector<TokenList>& references) {
    if (candidate.empty() || references.empty()) return 0.0;

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        auto cand = detail::ngram_counts(candidate, n);
        std::size_t total = 0;
        for (const auto& [g, c] : cand) total += static_cast<std::size_t>(c);
        if (total == 0) return 0.0;  // candidate too short for this order

        std::map<std::string, int> max_ref;
        for (const auto& ref : references)
            for (const auto& [g, c] : detail::ngram_counts(ref, n))
                max_ref[g] = std::max(max_ref[g], c);

        std::size_t clipped = 0;
        for (const auto& [g, c] : cand) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) clipped += static_cast<std::size_t>(std::min(c, it->second));
        }
        if (clipped == 0) return 0.0;
        log_sum += 0.25 * std::log(static_cast<double>(clipped) / static_cast<double>(total));
    }

    std::size_t c = candidate.size();
    std::size_t r = references[0].size();
    for (const auto& ref : references) {
        auto diff = [&](std::size_t len) {
            return len > c ? len - c : c - len;
        };
        if (diff(ref.size()) < diff(r) || (diff(ref.size()) == diff(r) && ref.size() < r))
            r = ref.size();
    }
    double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * std::exp(log_sum);
}

// ---------------------------------------------------------------------------
// ROUGE-L: F1 over the longest common subsequence.
// ---------------------------------------------------------------------------
inline double rouge_l(const TokenList& candidate, const TokenList& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const std::size_t n = candidate.size(), m = reference.size();
    std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            if (candidate[i - 1] == reference[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    double lcs = static_cast<double>(prev[m]);
    if (lcs == 0.0) return 0.0;
    double p = lcs / static_cast<double>(n);
    double r = lcs / static_cast<double>(m);
    return 2.0 * p * r / (p + r);
}

// ---------------------------------------------------------------------------
// CIDEr: per-order tf-idf cosine between the candidate and each reference,
// averaged over references then over n = 1..4, then over the corpus.
// idf(g) = log(N) - log(max(1, df(g))) with df counted over reference sets.
// Raw counts as tf; no rescaling, so scores land in [0, 1].
// ---------------------------------------------------------------------------
inline double cider(const std::vector<TokenList>& candidates,
                    const std::vector<std::vector<TokenList>>& references_corpus) {
    if (candidates.size() != references_corpus.size())
        throw std::invalid_argument("cider: candidate/reference corpus size mismatch");
    if (candidates.empty()) throw std::invalid_argument("cider: empty corpus");

    const double n_items = static_cast<double>(candidates.size());
    double total = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        // document frequency of each ngram over the reference sets
        std::map<std::string, int> df;
        for (const auto& refs : references_corpus) {
            std::set<std::string> seen;
            for (const auto& ref : refs)
                for (const auto& [g, c] : detail::ngram_counts(ref, n)) seen.insert(g);
            for (const auto& g : seen) ++df[g];
        }
        auto idf = [&](const std::string& g) {
            auto it = df.find(g);
            int d = it == df.end() ? 0 : it->second;
            return std::log(n_items) - std::log(static_cast<double>(std::max(1, d)));
        };
        auto weighted = [&](const std::map<std::string, int>& counts) {
            std::map<std::string, double> w;
            for (const auto& [g, c] : counts) w[g] = static_cast<double>(c) * idf(g);
            return w;
        };
        auto cos = [](const std::map<std::string, double>& a,
                      const std::map<std::string, double>& b) {
            double dot = 0, na = 0, nb = 0;
            for (const auto& [g, v] : a) {
                na += v * v;
                auto it = b.find(g);
                if (it != b.end()) dot += v * it->second;
            }
            for (const auto& [g, v] : b) nb += v * v;
            if (na <= 0 || nb <= 0) return 0.0;
            return dot / (std::sqrt(na) * std::sqrt(nb));
        };

        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto& refs = references_corpus[i];
            if (refs.empty()) continue;
            auto cv = weighted(detail::ngram_counts(candidates[i], n));
            double item = 0.0;
            for (const auto& ref : refs) item += cos(cv, weighted(detail::ngram_counts(ref, n)));
            total += item / static_cast<double>(refs.size());
        }
    }
    return total / (4.0 * n_items);
}

// ---------------------------------------------------------------------------
// METEOR restricted to exact matches: greedy left-to-right unigram alignment,
// Fmean = 10PR/(R+9P), fragmentation penalty 0.5*(chunks/matches)^3.
// ---------------------------------------------------------------------------
inline double meteor_exact(const TokenList& candidate, const TokenList& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    std::vector<bool> used(reference.size(), false);
    std::vector<long> match_pos(candidate.size(), -1);  // candidate idx -> ref idx
    std::size_t m = 0;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        for (std::size_t j = 0; j < reference.size(); ++j) {
            if (!used[j] && candidate[i] == reference[j]) {
                used[j] = true;
                match_pos[i] = static_cast<long>(j);
                ++m;
                break;
            }
        }
    }
    if (m == 0) return 0.0;

    double p = static_cast<double>(m) / static_cast<double>(candidate.size());
    double r = static_cast<double>(m) / static_cast<double>(reference.size());
    double fmean = 10.0 * p * r / (r + 9.0 * p);

    // a chunk ends when either side's position stops being consecutive
    std::size_t chunks = 0;
    long prev_ref = -2;
    bool in_chunk = false;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        if (match_pos[i] < 0) {
            in_chunk = false;
            continue;
        }
        if (!in_chunk || match_pos[i] != prev_ref + 1) ++chunks;
        in_chunk = true;
        prev_ref = match_pos[i];
    }
    double frag = static_cast<double>(chunks) / static_cast<double>(m);
    return fmean * (1.0 - 0.5 * frag * frag * frag);
}

}  // namespace revision
