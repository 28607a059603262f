#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "revision/core.hpp"

namespace revision {

struct SyntheticSpec {
    std::uint64_t seed = 42;
    std::size_t n_queries = 100;
    // Fraction of queries whose image bytes duplicate an earlier query's.
    double duplicate_fraction = 0.0;
    // Fraction of queries whose top-1 similarity lands below the dispatch
    // trigger band (0.05..0.45 vs 0.55..0.95 for the rest).
    double low_relevance_fraction = 0.5;
    std::vector<std::string> categories = {"dress", "jacket", "sneaker", "handbag", "watch"};
    double min_price = 5.0;
    double max_price = 95.0;
    // clicked iff top-1 similarity + per-query hash noise >= this.
    double click_threshold = 0.6;
    std::size_t products_per_query = 6;
};

inline void validate(const SyntheticSpec& spec) {
    if (spec.duplicate_fraction < 0.0 || spec.duplicate_fraction > 1.0)
        throw std::invalid_argument("synthetic spec: duplicate_fraction outside [0,1]");
    if (spec.low_relevance_fraction < 0.0 || spec.low_relevance_fraction > 1.0)
        throw std::invalid_argument("synthetic spec: low_relevance_fraction outside [0,1]");
    if (spec.categories.empty())
        throw std::invalid_argument("synthetic spec: no categories");
    for (const auto& c : spec.categories)
        if (trim_view(c).empty()) throw std::invalid_argument("synthetic spec: blank category");
    if (spec.min_price >= spec.max_price)
        throw std::invalid_argument("synthetic spec: min_price must be below max_price");
    if (spec.products_per_query == 0)
        throw std::invalid_argument("synthetic spec: products_per_query must be positive");
}

namespace syntheticdetail {

// All draws reduce rng() with integer arithmetic. std::uniform_*_distribution
// is implementation-defined, which would tie corpus bytes to the libstdc++
// version instead of the seed.
inline double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() % 1'000'000) / 1e6;
}

inline double draw_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + unit(rng) * (hi - lo);
}

inline double round_cents(double price) { return std::round(price * 100.0) / 100.0; }

template <typename T>
T pick(std::mt19937_64& rng, const std::vector<T>& pool) {
    return pool[rng() % pool.size()];
}

// Deterministic choice of k indices out of [first, n): Fisher-Yates over the
// candidate list, keep the first k, then restore index order.
inline std::vector<std::size_t> pick_indices(std::mt19937_64& rng, std::size_t first,
                                             std::size_t n, std::size_t k) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = first; i < n; ++i) candidates.push_back(i);
    for (std::size_t i = candidates.size(); i > 1; --i)
        std::swap(candidates[i - 1], candidates[rng() % i]);
    candidates.resize(std::min(k, candidates.size()));
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

inline const std::vector<std::string>& adjectives() {
    static const std::vector<std::string> pool = {"classic", "vintage", "modern",
                                                  "casual",  "elegant", "sport"};
    return pool;
}

inline const std::vector<std::string>& colors() {
    static const std::vector<std::string> pool = {"red", "blue", "black", "white", "green"};
    return pool;
}

inline const std::vector<std::string>& materials() {
    static const std::vector<std::string> pool = {"cotton", "leather", "denim", "wool",
                                                  "canvas"};
    return pool;
}

}  // namespace syntheticdetail

// Seeded corpus generator. Duplicates share image bytes with the nearest
// earlier original (so with duplicate_fraction=1 every query reuses query 0's
// image); low/high relevance is assigned per query independently of
// duplication, keeping the trigger fraction exactly floor(fraction*n)/n.
inline std::vector<RequestLog> generate_synthetic_corpus(const SyntheticSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    const std::size_t n = spec.n_queries;

    const std::size_t n_dup = std::min(
        static_cast<std::size_t>(spec.duplicate_fraction * static_cast<double>(n)),
        n == 0 ? 0 : n - 1);
    const std::size_t n_low =
        static_cast<std::size_t>(spec.low_relevance_fraction * static_cast<double>(n));

    // Query 0 is always an original so every duplicate has a source.
    const auto dup_list = syntheticdetail::pick_indices(rng, 1, n, n_dup);
    const auto low_list = syntheticdetail::pick_indices(rng, 0, n, n_low);
    std::vector<bool> is_dup(n, false), is_low(n, false);
    for (auto i : dup_list) is_dup[i] = true;
    for (auto i : low_list) is_low[i] = true;

    constexpr std::int64_t kBaseTimestamp = 1'700'000'000'000;  // fixed corpus epoch

    std::vector<RequestLog> corpus;
    corpus.reserve(n);
    std::string last_original_image;
    for (std::size_t i = 0; i < n; ++i) {
        RequestLog log;
        log.query_id = "q-" + std::to_string(i);
        log.user_id = "user-" + std::to_string(rng() % 20);
        log.timestamp = kBaseTimestamp + static_cast<std::int64_t>(i) * 60'000;

        const std::string category = syntheticdetail::pick(rng, spec.categories);
        if (is_dup[i]) {
            log.query_image_ref = last_original_image;
        } else {
            log.query_image_ref = "img://synthetic/q/" + category + "-" + std::to_string(i);
            last_original_image = log.query_image_ref;
        }

        double similarity = is_low[i] ? syntheticdetail::draw_in(rng, 0.05, 0.45)
                                      : syntheticdetail::draw_in(rng, 0.55, 0.95);
        for (std::size_t k = 0; k < spec.products_per_query; ++k) {
            Product p;
            p.id = "p-" + std::to_string(i) + "-" + std::to_string(k);
            p.title = syntheticdetail::pick(rng, syntheticdetail::adjectives()) + " " +
                      syntheticdetail::pick(rng, syntheticdetail::colors()) + " " + category;
            p.price = syntheticdetail::round_cents(
                syntheticdetail::draw_in(rng, spec.min_price, spec.max_price));
            p.quantity = 1 + static_cast<int>(rng() % 5);
            p.similarity = similarity;
            p.image_ref = "img://synthetic/p/" + std::to_string(i) + "-" + std::to_string(k);
            p.metadata.emplace_back("color", syntheticdetail::pick(rng, syntheticdetail::colors()));
            p.metadata.emplace_back("material",
                                    syntheticdetail::pick(rng, syntheticdetail::materials()));
            log.products.push_back(std::move(p));
            // Keep the list sorted by similarity, the way retrieval hands it over.
            similarity = std::max(0.01, similarity - syntheticdetail::draw_in(rng, 0.01, 0.06));
        }

        const double noise =
            (hash_to_unit(fnv1a64("click:" + log.query_id)) - 0.5) * 0.2;
        log.clicked = log.products.front().similarity + noise >= spec.click_threshold;
        corpus.push_back(std::move(log));
    }
    return corpus;
}

}  // namespace revision
