#pragma once

#include <map>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "revision/core.hpp"
#include "revision/embed.hpp"

namespace revision {

inline constexpr std::string_view kOtherBucket = "other";

struct Label {
    std::string name;
    std::vector<std::string> keywords;  // synonym list for lexical matching

    bool operator==(const Label&) const = default;
};

struct CategoryOntology {
    std::vector<Label> mains;
    std::map<std::string, std::vector<Label>> subs;  // main name -> sub labels

    bool operator==(const CategoryOntology&) const = default;
};

struct ClusterParams {
    double alpha_main = 0.7;
    double alpha_sub = 0.6;
    double tau1 = 0.40;
    double tau2 = 0.35;
    double eps = 0.5;
    std::size_t min_samples = 2;

    bool operator==(const ClusterParams&) const = default;
};

inline void validate(const ClusterParams& p) {
    if (p.alpha_main < 0 || p.alpha_main > 1 || p.alpha_sub < 0 || p.alpha_sub > 1)
        throw std::invalid_argument("cluster params: alpha outside [0,1]");
    if (p.tau1 < 0 || p.tau1 > 1 || p.tau2 < 0 || p.tau2 > 1)
        throw std::invalid_argument("cluster params: tau outside [0,1]");
    if (p.eps <= 0) throw std::invalid_argument("cluster params: eps must be positive");
    if (p.min_samples < 1) throw std::invalid_argument("cluster params: min_samples must be >= 1");
}

inline void validate(const Label& label) {
    if (trim_view(label.name).empty()) throw std::invalid_argument("label: empty name");
    if (label.name.find('/') != std::string::npos)
        throw std::invalid_argument("label '" + label.name + "': name may not contain '/'");
    if (label.keywords.empty())
        throw std::invalid_argument("label '" + label.name + "': empty keyword list");
    for (const auto& k : label.keywords)
        if (trim_view(k).empty())
            throw std::invalid_argument("label '" + label.name + "': blank keyword");
}

inline void validate(const CategoryOntology& ont) {
    std::set<std::string> main_names;
    for (const auto& m : ont.mains) {
        validate(m);
        if (!main_names.insert(m.name).second)
            throw std::invalid_argument("ontology: duplicate main '" + m.name + "'");
    }
    for (const auto& [main, subs] : ont.subs) {
        if (!main_names.count(main))
            throw std::invalid_argument("ontology: subs listed for unknown main '" + main + "'");
        std::set<std::string> sub_names;
        for (const auto& s : subs) {
            validate(s);
            if (s.name == kOtherBucket)
                throw std::invalid_argument("ontology: sub name '" + s.name +
                                            "' collides with the overflow bucket");
            if (!sub_names.insert(s.name).second)
                throw std::invalid_argument("ontology: duplicate sub '" + s.name + "' under '" +
                                            main + "'");
        }
    }
}

// ---------------------------------------------------------------------------
// Scores.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

inline std::string keyword_join(const Label& label) {
    std::string out;
    for (const auto& k : label.keywords) {
        if (!out.empty()) out += ' ';
        out += k;
    }
    return out;
}

}  // namespace detail

namespace detail {

// Lexical equivalence for keyword matching: containment in either direction,
// or a shared leading stem of >= 4 characters so inflected variants
// (price/pricing, summarize/summarization) count as the same term. Inputs
// must already be case-folded.
inline bool lexical_match(std::string_view token, std::string_view keyword) {
    if (token.find(keyword) != std::string_view::npos ||
        keyword.find(token) != std::string_view::npos)
        return true;
    std::size_t common = 0;
    std::size_t limit = std::min(token.size(), keyword.size());
    while (common < limit && token[common] == keyword[common]) ++common;
    return common >= 4;
}

}  // namespace detail

// Fraction of action tokens that match the label's keyword list under
// case-folded lexical equivalence (see detail::lexical_match).
inline double syn_overlap(const std::vector<std::string>& tokens, const Label& label) {
    if (tokens.empty()) return 0.0;
    std::vector<std::string> folded;
    folded.reserve(label.keywords.size());
    for (const auto& k : label.keywords) folded.push_back(detail::ascii_lower(k));
    std::size_t matched = 0;
    for (const auto& t : tokens) {
        for (const auto& k : folded) {
            if (detail::lexical_match(t, k)) {
                ++matched;
                break;
            }
        }
    }
    return static_cast<double>(matched) / static_cast<double>(tokens.size());
}

// Cosine between the action text and the label's keyword concatenation,
// floored at 0 so the convex combination below stays in [0,1].
inline double sem_score(std::string_view action_text, const Label& label, const Embedder& emb) {
    double c = cosine(emb.embed_text(action_text), emb.embed_text(detail::keyword_join(label)));
    if (c < 0.0) return 0.0;
    if (c > 1.0) return 1.0;
    return c;
}

inline double combined_score(std::string_view action_text, const Label& label, double alpha,
                             const Embedder& emb) {
    double syn = syn_overlap(normalize_action(action_text), label);
    return alpha * syn + (1.0 - alpha) * sem_score(action_text, label, emb);
}

// ---------------------------------------------------------------------------
// Assignment.
// ---------------------------------------------------------------------------

namespace detail {

// Precomputed per-label scoring state so hierarchy builds embed each distinct
// text once.
struct LabelScorer {
    const Embedder& emb;
    std::map<std::string, std::vector<float>, std::less<>> text_cache;

    explicit LabelScorer(const Embedder& e) : emb(e) {}

    const std::vector<float>& vec(const std::string& text) {
        auto it = text_cache.find(text);
        if (it == text_cache.end()) it = text_cache.emplace(text, emb.embed_text(text)).first;
        return it->second;
    }

    double score(const std::string& action, const std::vector<std::string>& tokens,
                 const Label& label, double alpha) {
        double syn = syn_overlap(tokens, label);
        double c = cosine(vec(action), vec(keyword_join(label)));
        double sem = c < 0.0 ? 0.0 : (c > 1.0 ? 1.0 : c);
        return alpha * syn + (1.0 - alpha) * sem;
    }
};

// Best label by score with lexicographic tie-break; labels evaluated in
// name-sorted order so the first strict improvement wins.
inline std::optional<std::string> best_label(LabelScorer& scorer, const std::string& action,
                                             const std::vector<std::string>& tokens,
                                             const std::vector<Label>& labels, double alpha,
                                             double threshold) {
    std::vector<const Label*> sorted;
    sorted.reserve(labels.size());
    for (const auto& l : labels) sorted.push_back(&l);
    std::sort(sorted.begin(), sorted.end(),
              [](const Label* a, const Label* b) { return a->name < b->name; });
    std::optional<std::string> best;
    double best_score = -1.0;
    for (const Label* l : sorted) {
        double s = scorer.score(action, tokens, *l, alpha);
        if (s > best_score) {
            best_score = s;
            best = l->name;
        }
    }
    if (best_score > threshold) return best;
    return std::nullopt;
}

}  // namespace detail

// Main category, or nullopt when the best score does not exceed tau1.
inline std::optional<std::string> assign_main(std::string_view action,
                                              const CategoryOntology& ontology,
                                              const ClusterParams& params, const Embedder& emb) {
    detail::LabelScorer scorer(emb);
    std::string text(action);
    return detail::best_label(scorer, text, normalize_action(text), ontology.mains,
                              params.alpha_main, params.tau1);
}

// Subcategory under an assigned main; the overflow bucket when the best score
// is <= tau2 or the main declares no subs.
inline std::string assign_sub(std::string_view action, const std::string& main,
                              const CategoryOntology& ontology, const ClusterParams& params,
                              const Embedder& emb) {
    auto it = ontology.subs.find(main);
    if (it == ontology.subs.end() || it->second.empty()) return std::string(kOtherBucket);
    detail::LabelScorer scorer(emb);
    std::string text(action);
    auto best = detail::best_label(scorer, text, normalize_action(text), it->second,
                                   params.alpha_sub, params.tau2);
    return best ? *best : std::string(kOtherBucket);
}

// ---------------------------------------------------------------------------
// DBSCAN over the unassigned residue. Classical algorithm: a core point has
// >= min_samples neighbours within eps counting itself; clusters are
// connected core points plus the border points an expansion reaches first.
// Points are processed in input order, which fixes every tie.
// ---------------------------------------------------------------------------

struct DbscanResult {
    std::vector<std::vector<std::string>> clusters;  // discovery order, members in input order
    std::vector<std::string> noise;                  // input order

    bool operator==(const DbscanResult&) const = default;
};

inline double embedding_distance(const std::vector<float>& a, const std::vector<float>& b) {
    double d = 1.0 - cosine(a, b);
    return d < 0.0 ? 0.0 : d;
}

inline DbscanResult dbscan_unassigned(const std::vector<std::string>& actions,
                                      const Embedder& emb, const ClusterParams& params) {
    const std::size_t n = actions.size();
    DbscanResult result;
    if (n == 0) return result;

    // Distinct texts share one embedding; duplicates still count as points.
    detail::LabelScorer cache(emb);
    std::vector<const std::vector<float>*> vecs(n);
    for (std::size_t i = 0; i < n; ++i) vecs[i] = &cache.vec(actions[i]);

    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t i = 0; i < n; ++i) neighbors[i].push_back(i);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (embedding_distance(*vecs[i], *vecs[j]) <= params.eps) {
                neighbors[i].push_back(j);
                neighbors[j].push_back(i);
            }
        }
    }
    for (auto& nb : neighbors) std::sort(nb.begin(), nb.end());

    constexpr int kUnvisited = -2, kNoise = -1;
    std::vector<int> label(n, kUnvisited);
    int next_cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != kUnvisited) continue;
        if (neighbors[i].size() < params.min_samples) {
            label[i] = kNoise;
            continue;
        }
        int cid = next_cluster++;
        label[i] = cid;
        std::queue<std::size_t> frontier;
        for (std::size_t j : neighbors[i])
            if (j != i) frontier.push(j);
        while (!frontier.empty()) {
            std::size_t j = frontier.front();
            frontier.pop();
            if (label[j] == kNoise) label[j] = cid;  // border point
            if (label[j] != kUnvisited) continue;
            label[j] = cid;
            if (neighbors[j].size() >= params.min_samples)
                for (std::size_t k : neighbors[j])
                    if (label[k] == kUnvisited || label[k] == kNoise) frontier.push(k);
        }
    }

    result.clusters.resize(static_cast<std::size_t>(next_cluster));
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] == kNoise)
            result.noise.push_back(actions[i]);
        else
            result.clusters[static_cast<std::size_t>(label[i])].push_back(actions[i]);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Hierarchy.
// ---------------------------------------------------------------------------

struct ClusterHierarchy {
    // main -> sub (subs declared in the ontology plus the overflow bucket,
    // all materialized even when empty) -> actions in arrival order
    std::map<std::string, std::map<std::string, std::vector<std::string>>> assignments;
    std::vector<std::vector<std::string>> unassigned_clusters;
    std::vector<std::string> noise;

    bool operator==(const ClusterHierarchy&) const = default;

    std::size_t assigned_count() const {
        std::size_t n = 0;
        for (const auto& [main, subs] : assignments)
            for (const auto& [sub, actions] : subs) n += actions.size();
        return n;
    }

    std::size_t total_count() const {
        std::size_t n = assigned_count() + noise.size();
        for (const auto& c : unassigned_clusters) n += c.size();
        return n;
    }
};

namespace detail {

inline void materialize_buckets(ClusterHierarchy& h, const CategoryOntology& ontology) {
    for (const auto& m : ontology.mains) {
        auto& subs = h.assignments[m.name];
        if (auto it = ontology.subs.find(m.name); it != ontology.subs.end())
            for (const auto& s : it->second) subs[s.name];
        subs[std::string(kOtherBucket)];
    }
}

}  // namespace detail

inline ClusterHierarchy build_hierarchy(const std::vector<std::string>& actions,
                                        const CategoryOntology& ontology,
                                        const ClusterParams& params, const Embedder& emb) {
    validate(ontology);
    validate(params);
    ClusterHierarchy h;
    detail::materialize_buckets(h, ontology);

    detail::LabelScorer scorer(emb);
    std::vector<std::string> unassigned;
    for (const auto& action : actions) {
        auto tokens = normalize_action(action);
        auto main = detail::best_label(scorer, action, tokens, ontology.mains, params.alpha_main,
                                       params.tau1);
        if (!main) {
            unassigned.push_back(action);
            continue;
        }
        std::string sub(kOtherBucket);
        if (auto it = ontology.subs.find(*main); it != ontology.subs.end() && !it->second.empty()) {
            auto best =
                detail::best_label(scorer, action, tokens, it->second, params.alpha_sub, params.tau2);
            if (best) sub = *best;
        }
        h.assignments[*main][sub].push_back(action);
    }

    auto residue = dbscan_unassigned(unassigned, emb, params);
    h.unassigned_clusters = std::move(residue.clusters);
    h.noise = std::move(residue.noise);
    return h;
}

// Incremental variant: new actions go through the same two-level assignment;
// the ones that miss are pooled with the prior residue (cluster members, then
// noise, then the new arrivals, each in stored order) and DBSCAN runs over the
// pool alone. Assigned buckets from the input hierarchy are never touched.
inline ClusterHierarchy incremental_update(const ClusterHierarchy& hierarchy,
                                           const std::vector<std::string>& new_actions,
                                           const CategoryOntology& ontology,
                                           const ClusterParams& params, const Embedder& emb) {
    validate(ontology);
    validate(params);
    for (const auto& [main, subs] : hierarchy.assignments) {
        bool known = false;
        for (const auto& m : ontology.mains) known = known || m.name == main;
        if (!known)
            throw std::invalid_argument("incremental update: hierarchy main '" + main +
                                        "' not in ontology");
    }
    if (new_actions.empty()) return hierarchy;

    ClusterHierarchy h = hierarchy;
    detail::materialize_buckets(h, ontology);  // new ontology entries get their buckets

    detail::LabelScorer scorer(emb);
    std::vector<std::string> fresh_unassigned;
    for (const auto& action : new_actions) {
        auto tokens = normalize_action(action);
        auto main = detail::best_label(scorer, action, tokens, ontology.mains, params.alpha_main,
                                       params.tau1);
        if (!main) {
            fresh_unassigned.push_back(action);
            continue;
        }
        std::string sub(kOtherBucket);
        if (auto it = ontology.subs.find(*main); it != ontology.subs.end() && !it->second.empty()) {
            auto best =
                detail::best_label(scorer, action, tokens, it->second, params.alpha_sub, params.tau2);
            if (best) sub = *best;
        }
        h.assignments[*main][sub].push_back(action);
    }
    if (fresh_unassigned.empty()) return h;

    std::vector<std::string> pool;
    for (const auto& c : h.unassigned_clusters) pool.insert(pool.end(), c.begin(), c.end());
    pool.insert(pool.end(), h.noise.begin(), h.noise.end());
    pool.insert(pool.end(), fresh_unassigned.begin(), fresh_unassigned.end());

    auto residue = dbscan_unassigned(pool, emb, params);
    h.unassigned_clusters = std::move(residue.clusters);
    h.noise = std::move(residue.noise);
    return h;
}

}  // namespace revision
