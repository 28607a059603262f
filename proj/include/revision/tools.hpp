#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "revision/core.hpp"
#include "revision/registry.hpp"

namespace revision {

enum class OutcomeStatus { success, skipped, failed };

inline std::string_view to_string(OutcomeStatus s) {
    switch (s) {
        case OutcomeStatus::success: return "success";
        case OutcomeStatus::skipped: return "skipped";
        case OutcomeStatus::failed: return "failed";
    }
    return "failed";
}

struct ToolOutcome {
    int tool_index = 0;
    OutcomeStatus status = OutcomeStatus::failed;
    std::string payload;
    std::int64_t latency_ms = 0;
    std::string reason;  // required for failed, explains skipped

    bool operator==(const ToolOutcome&) const = default;
};

// Shared mutable state for one query's tool chain. Tools rewrite `working`
// (the product list the caller will render) and read everything else.
struct ToolContext {
    const RequestLog* log = nullptr;
    std::vector<Product> working;
    const ToolRegistry* registry = nullptr;
    std::map<int, std::string> info;                   // per-tool Info payloads
    std::map<int, std::vector<Product>> fetch_items;   // prefetched external results
    std::vector<ToolOutcome> prior;                    // outcomes so far, chain order
};

inline ToolContext make_context(const RequestLog& log, const ToolRegistry& registry) {
    ToolContext ctx;
    ctx.log = &log;
    ctx.working = log.products;
    ctx.registry = &registry;
    return ctx;
}

class TextSearchClient {
public:
    virtual ~TextSearchClient() = default;
    virtual std::vector<Product> search(const std::string& query_text, std::size_t limit) = 0;
};

inline constexpr std::size_t kExternalFetchLimit = 8;

namespace tooldetail {

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        auto t = trim_copy(current);
        if (!t.empty()) out.push_back(std::move(t));
        current.clear();
    };
    for (char c : text) {
        if (c == ',' || c == ';' || c == '\n') {
            flush();
        } else {
            current += c;
        }
    }
    flush();
    return out;
}

// Most frequent title tokens of length >= 3, ties broken lexically.
inline std::vector<std::string> top_title_terms(const std::vector<Product>& products,
                                                std::size_t k) {
    std::map<std::string, std::size_t> freq;
    for (const auto& p : products)
        for (const auto& token : normalize_action(p.title))
            if (token.size() >= 3) ++freq[token];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (const auto& [term, n] : ranked) {
        if (out.size() >= k) break;
        out.push_back(term);
    }
    return out;
}

inline void tag_product(Product& p, const std::string& key, const std::string& value) {
    for (auto& [k, v] : p.metadata) {
        if (k == key) {
            v = value;
            return;
        }
    }
    p.metadata.emplace_back(key, value);
}

struct FilterClause {
    std::string field;
    std::string op;  // one of < <= > >= = !=
    std::string value;
};

// "field op value" terms joined by '&'. Throws on anything it cannot read.
inline std::vector<FilterClause> parse_filter(const std::string& text) {
    static constexpr std::string_view ops[] = {"<=", ">=", "!=", "<", ">", "="};
    std::vector<FilterClause> clauses;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto amp = text.find('&', start);
        std::string clause =
            text.substr(start, amp == std::string::npos ? std::string::npos : amp - start);
        std::size_t op_pos = std::string::npos;
        std::string_view op;
        for (auto candidate : ops) {
            auto pos = clause.find(candidate);
            if (pos != std::string::npos && pos < op_pos) {
                op_pos = pos;
                op = candidate;
            }
        }
        if (op_pos == std::string::npos)
            throw std::invalid_argument("filter clause has no operator: '" + trim_copy(clause) +
                                        "'");
        FilterClause fc;
        fc.field = trim_copy(clause.substr(0, op_pos));
        fc.op = std::string(op);
        fc.value = trim_copy(clause.substr(op_pos + op.size()));
        if (fc.field.empty()) throw std::invalid_argument("filter clause missing field");
        if (fc.value.empty()) throw std::invalid_argument("filter clause missing value");
        clauses.push_back(std::move(fc));
        if (amp == std::string::npos) break;
        start = amp + 1;
    }
    if (clauses.empty()) throw std::invalid_argument("empty filter");
    return clauses;
}

inline double parse_numeric(const std::string& value, const std::string& field) {
    std::size_t consumed = 0;
    double v = 0;
    try {
        v = std::stod(value, &consumed);
    } catch (const std::exception&) {
        throw std::invalid_argument("non-numeric value '" + value + "' for field " + field);
    }
    if (trim_view(std::string_view(value).substr(consumed)).size() > 0)
        throw std::invalid_argument("non-numeric value '" + value + "' for field " + field);
    return v;
}

inline bool compare_numeric(double lhs, const std::string& op, double rhs) {
    if (op == "<") return lhs < rhs;
    if (op == "<=") return lhs <= rhs;
    if (op == ">") return lhs > rhs;
    if (op == ">=") return lhs >= rhs;
    if (op == "=") return lhs == rhs;
    return lhs != rhs;  // "!="
}

// A product without the attribute matches no clause on it, whatever the op.
inline bool clause_matches(const Product& p, const FilterClause& c) {
    if (c.field == "price" || c.field == "quantity" || c.field == "similarity") {
        double lhs = c.field == "price"      ? p.price
                     : c.field == "quantity" ? static_cast<double>(p.quantity)
                                             : p.similarity;
        return compare_numeric(lhs, c.op, parse_numeric(c.value, c.field));
    }
    const std::string* lhs = nullptr;
    if (c.field == "id") lhs = &p.id;
    if (c.field == "title") lhs = &p.title;
    if (!lhs) {
        for (const auto& [k, v] : p.metadata)
            if (k == c.field) lhs = &v;
    }
    if (!lhs) return false;
    if (c.op == "=") return *lhs == c.value;
    if (c.op == "!=") return *lhs != c.value;
    throw std::invalid_argument("operator '" + c.op + "' needs a numeric field, got " + c.field);
}

inline const std::string* info_for(const ToolContext& ctx, int tool_index) {
    auto it = ctx.info.find(tool_index);
    if (it == ctx.info.end() || trim_view(it->second).empty()) return nullptr;
    return &it->second;
}

inline ToolOutcome skipped_no_info(int tool_index) {
    ToolOutcome out;
    out.tool_index = tool_index;
    out.status = OutcomeStatus::skipped;
    out.reason = "no info payload for tool " + std::to_string(tool_index);
    return out;
}

inline ToolOutcome failed(int tool_index, std::string reason) {
    ToolOutcome out;
    out.tool_index = tool_index;
    out.status = OutcomeStatus::failed;
    out.reason = std::move(reason);
    return out;
}

}  // namespace tooldetail

// Reorders each product's metadata so the keys named in the Info payload
// (comma/semicolon list) come first, in the requested order.
inline ToolOutcome adjust_display_metadata(ToolContext& ctx, int tool_index) {
    const auto* info = tooldetail::info_for(ctx, tool_index);
    if (!info) return tooldetail::skipped_no_info(tool_index);
    auto priority = tooldetail::split_list(*info);
    if (priority.empty())
        return tooldetail::failed(tool_index, "info payload names no metadata keys");

    for (auto& product : ctx.working) {
        std::vector<std::pair<std::string, std::string>> reordered;
        std::vector<bool> taken(product.metadata.size(), false);
        for (const auto& key : priority) {
            for (std::size_t i = 0; i < product.metadata.size(); ++i) {
                if (!taken[i] && product.metadata[i].first == key) {
                    reordered.push_back(product.metadata[i]);
                    taken[i] = true;
                }
            }
        }
        for (std::size_t i = 0; i < product.metadata.size(); ++i)
            if (!taken[i]) reordered.push_back(product.metadata[i]);
        product.metadata = std::move(reordered);
    }

    ToolOutcome out;
    out.tool_index = tool_index;
    out.status = OutcomeStatus::success;
    std::string keys;
    for (const auto& k : priority) {
        if (!keys.empty()) keys += ", ";
        keys += k;
    }
    out.payload = "reordered metadata of " + std::to_string(ctx.working.size()) +
                  " products by: " + keys;
    return out;
}

// Price digest (min/median/max; even counts average the middle two) plus the
// dominant title terms.
inline ToolOutcome summarize_results(ToolContext& ctx, int tool_index) {
    const auto* info = tooldetail::info_for(ctx, tool_index);
    if (!info) return tooldetail::skipped_no_info(tool_index);
    if (ctx.working.empty())
        return tooldetail::failed(tool_index, "no products to summarize");

    std::vector<double> prices;
    for (const auto& p : ctx.working) prices.push_back(p.price);
    std::sort(prices.begin(), prices.end());
    double median = prices.size() % 2 == 1
                        ? prices[prices.size() / 2]
                        : (prices[prices.size() / 2 - 1] + prices[prices.size() / 2]) / 2.0;

    std::string digest = "prices: min=" + format_number(prices.front()) +
                         ", median=" + format_number(median) +
                         ", max=" + format_number(prices.back()) + " over " +
                         std::to_string(ctx.working.size()) + " products";
    auto terms = tooldetail::top_title_terms(ctx.working, 3);
    if (!terms.empty()) {
        digest += "; top terms: ";
        for (std::size_t i = 0; i < terms.size(); ++i) {
            if (i) digest += ", ";
            digest += terms[i];
        }
    }

    ToolOutcome out;
    out.tool_index = tool_index;
    out.status = OutcomeStatus::success;
    out.payload = std::move(digest);
    return out;
}

// Issues the Info text against the external index (or reuses a prefetched
// batch) and appends the results to the working list tagged source=external.
inline ToolOutcome external_text_search(ToolContext& ctx, int tool_index,
                                        TextSearchClient* client) {
    const auto* info = tooldetail::info_for(ctx, tool_index);
    if (!info) return tooldetail::skipped_no_info(tool_index);

    std::vector<Product> items;
    if (auto it = ctx.fetch_items.find(tool_index); it != ctx.fetch_items.end()) {
        items = it->second;
    } else if (client) {
        try {
            items = client->search(*info, kExternalFetchLimit);
        } catch (const std::exception& e) {
            return tooldetail::failed(tool_index, std::string("search failed: ") + e.what());
        }
    } else {
        return tooldetail::failed(tool_index, "no text-search client configured");
    }

    for (auto& item : items) {
        tooldetail::tag_product(item, "source", "external");
        ctx.working.push_back(std::move(item));
    }

    ToolOutcome out;
    out.tool_index = tool_index;
    out.status = OutcomeStatus::success;
    out.payload = "merged " + std::to_string(items.size()) + " external items for \"" + *info +
                  "\"";
    return out;
}

// Tags products matching the Info filter ("field op value" terms joined by
// '&') with target=1 and reports their ids.
inline ToolOutcome label_target_products(ToolContext& ctx, int tool_index) {
    const auto* info = tooldetail::info_for(ctx, tool_index);
    if (!info) return tooldetail::skipped_no_info(tool_index);

    std::vector<tooldetail::FilterClause> clauses;
    try {
        clauses = tooldetail::parse_filter(*info);
    } catch (const std::invalid_argument& e) {
        return tooldetail::failed(tool_index, e.what());
    }

    std::vector<std::string> matched;
    try {
        for (auto& product : ctx.working) {
            bool all = true;
            for (const auto& c : clauses)
                if (!tooldetail::clause_matches(product, c)) {
                    all = false;
                    break;
                }
            if (all) {
                tooldetail::tag_product(product, "target", "1");
                matched.push_back(product.id);
            }
        }
    } catch (const std::invalid_argument& e) {
        return tooldetail::failed(tool_index, e.what());
    }

    ToolOutcome out;
    out.tool_index = tool_index;
    out.status = OutcomeStatus::success;
    out.payload = "labeled " + std::to_string(matched.size()) + " products";
    if (!matched.empty()) {
        out.payload += ": ";
        for (std::size_t i = 0; i < matched.size(); ++i) {
            if (i) out.payload += ", ";
            out.payload += matched[i];
        }
    }
    return out;
}

// Executes one node of a plan. `prefetch` is the side fetch for tools that
// declare one; it must not touch mutable query state because it may run
// alongside the chain.
class ToolExecutor {
public:
    virtual ~ToolExecutor() = default;
    virtual ToolOutcome run(int tool_index, ToolContext& ctx) = 0;
    virtual std::vector<Product> prefetch(int tool_index, const std::string& info,
                                          const RequestLog& log) = 0;
};

// Dispatches on the registry entry's component kind. Derived tools with no
// family behavior just surface their mined intent as an annotation.
class BuiltinToolExecutor : public ToolExecutor {
public:
    explicit BuiltinToolExecutor(TextSearchClient* search_client = nullptr)
        : search_client_(search_client) {}

    ToolOutcome run(int tool_index, ToolContext& ctx) override {
        if (!ctx.registry || !ctx.registry->contains(tool_index))
            return tooldetail::failed(tool_index, "tool index not in registry");
        const auto& entry = ctx.registry->at(tool_index);
        switch (entry.component) {
            case ToolComponent::display_adjust:
                return adjust_display_metadata(ctx, tool_index);
            case ToolComponent::summarize:
                return summarize_results(ctx, tool_index);
            case ToolComponent::external_search:
                return external_text_search(ctx, tool_index, search_client_);
            case ToolComponent::label_targets:
                return label_target_products(ctx, tool_index);
            case ToolComponent::derived:
                break;
        }
        ToolOutcome out;
        out.tool_index = tool_index;
        out.status = OutcomeStatus::success;
        out.payload = "noted mined intent: " + entry.spec.title;
        return out;
    }

    std::vector<Product> prefetch(int tool_index, const std::string& info,
                                  const RequestLog&) override {
        if (trim_view(info).empty())
            throw std::runtime_error("no info payload to fetch for tool " +
                                     std::to_string(tool_index));
        if (!search_client_) throw std::runtime_error("no text-search client configured");
        return search_client_->search(info, kExternalFetchLimit);
    }

private:
    TextSearchClient* search_client_ = nullptr;
};

}  // namespace revision
