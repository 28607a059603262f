#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "revision/core.hpp"
#include "revision/registry.hpp"

namespace revision {

// {{slot}} substitution. Unresolved slots are configuration bugs, so they
// throw rather than leak braces into a model prompt.
inline std::string render_template(std::string_view tpl,
                                   const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        auto open = tpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tpl.substr(pos));
            break;
        }
        out.append(tpl.substr(pos, open - pos));
        auto close = tpl.find("}}", open + 2);
        if (close == std::string_view::npos)
            throw std::invalid_argument("template: unterminated slot near position " +
                                        std::to_string(open));
        std::string name(trim_view(tpl.substr(open + 2, close - open - 2)));
        auto it = slots.find(name);
        if (it == slots.end())
            throw std::invalid_argument("template: unresolved slot '" + name + "'");
        out += it->second;
        pos = close + 2;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structured context strings shared by mining prompts, SFT samples, and the
// online planner prompt.
// ---------------------------------------------------------------------------

// First-class product fields merged with the free-form metadata pairs. The
// typed fields win on key collisions.
inline std::vector<std::pair<std::string, std::string>> combined_metadata_pairs(
    const Product& p) {
    std::vector<std::pair<std::string, std::string>> pairs = {
        {"price", format_number(p.price)},
        {"title", p.title},
        {"quantity", std::to_string(p.quantity)},
    };
    for (const auto& [k, v] : p.metadata)
        if (k != "price" && k != "title" && k != "quantity") pairs.emplace_back(k, v);
    return pairs;
}

// "Product 1: price = 19, title = stylish black off-shoulder dress, quantity = 1"
inline std::string product_context_line(const Product& p, std::size_t position,
                                        const ImportanceTable& table = default_importance_table(),
                                        std::size_t k = 10) {
    Product merged = p;
    merged.metadata = combined_metadata_pairs(p);
    auto ranked = rank_metadata(merged, table, k);
    std::string line = "Product " + std::to_string(position) + ": ";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (i) line += ", ";
        line += ranked[i].first + " = " + ranked[i].second;
    }
    return line;
}

inline constexpr std::size_t kMaxProductImages = 12;
inline constexpr std::size_t kMaxMetadataPairs = 10;

// One line per product, capped at the same count as the image refs so text
// and images describe the same items.
inline std::string build_textual_context(const std::vector<Product>& products,
                                         std::size_t max_products = kMaxProductImages,
                                         const ImportanceTable& table = default_importance_table(),
                                         std::size_t k = kMaxMetadataPairs) {
    std::string out;
    std::size_t n = std::min(products.size(), max_products);
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += '\n';
        out += product_context_line(products[i], i + 1, table, k);
    }
    return out;
}

// "Index: 1 | Title: ... | Description: ..." per registry entry.
inline std::string registry_block(const ToolRegistry& registry) {
    std::string out;
    for (const auto& e : registry.entries()) {
        if (!out.empty()) out += '\n';
        out += "Index: " + std::to_string(e.spec.index) + " | Title: " + e.spec.title +
               " | Description: " + e.spec.description;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shipped prompt templates. The marker lines at the top are what the mock
// reasoner keys on to decide which stage it is answering.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kVisualStageMarker = "[stage:visual]";
inline constexpr std::string_view kReasoningStageMarker = "[stage:reasoning]";
inline constexpr std::string_view kPlanStageMarker = "[stage:plan]";

inline constexpr std::string_view kDefaultVisualTemplate =
    "[stage:visual]\n"
    "You are inspecting an e-commerce visual search request that received no clicks.\n"
    "Query image: {{query_image_ref}}\n"
    "The {{product_count}} attached images are the retrieved products, in rank order.\n"
    "Describe the query item, how the retrieved products differ from it, and any\n"
    "preliminary suggestions for improving the result list.\n";

inline constexpr std::string_view kDefaultReasoningTemplate =
    "[stage:reasoning]\n"
    "A visual analyst reviewed a no-click search request and wrote:\n"
    "{{visual_analysis}}\n"
    "\n"
    "Ranked product metadata:\n"
    "{{metadata_block}}\n"
    "\n"
    "Operator rules to consider:\n"
    "{{rules_block}}\n"
    "\n"
    "Synthesize the concrete optimization actions this request needs. Reply with one\n"
    "directive per line in the form `Action -> Info`, where Info carries the\n"
    "parameters the action needs (omit `-> Info` when there are none).\n";

inline constexpr std::string_view kPlanInstruction =
    "[stage:plan]\n"
    "You orchestrate search-result optimization tools. Given the query context and\n"
    "the tool registry below, decide which tools to run and in what order.\n"
    "First think inside one <think>...</think> block, then output the chosen tool\n"
    "indices as parenthesized numbers in execution order, e.g. `(1) (3)`.\n";

inline std::string build_plan_prompt(const RequestLog& log, const ToolRegistry& registry,
                                     const ImportanceTable& table = default_importance_table()) {
    std::string prompt(kPlanInstruction);
    prompt += "\nQuery image: " + log.query_image_ref + "\n";
    prompt += "Retrieved products:\n";
    prompt += build_textual_context(log.products, kMaxProductImages, table);
    prompt += "\n\nTool registry:\n";
    prompt += registry_block(registry);
    prompt += "\n";
    return prompt;
}

}  // namespace revision
