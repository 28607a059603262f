#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "revision/core.hpp"

namespace revision {

// Behavioral family of a registry entry. Builtin kinds dispatch to the four
// shipped tool components; derived entries come out of mining and run as
// annotation-only tools until someone implements them.
enum class ToolComponent {
    display_adjust,
    summarize,
    external_search,
    label_targets,
    derived,
};

inline std::string to_string(ToolComponent c) {
    switch (c) {
        case ToolComponent::display_adjust: return "adjust_display_metadata";
        case ToolComponent::summarize: return "summarize_results";
        case ToolComponent::external_search: return "external_text_search";
        case ToolComponent::label_targets: return "label_target_products";
        case ToolComponent::derived: return "derived";
    }
    throw std::logic_error("unreachable tool component");
}

inline ToolComponent tool_component_from(const std::string& s) {
    if (s == "adjust_display_metadata") return ToolComponent::display_adjust;
    if (s == "summarize_results") return ToolComponent::summarize;
    if (s == "external_text_search") return ToolComponent::external_search;
    if (s == "label_target_products") return ToolComponent::label_targets;
    if (s == "derived") return ToolComponent::derived;
    throw std::invalid_argument("unknown tool component '" + s + "'");
}

struct RegistryEntry {
    ToolComponentSpec spec;
    bool fetch_external = false;   // needs a side fetch before the tool runs
    std::string main_category;     // hierarchy binding; empty = unbound
    std::string subcategory;
    ToolComponent component = ToolComponent::derived;

    bool operator==(const RegistryEntry&) const = default;
};

// Indexed tool list. Indices are 1-based and contiguous — position i holds
// index i+1 — because plans reference tools by those numbers.
class ToolRegistry {
public:
    ToolRegistry() = default;

    explicit ToolRegistry(std::vector<RegistryEntry> entries) : entries_(std::move(entries)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].spec.index != static_cast<int>(i) + 1)
                throw std::invalid_argument(
                    "registry: indices must be contiguous from 1; position " + std::to_string(i) +
                    " holds index " + std::to_string(entries_[i].spec.index));
            if (trim_view(entries_[i].spec.title).empty())
                throw std::invalid_argument("registry: entry " + std::to_string(i + 1) +
                                            " has an empty title");
        }
        std::set<std::string> titles;
        std::set<std::pair<std::string, std::string>> bindings;
        for (const auto& e : entries_) {
            if (!titles.insert(e.spec.title).second)
                throw std::invalid_argument("registry: duplicate title '" + e.spec.title + "'");
            if (!e.main_category.empty() || !e.subcategory.empty()) {
                if (!bindings.insert({e.main_category, e.subcategory}).second)
                    throw std::invalid_argument("registry: duplicate binding '" + e.main_category +
                                                "/" + e.subcategory + "'");
            }
        }
    }

    // Assigns contiguous indices 1..M in the given order, then validates.
    static ToolRegistry renumbered(std::vector<RegistryEntry> entries) {
        for (std::size_t i = 0; i < entries.size(); ++i)
            entries[i].spec.index = static_cast<int>(i) + 1;
        return ToolRegistry(std::move(entries));
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<RegistryEntry>& entries() const { return entries_; }

    bool contains(int index) const {
        return index >= 1 && static_cast<std::size_t>(index) <= entries_.size();
    }

    const RegistryEntry& at(int index) const {
        if (!contains(index))
            throw std::out_of_range("registry: no tool with index " + std::to_string(index));
        return entries_[static_cast<std::size_t>(index) - 1];
    }

    std::optional<int> index_of_binding(const std::string& main, const std::string& sub) const {
        for (const auto& e : entries_)
            if (e.main_category == main && e.subcategory == sub) return e.spec.index;
        return std::nullopt;
    }

private:
    std::vector<RegistryEntry> entries_;
};

}  // namespace revision
