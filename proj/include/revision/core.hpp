#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace revision {

// ---------------------------------------------------------------------------
// Small utilities shared across modules.
// ---------------------------------------------------------------------------

// FNV-1a, 64 bit. Fixed constants; every hash in this codebase goes through
// here so results are identical across platforms and runs.
inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = kFnvOffsetBasis;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// Finalizer borrowed from splitmix64: FNV leaves the high bits of short,
// similar strings nearly identical, so they must be avalanched before use.
inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Hash mapped into [0, 1): avalanche, then take the top 53 bits.
inline double hash_to_unit(std::uint64_t h) {
    return static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
}

inline std::string_view trim_view(std::string_view s) {
    const char* ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::string trim_copy(std::string_view s) { return std::string(trim_view(s)); }

// Shortest plain decimal form: 19 -> "19", 19.5 -> "19.5". Used everywhere a
// number is rendered into prompt or digest text.
inline std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Domain types.
// ---------------------------------------------------------------------------

struct Product {
    std::string id;
    std::string title;
    double price = 0.0;
    std::int64_t quantity = 0;
    double similarity = 0.0;  // retrieval score vs. the query, in [0,1]
    std::string image_ref;    // opaque; the reference embedder hashes its bytes
    // (key, value) pairs ranked by importance, keys unique
    std::vector<std::pair<std::string, std::string>> metadata;

    bool operator==(const Product&) const = default;
};

inline void validate(const Product& p) {
    if (p.similarity < 0.0 || p.similarity > 1.0)
        throw std::invalid_argument("product " + p.id + ": similarity outside [0,1]");
    if (p.price < 0.0) throw std::invalid_argument("product " + p.id + ": negative price");
    if (p.quantity < 0) throw std::invalid_argument("product " + p.id + ": negative quantity");
    std::set<std::string_view> keys;
    for (const auto& [k, v] : p.metadata)
        if (!keys.insert(k).second)
            throw std::invalid_argument("product " + p.id + ": duplicate metadata key '" + k + "'");
}

struct RequestLog {
    std::string query_id;
    std::string query_image_ref;
    std::vector<Product> products;  // retrieval order
    bool clicked = false;
    std::int64_t timestamp = 0;  // epoch milliseconds
    std::string user_id;

    bool operator==(const RequestLog&) const = default;
};

inline void validate(const RequestLog& log, bool require_products = true) {
    if (log.query_id.empty()) throw std::invalid_argument("request log: empty query_id");
    if (require_products && log.products.empty())
        throw std::invalid_argument("request log " + log.query_id + ": no products");
    for (const auto& p : log.products) validate(p);
}

// One "Action -> Info" directive.
struct ActionInfo {
    std::string action;
    std::string info;

    bool operator==(const ActionInfo&) const = default;
};

struct OptimizationSignal {
    std::string query_id;
    std::vector<ActionInfo> items;  // emission order
    std::string thinking;           // raw reasoner trace

    bool operator==(const OptimizationSignal&) const = default;
};

struct ToolComponentSpec {
    int index = 0;  // 1-based, contiguous within a registry
    std::string title;
    std::string description;

    bool operator==(const ToolComponentSpec&) const = default;
};

struct ToolPlan {
    std::vector<int> tool_indices;
    std::optional<std::string> thinking;

    bool operator==(const ToolPlan&) const = default;
};

// ---------------------------------------------------------------------------
// "Action -> Info" grammar.
//
// Directives are separated by newlines, or by semicolons when the segment
// after the semicolon itself contains "->". A semicolon segment without "->"
// that follows an arrow entry on the same line is part of that entry's Info
// ("... -> black; Blendy" is one directive). Each entry splits on its FIRST
// "->" so Info may contain further arrows. Entries without "->" carry an
// empty Info. Entries whose action side trims to nothing are dropped.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kActionInfoArrow = "->";

inline std::vector<ActionInfo> parse_action_info(std::string_view text) {
    std::vector<ActionInfo> out;

    auto parse_entry = [&](std::string_view raw) {
        ActionInfo item;
        auto arrow = raw.find(kActionInfoArrow);
        if (arrow == std::string_view::npos) {
            item.action = trim_copy(raw);
        } else {
            item.action = trim_copy(raw.substr(0, arrow));
            item.info = trim_copy(raw.substr(arrow + kActionInfoArrow.size()));
        }
        if (!item.action.empty()) out.push_back(std::move(item));
    };

    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        // Split the line on ';', re-attaching arrowless segments to the info
        // side of the preceding arrow entry.
        std::vector<std::string> entries;
        std::size_t seg_pos = 0;
        while (seg_pos <= line.size()) {
            auto sc = line.find(';', seg_pos);
            std::string_view seg =
                line.substr(seg_pos, sc == std::string_view::npos ? line.size() - seg_pos : sc - seg_pos);
            if (!trim_view(seg).empty()) {
                bool has_arrow = seg.find(kActionInfoArrow) != std::string_view::npos;
                if (!has_arrow && !entries.empty() &&
                    entries.back().find(kActionInfoArrow) != std::string::npos) {
                    entries.back().append(";").append(seg);
                } else {
                    entries.emplace_back(seg);
                }
            }
            if (sc == std::string_view::npos) break;
            seg_pos = sc + 1;
        }
        for (const auto& e : entries) parse_entry(e);

        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return out;
}

inline std::string serialize_action_info(const std::vector<ActionInfo>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += '\n';
        out += items[i].action;
        if (!items[i].info.empty()) {
            out += ' ';
            out += kActionInfoArrow;
            out += ' ';
            out += items[i].info;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Action normalization.
//
// Fixed, locale-independent rules: leading enumeration markers ("1.", "(2)",
// "[3]", "-", "*", the bullet U+2022) are stripped; punctuation becomes a
// token boundary; ASCII letters are lowercased; Han and kana codepoints each
// form their own token; everything else passes through byte-for-byte.
// ---------------------------------------------------------------------------

// ASCII punctuation treated as token boundaries.
inline constexpr std::string_view kAsciiPunctuation = R"(!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~)";

namespace detail {

struct Codepoint {
    char32_t cp;
    std::size_t len;
};

// Permissive UTF-8 decode; a malformed lead byte is taken as a single-byte
// codepoint so normalization never fails on arbitrary input.
inline Codepoint decode_utf8(std::string_view s, std::size_t i) {
    auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    unsigned char b0 = byte(i);
    if (b0 < 0x80) return {b0, 1};
    auto cont = [&](std::size_t k) { return k < s.size() && (byte(k) & 0xC0) == 0x80; };
    if ((b0 & 0xE0) == 0xC0 && cont(i + 1))
        return {static_cast<char32_t>(((b0 & 0x1Fu) << 6) | (byte(i + 1) & 0x3Fu)), 2};
    if ((b0 & 0xF0) == 0xE0 && cont(i + 1) && cont(i + 2))
        return {static_cast<char32_t>(((b0 & 0x0Fu) << 12) | ((byte(i + 1) & 0x3Fu) << 6) |
                                      (byte(i + 2) & 0x3Fu)),
                3};
    if ((b0 & 0xF8) == 0xF0 && cont(i + 1) && cont(i + 2) && cont(i + 3))
        return {static_cast<char32_t>(((b0 & 0x07u) << 18) | ((byte(i + 1) & 0x3Fu) << 12) |
                                      ((byte(i + 2) & 0x3Fu) << 6) | (byte(i + 3) & 0x3Fu)),
                4};
    return {b0, 1};
}

inline bool is_cjk_char(char32_t cp) {
    return (cp >= 0x3400 && cp <= 0x4DBF) ||  // CJK ext A
           (cp >= 0x4E00 && cp <= 0x9FFF) ||  // CJK unified
           (cp >= 0xF900 && cp <= 0xFAFF) ||  // compatibility ideographs
           (cp >= 0x3040 && cp <= 0x30FF);    // hiragana + katakana
}

inline bool is_punct_cp(char32_t cp) {
    if (cp < 0x80) return kAsciiPunctuation.find(static_cast<char>(cp)) != std::string_view::npos;
    return (cp >= 0x2000 && cp <= 0x206F) ||  // general punctuation (incl. bullet, dashes)
           (cp >= 0x3000 && cp <= 0x303F) ||  // CJK symbols and punctuation
           (cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
           (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65);
}

inline bool is_space_cp(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
           cp == 0xA0;
}

// Strips one leading enumeration marker; returns chars consumed (0 = none).
inline std::size_t marker_length(std::string_view s) {
    if (s.empty()) return 0;
    auto digits_then = [&](std::size_t start, char open_close) -> std::size_t {
        std::size_t j = start;
        while (j < s.size() && s[j] >= '0' && s[j] <= '9') ++j;
        if (j == start || j - start > 6) return 0;
        if (j < s.size() && s[j] == open_close) return j + 1;
        return 0;
    };
    if (s[0] == '(') {
        if (auto n = digits_then(1, ')')) return n;
    }
    if (s[0] == '[') {
        if (auto n = digits_then(1, ']')) return n;
    }
    if (s[0] >= '0' && s[0] <= '9') {
        std::size_t j = 0;
        while (j < s.size() && s[j] >= '0' && s[j] <= '9') ++j;
        if (j <= 6 && j < s.size() && (s[j] == '.' || s[j] == ')')) return j + 1;
    }
    if (s[0] == '-' || s[0] == '*') return 1;
    if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xE2 &&
        static_cast<unsigned char>(s[1]) == 0x80 && static_cast<unsigned char>(s[2]) == 0xA2)
        return 3;  // U+2022 bullet
    return 0;
}

}  // namespace detail

inline std::vector<std::string> normalize_action(std::string_view text) {
    // Strip leading whitespace / enumeration markers.
    std::size_t start = 0;
    for (;;) {
        while (start < text.size()) {
            auto [cp, len] = detail::decode_utf8(text, start);
            if (!detail::is_space_cp(cp)) break;
            start += len;
        }
        auto n = detail::marker_length(text.substr(start));
        if (n == 0) break;
        start += n;
    }

    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (std::size_t i = start; i < text.size();) {
        auto [cp, len] = detail::decode_utf8(text, i);
        if (detail::is_space_cp(cp) || detail::is_punct_cp(cp)) {
            flush();
        } else if (detail::is_cjk_char(cp)) {
            flush();
            tokens.emplace_back(text.substr(i, len));
        } else if (cp < 0x80) {
            char c = static_cast<char>(cp);
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            cur += c;
        } else {
            cur.append(text.substr(i, len));
        }
        i += len;
    }
    flush();
    return tokens;
}

// ---------------------------------------------------------------------------
// "<think>...</think> (i) (j)" plan-output grammar.
// ---------------------------------------------------------------------------

struct PlanParse {
    std::optional<std::string> thinking;
    std::vector<int> tool_indices;
    bool format_ok = false;

    bool operator==(const PlanParse&) const = default;
};

namespace detail {

// All "(k)" groups (parenthesized integers, internal spaces allowed) in s.
inline std::vector<int> scan_index_groups(std::string_view s) {
    std::vector<int> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '(') continue;
        std::size_t j = i + 1;
        while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
        std::size_t d0 = j;
        unsigned long long v = 0;
        while (j < s.size() && s[j] >= '0' && s[j] <= '9' && v <= 1000000000ull) {
            v = v * 10 + static_cast<unsigned long long>(s[j] - '0');
            ++j;
        }
        if (j == d0 || v > 1000000000ull) continue;
        while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
        if (j < s.size() && s[j] == ')') {
            out.push_back(static_cast<int>(v));
            i = j;
        }
    }
    return out;
}

inline std::vector<std::size_t> find_all(std::string_view s, std::string_view needle) {
    std::vector<std::size_t> out;
    for (std::size_t p = s.find(needle); p != std::string_view::npos; p = s.find(needle, p + 1))
        out.push_back(p);
    return out;
}

}  // namespace detail

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";

// format_ok requires exactly one well-formed <think>...</think> pair with no
// index token before it. With a single well-formed pair, indices are taken
// after the closing tag; otherwise (no tags, unclosed, repeated, reversed)
// they are taken from the whole text. Duplicates are kept; validation against
// a registry happens downstream.
inline PlanParse parse_plan_output(std::string_view text) {
    PlanParse r;
    auto opens = detail::find_all(text, kThinkOpen);
    auto closes = detail::find_all(text, kThinkClose);

    bool single_pair = opens.size() == 1 && closes.size() == 1 && opens[0] < closes[0];
    if (single_pair) {
        auto body_begin = opens[0] + kThinkOpen.size();
        r.thinking = trim_copy(text.substr(body_begin, closes[0] - body_begin));
        r.tool_indices = detail::scan_index_groups(text.substr(closes[0] + kThinkClose.size()));
        r.format_ok = detail::scan_index_groups(text.substr(0, opens[0])).empty();
    } else {
        r.tool_indices = detail::scan_index_groups(text);
        r.format_ok = false;
    }
    return r;
}

inline std::string serialize_plan(const ToolPlan& plan) {
    std::string out;
    if (plan.thinking) {
        out += kThinkOpen;
        out += *plan.thinking;
        out += kThinkClose;
    }
    for (int idx : plan.tool_indices) {
        if (!out.empty()) out += ' ';
        out += '(' + std::to_string(idx) + ')';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metadata ranking. Shared by the mining prompts, SFT context strings, and
// the default display-adjustment strategy.
// ---------------------------------------------------------------------------

using ImportanceTable = std::map<std::string, int>;

inline const ImportanceTable& default_importance_table() {
    static const ImportanceTable table = {
        {"price", 0},    {"title", 1},        {"quantity", 2}, {"origin", 3},
        {"package_size", 4}, {"material", 5}, {"brand", 6},    {"color", 7},
    };
    return table;
}

// Pairs sorted by importance rank, unknown keys last in lexicographic order,
// truncated to k.
inline std::vector<std::pair<std::string, std::string>> rank_metadata(
    const Product& product, const ImportanceTable& table = default_importance_table(),
    std::size_t k = 10) {
    constexpr int kUnknown = std::numeric_limits<int>::max();
    std::vector<std::pair<std::string, std::string>> pairs = product.metadata;
    std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
        auto rank = [&](const std::string& key) {
            auto it = table.find(key);
            return it == table.end() ? kUnknown : it->second;
        };
        int ra = rank(a.first), rb = rank(b.first);
        if (ra != rb) return ra < rb;
        return a.first < b.first;
    });
    if (pairs.size() > k) pairs.resize(k);
    return pairs;
}

}  // namespace revision
