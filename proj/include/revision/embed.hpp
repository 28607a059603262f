#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "revision/core.hpp"

namespace revision {

inline constexpr std::size_t kEmbeddingDim = 256;

inline double l2_norm(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

inline void l2_normalize(std::vector<float>& v) {
    double n = l2_norm(v);
    if (n < 1e-12) return;
    for (float& x : v) x = static_cast<float>(x / n);
}

// Dimension mismatch is a programming error, not a data condition.
inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na < 1e-24 || nb < 1e-24) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<float> embed_text(std::string_view text) const = 0;
    virtual std::vector<float> embed_image(std::string_view image_ref) const = 0;
};

// Hashed byte-trigram bag, L2-normalized. Cheap, deterministic, and similar
// strings land near each other, which is all the pipeline needs from an
// embedding when no model endpoint is wired in. Images are embedded by
// hashing the reference string's own bytes, so identical refs collide to the
// same point.
class ReferenceEmbedder : public Embedder {
public:
    explicit ReferenceEmbedder(std::size_t dim = kEmbeddingDim) : dim_(dim) {
        if (dim_ == 0) throw std::invalid_argument("embedder: dim must be positive");
    }

    std::size_t dim() const override { return dim_; }

    std::vector<float> embed_text(std::string_view text) const override {
        std::vector<float> v(dim_, 0.0f);
        if (text.size() < 3) {
            v[fnv1a64(text) % dim_] = 1.0f;
            return v;
        }
        for (std::size_t i = 0; i + 3 <= text.size(); ++i)
            v[fnv1a64(text.substr(i, 3)) % dim_] += 1.0f;
        l2_normalize(v);
        return v;
    }

    std::vector<float> embed_image(std::string_view image_ref) const override {
        return embed_text(image_ref);
    }

private:
    std::size_t dim_;
};

struct IndexHit {
    std::string key;
    double score = 0.0;
    std::string payload;

    bool operator==(const IndexHit&) const = default;
};

// Flat-scan vector index: exact, ordered, no ANN surprises. Upserts replace
// by key; search ties break on key ascending so results are reproducible.
class VectorIndex {
public:
    explicit VectorIndex(std::size_t dim = kEmbeddingDim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }

    void upsert(const std::string& key, std::vector<float> vec, std::string payload = {}) {
        if (vec.size() != dim_)
            throw std::invalid_argument("index: vector dim " + std::to_string(vec.size()) +
                                        " != " + std::to_string(dim_));
        std::unique_lock lock(mu_);
        for (auto& e : entries_) {
            if (e.key == key) {
                e.vec = std::move(vec);
                e.payload = std::move(payload);
                return;
            }
        }
        entries_.push_back({key, std::move(vec), std::move(payload)});
    }

    // Replaces the payload without touching the stored vector. False if the
    // key is absent.
    bool update_payload(const std::string& key, std::string payload) {
        std::unique_lock lock(mu_);
        for (auto& e : entries_) {
            if (e.key == key) {
                e.payload = std::move(payload);
                return true;
            }
        }
        return false;
    }

    bool remove(const std::string& key) {
        std::unique_lock lock(mu_);
        for (auto it = entries_.begin(); it != entries_.end(); ++it) {
            if (it->key == key) {
                entries_.erase(it);
                return true;
            }
        }
        return false;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return entries_.size();
    }

    std::vector<IndexHit> top_k(const std::vector<float>& query, std::size_t k) const {
        std::shared_lock lock(mu_);
        std::vector<IndexHit> hits;
        hits.reserve(entries_.size());
        for (const auto& e : entries_)
            hits.push_back({e.key, cosine(query, e.vec), e.payload});
        std::sort(hits.begin(), hits.end(), [](const IndexHit& a, const IndexHit& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.key < b.key;
        });
        if (hits.size() > k) hits.resize(k);
        return hits;
    }

    std::optional<IndexHit> nearest(const std::vector<float>& query) const {
        auto hits = top_k(query, 1);
        if (hits.empty()) return std::nullopt;
        return hits[0];
    }

    std::vector<std::string> keys() const {
        std::shared_lock lock(mu_);
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.key);
        return out;
    }

    std::optional<std::string> payload_of(const std::string& key) const {
        std::shared_lock lock(mu_);
        for (const auto& e : entries_)
            if (e.key == key) return e.payload;
        return std::nullopt;
    }

    void clear() {
        std::unique_lock lock(mu_);
        entries_.clear();
    }

    // Binary snapshot: "RVIX" | u32 version | u32 dim | u64 count | entries.
    // Each entry: u32 key_len, key, u32 payload_len, payload, dim floats.
    void save(const std::string& path) const {
        std::shared_lock lock(mu_);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("index: cannot open for write: " + path);
        out.write("RVIX", 4);
        write_u32(out, 1);
        write_u32(out, static_cast<std::uint32_t>(dim_));
        write_u64(out, entries_.size());
        for (const auto& e : entries_) {
            write_u32(out, static_cast<std::uint32_t>(e.key.size()));
            out.write(e.key.data(), static_cast<std::streamsize>(e.key.size()));
            write_u32(out, static_cast<std::uint32_t>(e.payload.size()));
            out.write(e.payload.data(), static_cast<std::streamsize>(e.payload.size()));
            out.write(reinterpret_cast<const char*>(e.vec.data()),
                      static_cast<std::streamsize>(e.vec.size() * sizeof(float)));
        }
        if (!out) throw std::runtime_error("index: write failed: " + path);
    }

    void load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("index: cannot open for read: " + path);
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "RVIX", 4) != 0)
            throw std::runtime_error("index: bad magic in " + path);
        auto version = read_u32(in);
        if (version != 1)
            throw std::runtime_error("index: unsupported version " + std::to_string(version));
        auto dim = read_u32(in);
        auto count = read_u64(in);
        std::vector<Entry> entries;
        entries.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            Entry e;
            e.key.resize(read_u32(in));
            in.read(e.key.data(), static_cast<std::streamsize>(e.key.size()));
            e.payload.resize(read_u32(in));
            in.read(e.payload.data(), static_cast<std::streamsize>(e.payload.size()));
            e.vec.resize(dim);
            in.read(reinterpret_cast<char*>(e.vec.data()),
                    static_cast<std::streamsize>(dim * sizeof(float)));
            if (!in) throw std::runtime_error("index: truncated file: " + path);
            entries.push_back(std::move(e));
        }
        std::unique_lock lock(mu_);
        dim_ = dim;
        entries_ = std::move(entries);
    }

private:
    struct Entry {
        std::string key;
        std::vector<float> vec;
        std::string payload;
    };

    static void write_u32(std::ostream& out, std::uint32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static void write_u64(std::ostream& out, std::uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static std::uint32_t read_u32(std::istream& in) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        return v;
    }
    static std::uint64_t read_u64(std::istream& in) {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        return v;
    }

    std::size_t dim_;
    std::vector<Entry> entries_;
    mutable std::shared_mutex mu_;
};

}  // namespace revision
