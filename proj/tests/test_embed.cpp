#include <catch2/catch_amalgamated.hpp>

#include "revision/embed.hpp"

#include <cstdio>
#include <filesystem>
#include <random>

using namespace revision;

TEST_CASE("reference embedder: deterministic, unit norm, fixed dim") {
    ReferenceEmbedder emb;
    auto v1 = emb.embed_text("stylish black dress");
    auto v2 = emb.embed_text("stylish black dress");
    REQUIRE(v1.size() == kEmbeddingDim);
    CHECK(v1 == v2);
    CHECK(l2_norm(v1) == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("reference embedder: short texts hash whole string") {
    ReferenceEmbedder emb;
    for (std::string s : {"", "a", "ab"}) {
        auto v = emb.embed_text(s);
        std::size_t nonzero = 0, bucket = 0;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] != 0.0f) {
                ++nonzero;
                bucket = i;
            }
        CHECK(nonzero == 1);
        CHECK(bucket == fnv1a64(s) % kEmbeddingDim);
        CHECK(v[bucket] == 1.0f);
    }
}

TEST_CASE("reference embedder: similar strings score above unrelated ones") {
    ReferenceEmbedder emb;
    auto base = emb.embed_text("black off-shoulder dress");
    auto close = emb.embed_text("black off-shoulder dresses");
    auto far = emb.embed_text("stainless steel water bottle");
    CHECK(cosine(base, close) > cosine(base, far));
    CHECK(cosine(base, base) == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("image embedding hashes the reference bytes") {
    ReferenceEmbedder emb;
    CHECK(emb.embed_image("img://q/123.jpg") == emb.embed_text("img://q/123.jpg"));
    CHECK(emb.embed_image("img://a") != emb.embed_image("img://b"));
}

TEST_CASE("cosine: dim mismatch throws, zero vector scores zero") {
    std::vector<float> a(4, 0.5f), b(5, 0.5f), z(4, 0.0f);
    CHECK_THROWS_AS(cosine(a, b), std::invalid_argument);
    CHECK(cosine(a, z) == 0.0);
    CHECK(cosine(z, z) == 0.0);
}

TEST_CASE("cosine bounds on random normalized vectors") {
    std::mt19937_64 rng(3);
    ReferenceEmbedder emb(32);
    for (int i = 0; i < 100; ++i) {
        auto a = emb.embed_text("t" + std::to_string(rng() % 1000));
        auto b = emb.embed_text("t" + std::to_string(rng() % 1000));
        double c = cosine(a, b);
        CHECK(c >= -1.0 - 1e-9);
        CHECK(c <= 1.0 + 1e-9);
    }
}

TEST_CASE("index: upsert replaces, remove deletes") {
    VectorIndex idx(4);
    idx.upsert("k", {1, 0, 0, 0}, "v1");
    idx.upsert("k", {0, 1, 0, 0}, "v2");
    CHECK(idx.size() == 1);
    CHECK(idx.payload_of("k") == "v2");
    CHECK(idx.remove("k"));
    CHECK(!idx.remove("k"));
    CHECK(idx.size() == 0);
}

TEST_CASE("index: top_k ordering and tie break by key") {
    VectorIndex idx(2);
    idx.upsert("b", {1, 0});
    idx.upsert("a", {1, 0});
    idx.upsert("c", {0, 1});
    auto hits = idx.top_k({1, 0}, 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].key == "a");
    CHECK(hits[1].key == "b");
    CHECK(hits[2].key == "c");
    CHECK(hits[0].score == Catch::Approx(1.0));
    CHECK(hits[2].score == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("index: top_k against brute force") {
    ReferenceEmbedder emb(64);
    VectorIndex idx(64);
    std::vector<std::pair<std::string, std::vector<float>>> all;
    for (int i = 0; i < 50; ++i) {
        std::string key = "item-" + std::to_string(i);
        auto v = emb.embed_text("product number " + std::to_string(i * 7));
        idx.upsert(key, v);
        all.emplace_back(key, v);
    }
    auto q = emb.embed_text("product number 21");
    auto hits = idx.top_k(q, 5);
    REQUIRE(hits.size() == 5);

    // brute force best
    std::string best;
    double best_score = -2;
    for (const auto& [key, v] : all) {
        double s = cosine(q, v);
        if (s > best_score || (s == best_score && key < best)) {
            best_score = s;
            best = key;
        }
    }
    CHECK(hits[0].key == best);
    CHECK(hits[0].score == Catch::Approx(best_score));
    for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1].score >= hits[i].score);
}

TEST_CASE("index: nearest on empty index") {
    VectorIndex idx(4);
    CHECK(!idx.nearest({1, 0, 0, 0}).has_value());
}

TEST_CASE("index: save/load round trip is exact") {
    ReferenceEmbedder emb(16);
    VectorIndex idx(16);
    for (int i = 0; i < 20; ++i)
        idx.upsert("key" + std::to_string(i), emb.embed_text("text " + std::to_string(i)),
                   "payload-" + std::to_string(i));
    auto path = std::filesystem::temp_directory_path() / "revision_index_test.bin";
    idx.save(path.string());

    VectorIndex loaded(1);  // dim overwritten by load
    loaded.load(path.string());
    CHECK(loaded.dim() == 16);
    CHECK(loaded.size() == idx.size());
    auto q = emb.embed_text("text 7");
    CHECK(loaded.top_k(q, 5) == idx.top_k(q, 5));
    CHECK(loaded.payload_of("key3") == "payload-3");
    std::filesystem::remove(path);
}

TEST_CASE("index: load rejects corrupt files") {
    auto path = std::filesystem::temp_directory_path() / "revision_index_bad.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE furthermore this is not an index";
    }
    VectorIndex idx(4);
    CHECK_THROWS_AS(idx.load(path.string()), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("index: rejects wrong-dim upsert") {
    VectorIndex idx(4);
    CHECK_THROWS_AS(idx.upsert("k", {1, 2}), std::invalid_argument);
}
