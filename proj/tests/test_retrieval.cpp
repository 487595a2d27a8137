#include <gtest/gtest.h>

#include <random>

#include "embsim/error.hpp"
#include "embsim/retrieval.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace embsim {
namespace {

EmbeddingMatrix tiny(std::vector<float> data, std::size_t dim) {
  const std::size_t n = data.size() / dim;
  return testing::make_embeddings("m", "ds", EmbeddingKind::chunks, dim, std::move(data), testing::chunk_keys(n));
}

TEST(TopK, SimpleRanking) {
  const auto m = tiny({1, 0, 0, 1, 0.7f, 0.7f, -1, 0}, 2);
  const std::vector<float> q{1, 0.1f};
  const auto r = top_k(q, m, 2);
  ASSERT_EQ(r.hits.size(), 2u);
  EXPECT_EQ(r.hits[0].key.doc_id, "doc0");
  EXPECT_EQ(r.hits[1].key.doc_id, "doc2");
  EXPECT_GT(r.hits[0].score, r.hits[1].score);
}

TEST(TopK, TiesBreakByAscendingKey) {
  // doc1 and doc3 are identical; doc10 sorts before doc3 lexicographically.
  auto m = tiny({0, 1, 1, 0, 0, 1, 1, 0}, 2);
  m.keys = {ChunkKey{"doc0", 0}, ChunkKey{"doc3", 0}, ChunkKey{"doc2", 0}, ChunkKey{"doc10", 0}};
  const std::vector<float> q{1, 0};
  const auto r = top_k(q, m, 2);
  EXPECT_EQ(r.hits[0].key.doc_id, "doc10");
  EXPECT_EQ(r.hits[1].key.doc_id, "doc3");
  const auto full = full_ranking(q, m);
  EXPECT_EQ(full.hits[2].key.doc_id, "doc0");
  EXPECT_EQ(full.hits[3].key.doc_id, "doc2");
}

TEST(TopK, KLargerThanCorpusAndZeroRows) {
  const auto m = tiny({1, 0, 0, 0, 0, 1}, 2);
  const std::vector<float> q{1, 1};
  const auto r = top_k(q, m, 10);
  EXPECT_EQ(r.hits.size(), 2u);
  EXPECT_EQ(r.k, 10u);
  EXPECT_EQ(RetrievalIndex(m).searchable_rows(), 2u);
  EXPECT_THROW(top_k(q, m, 0), DataError);
  const std::vector<float> zero{0, 0};
  EXPECT_THROW(top_k(zero, m, 1), DataError);
  const std::vector<float> wrong{1, 0, 0};
  EXPECT_THROW(top_k(wrong, m, 1), DataError);
}

TEST(TopK, MatchesArgsortOracleWithTies) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng() % 300;
    const std::size_t dim = 1 + rng() % 6;
    auto m = testing::random_embeddings(rng, "m", n, dim);
    // Duplicate rows manufacture exact score ties.
    for (std::size_t i = 1; i < n; i += 3) std::copy_n(m.row(i - 1).begin(), dim, m.data.begin() + i * dim);
    std::vector<float> q(dim);
    for (auto& v : q) v = std::normal_distribution<float>(0, 1)(rng);
    const auto expected = oracle::argsort(q, m);
    const RetrievalIndex index(m);
    const auto full = index.full_ranking(q);
    ASSERT_EQ(full.hits.size(), expected.size());
    for (std::size_t k : {std::size_t{1}, std::size_t{3}, n / 3 + 1, n}) {
      const auto r = index.top_k(q, k);
      ASSERT_EQ(r.hits.size(), std::min(k, n));
      for (std::size_t i = 0; i < r.hits.size(); ++i) {
        EXPECT_EQ(r.hits[i].key, expected[i].second);
        EXPECT_EQ(r.hits[i].score, expected[i].first);
        EXPECT_EQ(r.hits[i], full.hits[i]);
      }
    }
  }
}

RetrievalResult ranking_of(const std::vector<ChunkKey>& keys, std::string qid = "q") {
  RetrievalResult r{std::move(qid), "m", {}, keys.size()};
  for (const auto& k : keys) r.hits.push_back(Hit{k, 0.0});
  return r;
}

TEST(SweepK, MatchesBruteForceExactly) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 1 + rng() % 64;
    auto a = testing::chunk_keys(n, 2);
    auto b = a;
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    const auto curve = sweep_k(ranking_of(a), ranking_of(b));
    const auto expected = oracle::brute_sweep(a, b);
    ASSERT_EQ(curve.points.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(curve.points[i], expected[i]) << "k=" << i + 1;
    EXPECT_EQ(curve.points.back().jaccard, 1.0);
  }
}

TEST(SweepK, SelfSweepIsConstantOne) {
  const auto keys = testing::chunk_keys(20);
  const auto curve = sweep_k(ranking_of(keys), ranking_of(keys));
  for (const auto& p : curve.points) {
    EXPECT_EQ(p.jaccard, 1.0);
    EXPECT_EQ(p.rank_sim, 1.0);
  }
}

TEST(SweepK, RejectsMismatchedRankings) {
  const auto keys = testing::chunk_keys(4);
  auto other = keys;
  other[0].doc_id = "zzz";
  EXPECT_THROW(sweep_k(ranking_of(keys), ranking_of(other)), DataError);
  EXPECT_THROW(sweep_k(ranking_of(keys), ranking_of({keys[0]})), DataError);
  EXPECT_THROW(sweep_k(ranking_of(keys, "q1"), ranking_of(keys, "q2")), DataError);
}

}  // namespace
}  // namespace embsim
