#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "embsim/analysis.hpp"
#include "embsim/embed_client.hpp"
#include "embsim/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace embsim {
namespace {

struct MockModel {
  EmbeddingMatrix chunks;
  EmbeddingMatrix queries;
  ModelEmbeddings view() const { return {&chunks, &queries}; }
};

MockModel mock_model(const std::string& id, std::int64_t seed, std::size_t n_chunks, std::size_t n_queries,
                     std::size_t dim = 16) {
  ChunkedCorpus corpus{"ds", {}, ChunkingConfig{}};
  for (std::size_t i = 0; i < n_chunks; ++i)
    corpus.chunks.push_back(Chunk{ChunkKey{"d" + std::to_string(i), 0}, "chunk text " + std::to_string(i), 3});
  QuerySet queries{"ds", {}};
  for (std::size_t i = 0; i < n_queries; ++i) queries.queries.push_back({"q" + std::to_string(i), "query " + std::to_string(i)});
  ProviderConfig cfg;
  cfg.provider_id = id;
  cfg.endpoint_url = "mock://" + std::to_string(dim) + "?seed=" + std::to_string(seed);
  cfg.batch_size = 256;
  const Embedder e(cfg);
  return MockModel{embed_corpus(corpus, e), embed_queries(queries, corpus.config, e)};
}

TEST(SelectQueries, FirstAndSeededRandom) {
  const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
  EXPECT_EQ(select_queries(ids, 3, QuerySelection::first, 0), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(select_queries(ids, 10, QuerySelection::first, 0).size(), 6u);
  const auto r1 = select_queries(ids, 3, QuerySelection::random, 42);
  EXPECT_EQ(r1, select_queries(ids, 3, QuerySelection::random, 42));
  EXPECT_EQ(r1.size(), 3u);
  EXPECT_TRUE(std::is_sorted(r1.begin(), r1.end()));
  std::set<std::vector<std::string>> distinct;
  for (std::uint64_t seed = 0; seed < 20; ++seed) distinct.insert(select_queries(ids, 3, QuerySelection::random, seed));
  EXPECT_GT(distinct.size(), 5u);
}

TEST(PairwiseMatrix, IdenticalModelsScoreOneEverywhere) {
  const auto a = mock_model("a", 1, 200, 10);
  const auto b = mock_model("b", 1, 200, 10);
  const std::vector<ModelEmbeddings> models{a.view(), b.view()};
  CompareParams params;
  params.k = 10;
  for (auto measure : {Measure::cka, Measure::jaccard, Measure::rank}) {
    const auto m = pairwise_matrix(measure, models, params);
    m.validate();
    EXPECT_NEAR(m.at(0, 1), 1.0, 1e-9) << to_string(measure);
  }
}

TEST(PairwiseMatrix, ThreadCountDoesNotChangeRetrievalScores) {
  const auto a = mock_model("a", 1, 300, 12);
  const auto b = mock_model("b", 2, 300, 12);
  const auto c = mock_model("c", 3, 300, 12);
  const std::vector<ModelEmbeddings> models{a.view(), b.view(), c.view()};
  CompareParams one;
  CompareParams four;
  four.threads = 4;
  for (auto measure : {Measure::jaccard, Measure::rank}) {
    const auto x = pairwise_matrix(measure, models, one);
    EXPECT_EQ(x.values, pairwise_matrix(measure, models, four).values);
    EXPECT_EQ(x.num_queries, 12u);
    EXPECT_EQ(x.k, 10u);
  }
}

TEST(PairwiseMatrix, CellMatchesComparePair) {
  const auto a = mock_model("a", 1, 150, 8);
  const auto b = mock_model("b", 2, 150, 8);
  const std::vector<ModelEmbeddings> models{a.view(), b.view()};
  CompareParams params;
  params.k = 5;
  for (auto measure : {Measure::cka, Measure::jaccard, Measure::rank})
    EXPECT_EQ(pairwise_matrix(measure, models, params).at(0, 1), compare_pair(measure, a.view(), b.view(), params).value);
}

TEST(PairwiseMatrix, StoreVariantMatchesInMemoryAndListsMissing) {
  testing::TempDir dir;
  Store store(dir.path());
  const auto a = mock_model("a", 1, 120, 6);
  const auto b = mock_model("b", 5, 120, 6);
  for (const auto* m : {&a, &b}) {
    store.put(m->chunks);
    store.put(m->queries);
  }
  const std::vector<std::string> labels{"a", "b"};
  const std::vector<ModelEmbeddings> models{a.view(), b.view()};
  CompareParams params;
  for (auto measure : {Measure::cka, Measure::jaccard, Measure::rank})
    EXPECT_EQ(pairwise_matrix(measure, labels, "ds", store, params).values,
              pairwise_matrix(measure, models, params).values);

  const std::vector<std::string> with_missing{"a", "ghost", "phantom"};
  try {
    pairwise_matrix(Measure::jaccard, with_missing, "ds", store, params);
    FAIL();
  } catch (const NotFoundError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("ghost"), std::string::npos);
    EXPECT_NE(what.find("phantom"), std::string::npos);
  }
  const std::vector<std::string> dup{"a", "a"};
  EXPECT_THROW(pairwise_matrix(Measure::cka, dup, "ds", store, params), DataError);
}

TEST(PairwiseMatrix, ValidateCatchesBadMatrices) {
  PairwiseMatrix m{Measure::cka, {"a", "b"}, {1, 0.5, 0.4, 1}, "ds", std::nullopt, std::nullopt};
  EXPECT_THROW(m.validate(), DataError);
  m.values = {1, 1.5, 1.5, 1};
  EXPECT_THROW(m.validate(), DataError);
  m.values = {0.9, 0.5, 0.5, 1};
  EXPECT_THROW(m.validate(), DataError);
  m.values = {1, 0.5, 0.5, 1};
  EXPECT_NO_THROW(m.validate());
}

TEST(MeanMatrices, AveragesAndChecksCompatibility) {
  PairwiseMatrix x{Measure::jaccard, {"a", "b"}, {1, 0.2, 0.2, 1}, "d1", 10, 25};
  PairwiseMatrix y{Measure::jaccard, {"a", "b"}, {1, 0.4, 0.4, 1}, "d2", 10, 25};
  const std::vector<PairwiseMatrix> both{x, y};
  const auto mean = mean_matrices(both);
  EXPECT_EQ(mean.dataset_id, "mean");
  EXPECT_NEAR(mean.at(0, 1), 0.3, 1e-15);
  EXPECT_EQ(mean.at(0, 0), 1.0);
  EXPECT_EQ(mean.num_queries, 25u);
  y.k = 20;
  EXPECT_THROW(mean_matrices(std::vector<PairwiseMatrix>{x, y}), DataError);
  y.k = 10;
  y.labels = {"b", "a"};
  EXPECT_THROW(mean_matrices(std::vector<PairwiseMatrix>{x, y}), DataError);
}

PairwiseMatrix random_similarity(std::mt19937_64& rng, std::size_t m) {
  PairwiseMatrix out{Measure::cka, {}, std::vector<double>(m * m, 1.0), "ds", std::nullopt, std::nullopt};
  for (std::size_t i = 0; i < m; ++i) out.labels.push_back("m" + std::to_string(i));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) out.at(i, j) = out.at(j, i) = u(rng);
  return out;
}

TEST(Clustering, MatchesNaiveUpgma) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 30; ++t) {
    const std::size_t m = 2 + rng() % 11;
    const auto sim = random_similarity(rng, m);
    std::vector<double> dist(m * m);
    for (std::size_t i = 0; i < m * m; ++i) dist[i] = 1.0 - sim.values[i];
    const auto d = hierarchical_cluster(sim);
    const auto expected = oracle::naive_upgma(dist, m, kLinkageTieTolerance);
    ASSERT_EQ(d.merges.size(), m - 1);
    for (std::size_t s = 0; s + 1 < m; ++s) {
      EXPECT_EQ(oracle::leaves_of(d, d.merges[s].cluster_a), expected[s].left_leaves);
      EXPECT_EQ(oracle::leaves_of(d, d.merges[s].cluster_b), expected[s].right_leaves);
      EXPECT_NEAR(d.merges[s].height, expected[s].height, 1e-12);
      EXPECT_EQ(d.merges[s].size, expected[s].left_leaves.size() + expected[s].right_leaves.size());
    }
    std::vector<std::size_t> sorted = d.leaf_order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < m; ++i) EXPECT_EQ(sorted[i], i);
  }
}

TEST(Clustering, HeightsAreMonotoneForAverageLinkage) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    const auto d = hierarchical_cluster(random_similarity(rng, 9));
    for (std::size_t s = 1; s < d.merges.size(); ++s) EXPECT_GE(d.merges[s].height + 1e-12, d.merges[s - 1].height);
  }
}

TEST(Clustering, KnownTreeAndTieBreak) {
  // a-b very close, c-d close, the two pairs far apart.
  PairwiseMatrix m{Measure::cka, {"a", "b", "c", "d"},
                   {1, 0.9, 0.1, 0.1,  //
                    0.9, 1, 0.1, 0.1,  //
                    0.1, 0.1, 1, 0.8,  //
                    0.1, 0.1, 0.8, 1},
                   "ds", std::nullopt, std::nullopt};
  const auto d = hierarchical_cluster(m);
  EXPECT_EQ(d.merges[0].cluster_a, 0u);
  EXPECT_EQ(d.merges[0].cluster_b, 1u);
  EXPECT_NEAR(d.merges[0].height, 0.1, 1e-12);
  EXPECT_EQ(d.merges[1].cluster_a, 2u);
  EXPECT_EQ(d.merges[1].cluster_b, 3u);
  EXPECT_EQ(d.merges[2].cluster_a, 4u);
  EXPECT_EQ(d.merges[2].cluster_b, 5u);
  EXPECT_NEAR(d.merges[2].height, 0.9, 1e-12);
  EXPECT_EQ(d.leaf_order, (std::vector<std::size_t>{0, 1, 2, 3}));

  PairwiseMatrix ties{Measure::cka, {"a", "b", "c"}, {1, 0.5, 0.5, 0.5, 1, 0.5, 0.5, 0.5, 1}, "ds", {}, {}};
  const auto t = hierarchical_cluster(ties);
  EXPECT_EQ(t.merges[0].cluster_a, 0u);
  EXPECT_EQ(t.merges[0].cluster_b, 1u);
}

TEST(Clustering, SingleAndCompleteLinkage) {
  PairwiseMatrix m{Measure::cka, {"a", "b", "c"}, {1, 0.9, 0.5, 0.9, 1, 0.2, 0.5, 0.2, 1}, "ds", {}, {}};
  EXPECT_NEAR(hierarchical_cluster(m, Linkage::single).merges[1].height, 0.5, 1e-12);
  EXPECT_NEAR(hierarchical_cluster(m, Linkage::complete).merges[1].height, 0.8, 1e-12);
  EXPECT_NEAR(hierarchical_cluster(m, Linkage::average).merges[1].height, 0.65, 1e-12);
  EXPECT_THROW(parse_linkage("ward"), DataError);
}

TEST(Clustering, PermutationInvariance) {
  std::mt19937_64 rng(14);
  const auto sim = random_similarity(rng, 8);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  PairwiseMatrix permuted = sim;
  for (std::size_t i = 0; i < 8; ++i) {
    permuted.labels[i] = sim.labels[perm[i]];
    for (std::size_t j = 0; j < 8; ++j) permuted.at(i, j) = sim.at(perm[i], perm[j]);
  }
  const auto d1 = hierarchical_cluster(sim);
  const auto d2 = hierarchical_cluster(permuted);
  auto label_sets = [](const Dendrogram& d) {
    std::vector<std::pair<std::set<std::string>, double>> out;
    for (std::size_t s = 0; s < d.merges.size(); ++s) {
      std::set<std::string> labels;
      for (auto leaf : oracle::leaves_of(d, d.labels.size() + s)) labels.insert(d.labels[leaf]);
      out.emplace_back(labels, d.merges[s].height);
    }
    return out;
  };
  const auto s1 = label_sets(d1);
  const auto s2 = label_sets(d2);
  ASSERT_EQ(s1.size(), s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    EXPECT_EQ(s1[i].first, s2[i].first);
    EXPECT_NEAR(s1[i].second, s2[i].second, 1e-12);
  }
}

TEST(Clustering, RejectsAsymmetricDistances) {
  const std::vector<double> dist{0, 0.5, 0.4, 0};
  EXPECT_THROW(cluster_distances(dist, {"a", "b"}, Linkage::average), DataError);
}

TEST(ColorRamp, Stops) {
  EXPECT_EQ(to_hex(color_ramp(0.0)), "#440154");
  EXPECT_EQ(to_hex(color_ramp(0.5)), "#21918c");
  EXPECT_EQ(to_hex(color_ramp(1.0)), "#fde725");
  EXPECT_EQ(to_hex(color_ramp(-3.0)), "#440154");
  EXPECT_EQ(to_hex(color_ramp(7.0)), "#fde725");
  EXPECT_EQ(color_ramp(0.25), (Rgb{0x33, 0x49, 0x70}));
}

TEST(Reports, CsvHeaderRowsAndProvenance) {
  PairwiseMatrix m{Measure::jaccard, {"a", "b"}, {1, 0.25, 0.25, 1}, "nfcorpus", 10, 25};
  const std::string csv = render_csv(m, {{"chunk_size", "256"}, {"tokenizer_id", "whitespace"}});
  EXPECT_EQ(csv,
            "# measure=jaccard,dataset=nfcorpus,k=10,num_queries=25\n"
            "# chunk_size=256,tokenizer_id=whitespace\n"
            "model_a,model_b,value\n"
            "a,a,1.000000000\n"
            "a,b,0.250000000\n"
            "b,b,1.000000000\n");
}

TEST(Reports, HeatmapSvgShowsValuesOnlyForSmallMatrices) {
  std::mt19937_64 rng(15);
  const auto small = random_similarity(rng, 4);
  const std::string svg = render_heatmap_svg(small);
  EXPECT_EQ(svg.rfind("<svg", 0) == 0 || svg.rfind("<?xml", 0) == 0, true);
  std::size_t cells = 0;
  for (std::size_t p = svg.find("class=\"cell\""); p != std::string::npos; p = svg.find("class=\"cell\"", p + 1)) ++cells;
  EXPECT_EQ(cells, 16u);
  EXPECT_NE(svg.find("class=\"cell-value\""), std::string::npos);
  EXPECT_NE(svg.find("ramp"), std::string::npos);

  const auto large = random_similarity(rng, kHeatmapTextLimit + 1);
  EXPECT_EQ(render_heatmap_svg(large).find("class=\"cell-value\""), std::string::npos);
}

TEST(Reports, HeatmapFollowsDendrogramLeafOrder) {
  PairwiseMatrix m{Measure::cka, {"a", "b", "c"}, {1, 0.1, 0.9, 0.1, 1, 0.1, 0.9, 0.1, 1}, "ds", {}, {}};
  const auto d = hierarchical_cluster(m);
  EXPECT_EQ(d.leaf_order, (std::vector<std::size_t>{0, 2, 1}));
  const std::string svg = render_heatmap_svg(m, &d);
  const auto pos_b = svg.find(">b</text>");
  const auto pos_c = svg.find(">c</text>");
  ASSERT_NE(pos_b, std::string::npos);
  ASSERT_NE(pos_c, std::string::npos);
  EXPECT_LT(pos_c, pos_b);
}

TEST(Reports, SweepCsvAndDendrogramJson) {
  const KSweepCurve curve{"a", "b", "q1", {{1, 1.0, 1.0}, {2, 0.5, 0.25}}};
  const std::string csv = render_sweep_csv(std::vector<KSweepCurve>{curve});
  EXPECT_NE(csv.find("query_id,k,jaccard,rank_sim\n"), std::string::npos);
  EXPECT_NE(csv.find("q1,2,0.500000000,0.250000000\n"), std::string::npos);

  PairwiseMatrix m{Measure::cka, {"x", "y"}, {1, 0.6, 0.6, 1}, "ds", {}, {}};
  const auto j = nlohmann::json::parse(render_dendrogram_json(hierarchical_cluster(m)));
  EXPECT_EQ(j.at("labels"), nlohmann::json::array({"x", "y"}));
  EXPECT_NEAR(j.at("merges")[0].at("height").get<double>(), 0.4, 1e-12);
  EXPECT_EQ(j.at("leaf_order"), nlohmann::json::array({"x", "y"}));
}

}  // namespace
}  // namespace embsim
