#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <thread>

#include <json.hpp>

#include "embsim/error.hpp"
#include "embsim/store.hpp"
#include "support.hpp"

namespace embsim {
namespace {

EmbeddingMatrix sample(const std::string& model, std::size_t n = 6, std::size_t dim = 4,
                       EmbeddingKind kind = EmbeddingKind::chunks) {
  std::mt19937_64 rng(std::hash<std::string>{}(model));
  return testing::random_embeddings(rng, model, n, dim, kind, "nf");
}

TEST(Store, PutGetRoundTripAndManifest) {
  testing::TempDir dir;
  Store store(dir.path());
  const auto m = sample("bge");
  const auto address = store.put(m);
  EXPECT_EQ(address, (StoreAddress{"nf", "bge", EmbeddingKind::chunks}));
  EXPECT_TRUE(store.contains(address));
  EXPECT_TRUE(bit_equal(store.get(address), m));
  EXPECT_EQ(store.file_path(address), dir.path() / "nf" / "bge.chunks.esf1");

  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  ASSERT_EQ(manifest.at("entries").size(), 1u);
  EXPECT_EQ(manifest["entries"][0]["file"], "nf/bge.chunks.esf1");
  EXPECT_EQ(manifest["entries"][0]["n"], 6);
  EXPECT_EQ(manifest["entries"][0]["dim"], 4);
}

TEST(Store, RefusesSilentOverwrite) {
  testing::TempDir dir;
  Store store(dir.path());
  store.put(sample("bge"));
  EXPECT_THROW(store.put(sample("bge")), DataError);
  auto replacement = sample("bge", 3, 4);
  store.put(replacement, true);
  EXPECT_EQ(store.get("nf", "bge", EmbeddingKind::chunks).rows(), 3u);
  EXPECT_EQ(store.entries().size(), 1u);
}

TEST(Store, MissingEntriesAndCorruptFiles) {
  testing::TempDir dir;
  Store store(dir.path());
  EXPECT_THROW(store.get("nf", "nope", EmbeddingKind::chunks), NotFoundError);
  const auto address = store.put(sample("bge"));
  {
    std::fstream f(store.file_path(address), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-12, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_THROW(store.get(address), ChecksumError);
  std::filesystem::remove(store.file_path(address));
  EXPECT_THROW(store.get(address), NotFoundError);
  EXPECT_FALSE(store.contains(address));
}

TEST(Store, ListsModelsAndDatasets) {
  testing::TempDir dir;
  Store store(dir.path());
  store.put(sample("zeta"));
  store.put(sample("alpha"));
  store.put(sample("alpha", 3, 4, EmbeddingKind::queries));
  EXPECT_EQ(store.models("nf", EmbeddingKind::chunks), (std::vector<std::string>{"alpha", "zeta"}));
  EXPECT_EQ(store.models("nf", EmbeddingKind::queries), (std::vector<std::string>{"alpha"}));
  EXPECT_EQ(store.datasets(), (std::vector<std::string>{"nf"}));
}

TEST(Store, RebuildManifestFromFiles) {
  testing::TempDir dir;
  Store store(dir.path());
  store.put(sample("a"));
  store.put(sample("b"));
  store.put_corpus(ChunkedCorpus{"nf", {Chunk{{"d", 0}, "x y", 2}}, ChunkingConfig{}}, QuerySet{"nf", {{"q", "t"}}});
  const auto before = store.entries();
  std::filesystem::remove(dir / "manifest.json");
  store.rebuild_manifest();
  const auto after = store.entries();
  ASSERT_EQ(after.size(), before.size());
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_EQ(after[i].address, before[i].address);
    EXPECT_EQ(after[i].checksum, before[i].checksum);
  }
  ASSERT_EQ(store.corpora().size(), 1u);
  EXPECT_EQ(store.corpora()[0].queries, 1u);
}

TEST(Store, CorpusPersistence) {
  testing::TempDir dir;
  Store store(dir.path());
  const ChunkedCorpus corpus{"nf", {Chunk{{"d", 0}, "x y", 2}, Chunk{{"d", 1}, "z", 1}}, ChunkingConfig{2, "whitespace"}};
  const QuerySet queries{"nf", {{"q1", "what"}, {"q2", "why"}}};
  EXPECT_FALSE(store.has_corpus("nf"));
  store.put_corpus(corpus, queries);
  EXPECT_TRUE(store.has_corpus("nf"));
  EXPECT_EQ(store.get_corpus("nf"), corpus);
  EXPECT_EQ(store.get_queries("nf").queries, queries.queries);
  EXPECT_THROW(store.get_corpus("other"), NotFoundError);
}

TEST(Store, RejectsPathLikeIds) {
  testing::TempDir dir;
  Store store(dir.path());
  auto m = sample("../evil");
  EXPECT_THROW(store.put(m), DataError);
  EXPECT_THROW(store.has_corpus(".."), DataError);
}

TEST(Store, ConcurrentWritersOnDistinctTargetsAreSafe) {
  testing::TempDir dir;
  std::vector<std::thread> writers;
  for (int t = 0; t < 6; ++t)
    writers.emplace_back([&, t] { Store(dir.path()).put(sample("m" + std::to_string(t))); });
  for (auto& w : writers) w.join();
  EXPECT_EQ(Store(dir.path()).entries().size(), 6u);
}

TEST(FileLock, SecondNonBlockingHolderIsBusy) {
  testing::TempDir dir;
  FileLock first(dir / "x.lock", false);
  EXPECT_THROW(FileLock(dir / "x.lock", false), StoreBusyError);
}

TEST(Align, FollowsFirstOrderAndReportsCounts) {
  auto a = sample("a", 5, 2);
  auto b = sample("b", 5, 3);
  std::reverse(b.keys.begin(), b.keys.end());
  b.keys.pop_back();
  b.data.resize(4 * 3);
  const auto pair = align(a, b);
  EXPECT_EQ(pair.shared_keys.size(), 4u);
  EXPECT_EQ(pair.count_b, 4u);
  std::size_t last_a = 0;
  for (std::size_t i = 0; i < pair.shared_keys.size(); ++i) {
    const auto& key = pair.shared_keys[i];
    const std::size_t ia = std::find(a.keys.begin(), a.keys.end(), key) - a.keys.begin();
    const std::size_t ib = std::find(b.keys.begin(), b.keys.end(), key) - b.keys.begin();
    ASSERT_LT(ib, b.keys.size());
    if (i > 0) {
      EXPECT_GT(ia, last_a);
    }
    last_a = ia;
    EXPECT_EQ(pair.a()(i, 1), a.row(ia)[1]);
    EXPECT_EQ(pair.b()(i, 2), b.row(ib)[2]);
  }
}

TEST(Align, IdenticalKeysAreNotCopied) {
  const auto a = sample("a", 5, 2);
  const auto b = sample("b", 5, 3);
  const auto pair = align(a, b);
  EXPECT_TRUE(pair.a_rows.empty());
  EXPECT_EQ(pair.a().values.data(), a.data.data());
  EXPECT_EQ(pair.b().values.data(), b.data.data());
}

TEST(Align, DisjointKeysOrDifferentDatasetsFail) {
  auto a = sample("a");
  auto b = sample("b");
  for (auto& k : b.keys) k.doc_id += "-other";
  EXPECT_THROW(align(a, b), DataError);
  b = sample("b");
  b.dataset_id = "other";
  EXPECT_THROW(align(a, b), DataError);
}

}  // namespace
}  // namespace embsim
