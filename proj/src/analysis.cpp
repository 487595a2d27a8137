#include "embsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "embsim/error.hpp"
#include "embsim/hash.hpp"
#include "embsim/log.hpp"
#include "embsim/parallel.hpp"
#include "embsim/simmath.hpp"

namespace embsim {
namespace {

constexpr double kMatrixTolerance = 1e-9;

double retrieval_score(Measure measure, std::span<const RetrievalResult> a, std::span<const RetrievalResult> b) {
  double total = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) {
    if (measure == Measure::jaccard) {
      total += jaccard(a[q].keys(), b[q].keys());
    } else {
      total += rank_sim(RankedSet<ChunkKey>(a[q].keys()), RankedSet<ChunkKey>(b[q].keys()));
    }
  }
  return total / static_cast<double>(a.size());
}

double cka_score(const ModelEmbeddings& a, const ModelEmbeddings& b, unsigned threads) {
  if (!a.chunks || !b.chunks) throw DataError("cka: chunk embeddings missing");
  const AlignedPair pair = align(*a.chunks, *b.chunks);
  return linear_cka(pair.a(), pair.b(), CkaOptions{threads, 4096});
}

PairwiseMatrix empty_matrix(Measure measure, std::vector<std::string> labels, std::string dataset,
                            const CompareParams& params) {
  PairwiseMatrix out;
  out.measure = measure;
  const std::size_t m = labels.size();
  out.labels = std::move(labels);
  out.values.assign(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) out.at(i, i) = 1.0;
  out.dataset_id = std::move(dataset);
  if (measure != Measure::cka) out.k = params.k;
  return out;
}

void check_labels(std::span<const std::string> labels) {
  if (labels.empty()) throw DataError("pairwise_matrix: no models given");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels)
    if (!seen.insert(l).second) throw DataError("pairwise_matrix: model " + l + " listed twice");
}

}  // namespace

std::string_view to_string(Measure measure) {
  switch (measure) {
    case Measure::cka: return "cka";
    case Measure::jaccard: return "jaccard";
    case Measure::rank: return "rank";
  }
  return "unknown";
}

Measure parse_measure(std::string_view name) {
  if (name == "cka") return Measure::cka;
  if (name == "jaccard") return Measure::jaccard;
  if (name == "rank") return Measure::rank;
  throw DataError("unknown measure '" + std::string(name) + "' (expected cka, jaccard or rank)");
}

QuerySelection parse_query_selection(std::string_view name) {
  if (name == "first") return QuerySelection::first;
  if (name == "random") return QuerySelection::random;
  throw DataError("unknown query selection '" + std::string(name) + "' (expected first or random)");
}

std::string_view to_string(QuerySelection selection) {
  return selection == QuerySelection::first ? "first" : "random";
}

void PairwiseMatrix::validate() const {
  const std::size_t m = labels.size();
  if (values.size() != m * m) throw DataError("pairwise matrix: value count does not match labels");
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double v = at(i, j);
      if (!std::isfinite(v) || v < -kMatrixTolerance || v > 1.0 + kMatrixTolerance)
        throw DataError("pairwise matrix: value out of [0, 1] at (" + labels[i] + ", " + labels[j] + ")");
      if (std::abs(v - at(j, i)) > kMatrixTolerance)
        throw DataError("pairwise matrix: not symmetric at (" + labels[i] + ", " + labels[j] + ")");
    }
    if (std::abs(at(i, i) - 1.0) > kMatrixTolerance)
      throw DataError("pairwise matrix: diagonal is not 1 for " + labels[i]);
  }
}

std::vector<std::string> select_queries(std::span<const std::string> ordered_ids, std::size_t count,
                                        QuerySelection selection, std::uint64_t seed) {
  count = std::min(count, ordered_ids.size());
  if (selection == QuerySelection::first) return {ordered_ids.begin(), ordered_ids.begin() + count};
  std::vector<std::size_t> index(ordered_ids.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) std::swap(index[i], index[i + rng.next_below(index.size() - i)]);
  index.resize(count);
  std::sort(index.begin(), index.end());
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i : index) out.push_back(ordered_ids[i]);
  return out;
}

std::vector<std::string> shared_query_ids(std::span<const ModelEmbeddings> models, const CompareParams& params) {
  if (models.empty()) throw DataError("no models given");
  for (const auto& m : models)
    if (!m.queries) throw DataError("retrieval measures need query embeddings for every model");
  std::vector<std::unordered_set<ChunkKey>> present;
  for (std::size_t i = 1; i < models.size(); ++i)
    present.emplace_back(models[i].queries->keys.begin(), models[i].queries->keys.end());
  std::vector<std::string> common;
  for (const auto& key : models.front().queries->keys) {
    const bool everywhere =
        std::all_of(present.begin(), present.end(), [&](const auto& keys) { return keys.count(key) > 0; });
    if (everywhere) common.push_back(key.doc_id);
  }
  if (common.empty()) throw DataError("models share no embedded queries");
  if (common.size() < models.front().queries->rows())
    log().warn("event=partial_queries shared={} first_model={}", common.size(), models.front().queries->rows());
  if (common.size() < params.num_queries)
    log().warn("event=fewer_queries requested={} available={}", params.num_queries, common.size());
  return select_queries(common, params.num_queries, params.selection, params.seed);
}

std::vector<RetrievalResult> retrieve_all(const ModelEmbeddings& model, std::span<const std::string> query_ids,
                                          std::size_t k, unsigned threads) {
  if (!model.chunks || !model.queries) throw DataError("retrieval needs chunk and query embeddings");
  const RetrievalIndex index(*model.chunks);
  std::unordered_map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < model.queries->rows(); ++i) row.emplace(model.queries->keys[i].doc_id, i);
  std::vector<RetrievalResult> out(query_ids.size());
  parallel_for(query_ids.size(), threads, [&](std::size_t q) {
    auto it = row.find(query_ids[q]);
    if (it == row.end())
      throw DataError("model " + model.queries->model_id + " has no embedding for query " + query_ids[q]);
    out[q] = index.top_k(model.queries->row(it->second), k, query_ids[q]);
  });
  return out;
}

SimilarityScore compare_pair(Measure measure, const ModelEmbeddings& a, const ModelEmbeddings& b,
                             const CompareParams& params) {
  SimilarityScore score;
  score.measure = measure;
  score.context.model_a = a.chunks ? a.chunks->model_id : "";
  score.context.model_b = b.chunks ? b.chunks->model_id : "";
  score.context.dataset_id = a.chunks ? a.chunks->dataset_id : "";
  if (measure == Measure::cka) {
    score.value = cka_score(a, b, params.threads);
    return score;
  }
  const ModelEmbeddings both[] = {a, b};
  const auto ids = shared_query_ids(both, params);
  const auto ra = retrieve_all(a, ids, params.k, params.threads);
  const auto rb = retrieve_all(b, ids, params.k, params.threads);
  score.value = retrieval_score(measure, ra, rb);
  score.context.k = params.k;
  return score;
}

PairwiseMatrix pairwise_matrix(Measure measure, std::span<const ModelEmbeddings> models, const CompareParams& params) {
  std::vector<std::string> labels;
  for (const auto& m : models) {
    if (!m.chunks) throw DataError("pairwise_matrix: chunk embeddings missing");
    labels.push_back(m.chunks->model_id);
  }
  check_labels(labels);
  for (const auto& m : models)
    if (m.chunks->dataset_id != models.front().chunks->dataset_id)
      throw DataError("pairwise_matrix: models come from different datasets");
  PairwiseMatrix out = empty_matrix(measure, labels, models.front().chunks->dataset_id, params);
  const std::size_t n = models.size();

  if (measure == Measure::cka) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        out.at(i, j) = out.at(j, i) = cka_score(models[i], models[j], params.threads);
    return out;
  }

  const auto ids = shared_query_ids(models, params);
  std::vector<std::vector<RetrievalResult>> results(n);
  for (std::size_t i = 0; i < n; ++i) results[i] = retrieve_all(models[i], ids, params.k, params.threads);
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) cells.emplace_back(i, j);
  std::vector<double> value(cells.size());
  parallel_for(cells.size(), params.threads, [&](std::size_t c) {
    value[c] = retrieval_score(measure, results[cells[c].first], results[cells[c].second]);
  });
  for (std::size_t c = 0; c < cells.size(); ++c) out.at(cells[c].first, cells[c].second) = out.at(cells[c].second, cells[c].first) = value[c];
  out.num_queries = ids.size();
  return out;
}

PairwiseMatrix pairwise_matrix(Measure measure, std::span<const std::string> models, const std::string& dataset_id,
                               const Store& store, const CompareParams& params) {
  check_labels(models);
  std::vector<std::string> missing;
  for (const auto& model : models) {
    for (auto kind : {EmbeddingKind::chunks, EmbeddingKind::queries}) {
      if (kind == EmbeddingKind::queries && measure == Measure::cka) continue;
      const StoreAddress address{dataset_id, model, kind};
      if (!store.contains(address)) missing.push_back(to_string(address));
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw NotFoundError("missing embeddings in store " + store.root().string() + ": " + list);
  }

  const std::size_t n = models.size();
  PairwiseMatrix out = empty_matrix(measure, {models.begin(), models.end()}, dataset_id, params);
  if (measure == Measure::cka) {
    // Two matrices in memory at a time.
    for (std::size_t i = 0; i < n; ++i) {
      const EmbeddingMatrix a = store.get(dataset_id, models[i], EmbeddingKind::chunks);
      for (std::size_t j = i + 1; j < n; ++j) {
        const EmbeddingMatrix b = store.get(dataset_id, models[j], EmbeddingKind::chunks);
        out.at(i, j) = out.at(j, i) = cka_score({&a, nullptr}, {&b, nullptr}, params.threads);
        log().info("event=cka_cell dataset={} model_a={} model_b={} value={:.9f}", dataset_id, models[i], models[j],
                   out.at(i, j));
      }
    }
    return out;
  }

  std::vector<EmbeddingMatrix> queries;
  queries.reserve(n);
  for (const auto& model : models) queries.push_back(store.get(dataset_id, model, EmbeddingKind::queries));
  std::vector<ModelEmbeddings> query_only;
  for (const auto& q : queries) query_only.push_back({nullptr, &q});
  const auto ids = shared_query_ids(query_only, params);

  std::vector<std::vector<RetrievalResult>> results(n);
  for (std::size_t i = 0; i < n; ++i) {
    const EmbeddingMatrix chunks = store.get(dataset_id, models[i], EmbeddingKind::chunks);
    results[i] = retrieve_all({&chunks, &queries[i]}, ids, params.k, params.threads);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      out.at(i, j) = out.at(j, i) = retrieval_score(measure, results[i], results[j]);
  out.num_queries = ids.size();
  return out;
}

PairwiseMatrix mean_matrices(std::span<const PairwiseMatrix> matrices) {
  if (matrices.empty()) throw DataError("mean_matrices: no matrices given");
  const PairwiseMatrix& first = matrices.front();
  PairwiseMatrix out = first;
  out.dataset_id = "mean";
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (const auto& m : matrices) {
    if (m.labels != first.labels)
      throw DataError("mean_matrices: label order differs (" + m.dataset_id + " vs " + first.dataset_id + ")");
    if (m.measure != first.measure) throw DataError("mean_matrices: measures differ");
    if (m.k != first.k) throw DataError("mean_matrices: k differs");
    if (m.values.size() != first.values.size()) throw DataError("mean_matrices: malformed matrix");
    if (m.num_queries != first.num_queries) out.num_queries.reset();
    for (std::size_t i = 0; i < m.values.size(); ++i) out.values[i] += m.values[i];
  }
  for (auto& v : out.values) v /= static_cast<double>(matrices.size());
  return out;
}

}  // namespace embsim
