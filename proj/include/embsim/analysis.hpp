#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embsim/embedding.hpp"
#include "embsim/retrieval.hpp"
#include "embsim/store.hpp"

namespace embsim {

enum class Measure { cka, jaccard, rank };

std::string_view to_string(Measure measure);
Measure parse_measure(std::string_view name);

struct ScoreContext {
  std::string model_a;
  std::string model_b;
  std::string dataset_id;
  std::optional<std::size_t> k;
};

struct SimilarityScore {
  double value = 0.0;
  Measure measure = Measure::cka;
  ScoreContext context;
};

/// Symmetric model x model scores for one measure and dataset (or "mean").
struct PairwiseMatrix {
  Measure measure = Measure::cka;
  std::vector<std::string> labels;
  std::vector<double> values;  // row-major, labels.size()^2
  std::string dataset_id;
  std::optional<std::size_t> k;
  std::optional<std::size_t> num_queries;

  std::size_t size() const { return labels.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * labels.size() + j]; }

  /// Throws DataError unless square, symmetric within 1e-9 and within [0, 1].
  void validate() const;
};

enum class QuerySelection { first, random };

QuerySelection parse_query_selection(std::string_view name);
std::string_view to_string(QuerySelection selection);

struct CompareParams {
  std::size_t k = 10;
  std::size_t num_queries = 25;
  QuerySelection selection = QuerySelection::first;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// The first `count` ids in order, or a seeded sample reported in file order.
std::vector<std::string> select_queries(std::span<const std::string> ordered_ids, std::size_t count,
                                        QuerySelection selection, std::uint64_t seed);

/// Embeddings of one model on one dataset. `queries` may be null for CKA.
struct ModelEmbeddings {
  const EmbeddingMatrix* chunks = nullptr;
  const EmbeddingMatrix* queries = nullptr;
};

/// The selected query ids shared by every model, in the first model's order.
std::vector<std::string> shared_query_ids(std::span<const ModelEmbeddings> models, const CompareParams& params);

/// Per-query top-k hit lists of one model for the given query ids.
std::vector<RetrievalResult> retrieve_all(const ModelEmbeddings& model, std::span<const std::string> query_ids,
                                          std::size_t k, unsigned threads);

/// One cell: linear CKA over aligned chunks, or the mean per-query top-k score.
SimilarityScore compare_pair(Measure measure, const ModelEmbeddings& a, const ModelEmbeddings& b,
                             const CompareParams& params);

/// In-memory matrix with unit diagonal; cells are independent of evaluation order.
PairwiseMatrix pairwise_matrix(Measure measure, std::span<const ModelEmbeddings> models, const CompareParams& params);

/// Loads embeddings from the store. Fails listing every missing address.
PairwiseMatrix pairwise_matrix(Measure measure, std::span<const std::string> models, const std::string& dataset_id,
                               const Store& store, const CompareParams& params);

/// Element-wise mean; labels, measure and k must agree.
PairwiseMatrix mean_matrices(std::span<const PairwiseMatrix> matrices);

enum class Linkage { average, single, complete };

Linkage parse_linkage(std::string_view name);
std::string_view to_string(Linkage linkage);

/// scipy-style merge: leaves are 0..m-1, the i-th merge creates cluster m+i.
struct MergeStep {
  std::size_t cluster_a = 0;
  std::size_t cluster_b = 0;
  double height = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::vector<std::string> labels;
  std::vector<MergeStep> merges;
  std::vector<std::size_t> leaf_order;  // label indices, left to right
};

/// Agglomerative clustering on d(i, j) = 1 - similarity. Among pairs whose
/// distance is within 1e-12 of the minimum, the pair with the smallest
/// (min leaf index, other min leaf index) is merged first.
Dendrogram hierarchical_cluster(const PairwiseMatrix& m, Linkage linkage = Linkage::average);

/// Same over an explicit row-major distance matrix.
Dendrogram cluster_distances(std::span<const double> distances, std::vector<std::string> labels, Linkage linkage);

inline constexpr double kLinkageTieTolerance = 1e-12;

struct Rgb {
  int r = 0;
  int g = 0;
  int b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Three-stop ramp: #440154 at 0, #21918c at 0.5, #fde725 at 1.
Rgb color_ramp(double value);
std::string to_hex(Rgb color);

/// Extra `# key=value` provenance lines written under the matrix header.
using Provenance = std::vector<std::pair<std::string, std::string>>;

inline constexpr std::size_t kHeatmapTextLimit = 25;

std::string render_csv(const PairwiseMatrix& m, const Provenance& provenance = {});
std::string render_heatmap_svg(const PairwiseMatrix& m, const Dendrogram* dendrogram = nullptr);
std::string render_sweep_csv(std::span<const KSweepCurve> curves);
std::string render_dendrogram_json(const Dendrogram& d);

void emit_csv(const PairwiseMatrix& m, const std::filesystem::path& path, const Provenance& provenance = {});
void emit_heatmap_svg(const PairwiseMatrix& m, const Dendrogram* dendrogram, const std::filesystem::path& path);
void emit_sweep_csv(std::span<const KSweepCurve> curves, const std::filesystem::path& path);
void emit_dendrogram_json(const Dendrogram& d, const std::filesystem::path& path);

}  // namespace embsim
