#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "embsim/corpus.hpp"
#include "embsim/embedding.hpp"

namespace embsim {

struct Hit {
  ChunkKey key;
  double score = 0.0;  // cosine similarity

  bool operator==(const Hit&) const = default;
};

/// Ranked hits for one query; hits[i] has rank i + 1.
struct RetrievalResult {
  std::string query_id;
  std::string model_id;
  std::vector<Hit> hits;
  std::size_t k = 0;

  std::vector<ChunkKey> keys() const;
};

/// Exact cosine search over one embedding matrix. Keeps a reference to the
/// matrix, which must outlive the index. Ties are broken by ascending ChunkKey.
class RetrievalIndex {
 public:
  explicit RetrievalIndex(const EmbeddingMatrix& matrix);

  RetrievalResult top_k(std::span<const float> query, std::size_t k, std::string query_id = {}) const;
  RetrievalResult full_ranking(std::span<const float> query, std::string query_id = {}) const;

  const EmbeddingMatrix& matrix() const { return *matrix_; }
  /// Rows with nonzero norm, the only ones that can be retrieved.
  std::size_t searchable_rows() const { return searchable_.size(); }

 private:
  struct Candidate {
    double score;
    std::uint32_t tie_rank;
    std::uint32_t row;
  };

  std::vector<Candidate> score_all(std::span<const float> query) const;
  RetrievalResult make_result(std::vector<Candidate> ranked, std::size_t k, std::string query_id) const;

  const EmbeddingMatrix* matrix_;
  std::vector<double> norms_;
  std::vector<std::uint32_t> tie_rank_;  // position of each row in ChunkKey order
  std::vector<std::uint32_t> searchable_;
};

RetrievalResult top_k(std::span<const float> query, const EmbeddingMatrix& m, std::size_t k);
RetrievalResult full_ranking(std::span<const float> query, const EmbeddingMatrix& m);

struct SweepPoint {
  std::size_t k = 0;
  double jaccard = 0.0;
  double rank_sim = 0.0;

  bool operator==(const SweepPoint&) const = default;
};

struct KSweepCurve {
  std::string model_a;
  std::string model_b;
  std::string query_id;
  std::vector<SweepPoint> points;  // k = 1..n
};

/// Jaccard and rank similarity of every k-prefix of two full rankings over the
/// same key universe, maintained incrementally in O(n).
KSweepCurve sweep_k(const RetrievalResult& a, const RetrievalResult& b);

}  // namespace embsim
