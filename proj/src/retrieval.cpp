#include "embsim/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "embsim/error.hpp"
#include "embsim/log.hpp"
#include "embsim/simmath.hpp"

namespace embsim {
namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

}  // namespace

std::vector<ChunkKey> RetrievalResult::keys() const {
  std::vector<ChunkKey> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.key);
  return out;
}

RetrievalIndex::RetrievalIndex(const EmbeddingMatrix& matrix) : matrix_(&matrix) {
  if (matrix.rows() == 0) throw DataError("retrieval: embedding matrix " + matrix.model_id + " is empty");
  if (matrix.data.size() != matrix.rows() * matrix.dim) throw DataError("retrieval: malformed embedding matrix");
  const std::size_t n = matrix.rows();
  norms_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms_[i] = std::sqrt(dot(matrix.row(i), matrix.row(i)));
    if (norms_[i] > 0.0) searchable_.push_back(static_cast<std::uint32_t>(i));
  }
  if (searchable_.size() < n)
    log().warn("event=zero_norm_rows model={} dataset={} excluded={}", matrix.model_id, matrix.dataset_id,
               n - searchable_.size());

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return matrix.keys[a] < matrix.keys[b]; });
  tie_rank_.resize(n);
  for (std::size_t pos = 0; pos < n; ++pos) tie_rank_[order[pos]] = static_cast<std::uint32_t>(pos);
}

std::vector<RetrievalIndex::Candidate> RetrievalIndex::score_all(std::span<const float> query) const {
  if (query.size() != matrix_->dim)
    throw DataError("retrieval: query dim " + std::to_string(query.size()) + " differs from matrix dim " +
                    std::to_string(matrix_->dim));
  const double qnorm = std::sqrt(dot(query, query));
  if (!(qnorm > 0.0)) throw DataError("retrieval: zero-norm query vector");
  std::vector<Candidate> out;
  out.reserve(searchable_.size());
  for (std::uint32_t row : searchable_)
    out.push_back(Candidate{dot(query, matrix_->row(row)) / (qnorm * norms_[row]), tie_rank_[row], row});
  return out;
}

namespace {

struct Better {
  template <typename C>
  bool operator()(const C& a, const C& b) const {
    if (a.score != b.score) return a.score > b.score;
    return a.tie_rank < b.tie_rank;
  }
};

}  // namespace

RetrievalResult RetrievalIndex::make_result(std::vector<Candidate> ranked, std::size_t k, std::string query_id) const {
  RetrievalResult result{std::move(query_id), matrix_->model_id, {}, k};
  result.hits.reserve(ranked.size());
  for (const auto& c : ranked) result.hits.push_back(Hit{matrix_->keys[c.row], c.score});
  return result;
}

RetrievalResult RetrievalIndex::top_k(std::span<const float> query, std::size_t k, std::string query_id) const {
  if (k < 1) throw DataError("retrieval: k must be >= 1");
  std::vector<Candidate> all = score_all(query);
  const std::size_t keep = std::min(k, all.size());
  if (keep * 2 >= all.size()) {
    std::sort(all.begin(), all.end(), Better{});
    all.resize(keep);
    return make_result(std::move(all), k, std::move(query_id));
  }
  // Bounded heap: the front is the worst of the best `keep` seen so far.
  std::vector<Candidate> heap(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep));
  std::make_heap(heap.begin(), heap.end(), Better{});
  for (std::size_t i = keep; i < all.size(); ++i) {
    if (Better{}(all[i], heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), Better{});
      heap.back() = all[i];
      std::push_heap(heap.begin(), heap.end(), Better{});
    }
  }
  std::sort_heap(heap.begin(), heap.end(), Better{});
  return make_result(std::move(heap), k, std::move(query_id));
}

RetrievalResult RetrievalIndex::full_ranking(std::span<const float> query, std::string query_id) const {
  std::vector<Candidate> all = score_all(query);
  std::sort(all.begin(), all.end(), Better{});
  const std::size_t n = all.size();
  return make_result(std::move(all), n, std::move(query_id));
}

RetrievalResult top_k(std::span<const float> query, const EmbeddingMatrix& m, std::size_t k) {
  return RetrievalIndex(m).top_k(query, k);
}

RetrievalResult full_ranking(std::span<const float> query, const EmbeddingMatrix& m) {
  return RetrievalIndex(m).full_ranking(query);
}

KSweepCurve sweep_k(const RetrievalResult& a, const RetrievalResult& b) {
  if (a.query_id != b.query_id)
    throw DataError("sweep_k: rankings belong to different queries (" + a.query_id + " vs " + b.query_id + ")");
  const std::size_t n = a.hits.size();
  if (b.hits.size() != n)
    throw DataError("sweep_k: rankings cover different universes (" + std::to_string(n) + " vs " +
                    std::to_string(b.hits.size()) + " items)");

  std::unordered_map<ChunkKey, std::uint32_t> id;
  id.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!id.emplace(a.hits[i].key, static_cast<std::uint32_t>(i)).second)
      throw DataError("sweep_k: duplicate key in ranking " + a.model_id);
  // rank_a[x] = x + 1 by construction; rank_b is looked up per item.
  std::vector<std::size_t> rank_b(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = id.find(b.hits[i].key);
    if (it == id.end() || rank_b[it->second] != 0)
      throw DataError("sweep_k: rankings cover different universes");
    rank_b[it->second] = i + 1;
  }

  KSweepCurve curve{a.model_id, b.model_id, a.query_id, {}};
  curve.points.reserve(n);
  detail::FixedSum rank_sum;
  detail::FixedSum harmonic_sum;
  std::size_t common = 0;
  auto become_common = [&](std::size_t item) {
    rank_sum.add(rank_pair(item + 1, rank_b[item]));
    ++common;
    harmonic_sum.add(1.0 / static_cast<double>(common));
  };
  for (std::size_t k = 1; k <= n; ++k) {
    // An item joins the intersection at k = max(rank_a, rank_b).
    const std::size_t from_a = k - 1;
    if (rank_b[from_a] <= k) become_common(from_a);
    const std::size_t from_b = id.find(b.hits[k - 1].key)->second;
    if (from_b != from_a && from_b + 1 < k) become_common(from_b);
    const double jac = static_cast<double>(common) / static_cast<double>(2 * k - common);
    curve.points.push_back(SweepPoint{k, jac, detail::rank_ratio(rank_sum, harmonic_sum.value(), common)});
  }
  return curve;
}

}  // namespace embsim
