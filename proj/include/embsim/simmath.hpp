#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "embsim/error.hpp"

namespace embsim {

/// Non-owning row-major view.
template <typename T>
struct MatrixView {
  std::span<const T> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(std::span<const T> v, std::size_t r, std::size_t c) : values(v), rows(r), cols(c) {
    if (v.size() != r * c) throw DataError("matrix view: " + std::to_string(v.size()) + " values for " +
                                           std::to_string(r) + "x" + std::to_string(c));
  }

  T operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const T> row(std::size_t r) const { return values.subspan(r * cols, cols); }
};

/// Owned row-major double matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  MatrixView<double> view() const { return {values, rows, cols}; }
};

/// Subtracts each column's mean. Requires at least two rows.
Matrix center_columns(MatrixView<double> x);

struct CkaOptions {
  unsigned threads = 1;
  std::size_t block_rows = 4096;
};

/// Linear CKA evaluated in feature space: after column centering,
/// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F). Never forms an n x n matrix.
/// Bit-reproducible for a fixed thread count, and exactly symmetric.
double linear_cka(MatrixView<float> x, MatrixView<float> y, const CkaOptions& options = {});
double linear_cka(MatrixView<double> x, MatrixView<double> y, const CkaOptions& options = {});

/// Reference CKA through explicit Gram matrices K = XX^T, L = YY^T and
/// HSIC(K, L) = tr(KHLH) / (n-1)^2. Limited to n <= 4096.
double cka_gram_oracle(MatrixView<double> x, MatrixView<double> y);
double cka_gram_oracle(MatrixView<float> x, MatrixView<float> y);

inline constexpr std::size_t kGramOracleMaxRows = 4096;

/// |A ∩ B| / |A ∪ B|; two empty sets score 1.
template <typename Range>
double jaccard(const Range& a, const Range& b) {
  using Key = std::decay_t<decltype(*std::begin(a))>;
  std::unordered_set<Key> left(std::begin(a), std::end(a));
  std::unordered_set<Key> right(std::begin(b), std::end(b));
  if (left.empty() && right.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& k : left) common += right.count(k);
  return static_cast<double>(common) / static_cast<double>(left.size() + right.size() - common);
}

/// 2 / ((1 + |r - r2|)(r + r2)) for 1-based ranks.
double rank_pair(std::uint64_t r, std::uint64_t r2);

/// H(m) = sum_{k=1..m} 1/k, summed in increasing k.
double harmonic(std::size_t m);

namespace detail {

/// Order-independent sum of values in [0, 1]: each term is truncated to a
/// multiple of 2^-64 and accumulated as an integer, so permuting the terms
/// cannot change the result.
class FixedSum {
 public:
  void add(double term) { total_ += static_cast<unsigned __int128>(std::ldexp(term, 64)); }
  double value() const { return std::ldexp(static_cast<double>(total_), -64); }
  unsigned __int128 raw() const { return total_; }
  bool operator==(const FixedSum&) const = default;

 private:
  unsigned __int128 total_ = 0;
};

/// H(m) accumulated with FixedSum, the normalizer used by rank_sim.
double harmonic_normalizer(std::size_t m);

/// sum / H(common), clamped to [0, 1]; 0 when common == 0.
double rank_ratio(const FixedSum& sum, std::size_t common);

/// Same as above with a precomputed harmonic_normalizer(common).
double rank_ratio(const FixedSum& sum, double normalizer, std::size_t common);

}  // namespace detail

/// An ordered retrieval list with 1-based rank lookup.
template <typename Key>
class RankedSet {
 public:
  RankedSet() = default;
  explicit RankedSet(std::vector<Key> items) : items_(std::move(items)) {
    ranks_.reserve(items_.size());
    for (std::size_t i = 0; i < items_.size(); ++i)
      if (!ranks_.emplace(items_[i], i + 1).second) throw DataError("ranked set contains a duplicate item");
  }

  const std::vector<Key>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::optional<std::size_t> rank(const Key& key) const {
    auto it = ranks_.find(key);
    if (it == ranks_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Key> items_;
  std::unordered_map<Key, std::size_t> ranks_;
};

/// (1/H(m)) * sum over common items of rank_pair; 0 when nothing is shared.
template <typename Key>
double rank_sim(const RankedSet<Key>& a, const RankedSet<Key>& b) {
  detail::FixedSum sum;
  std::size_t common = 0;
  for (std::size_t i = 0; i < a.items().size(); ++i) {
    if (auto r2 = b.rank(a.items()[i])) {
      sum.add(rank_pair(i + 1, *r2));
      ++common;
    }
  }
  return detail::rank_ratio(sum, common);
}

}  // namespace embsim
