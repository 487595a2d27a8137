#include "embsim/simmath.hpp"

#include <algorithm>

namespace embsim {
namespace {

constexpr double kDegenerateRatio = 1e-24;

template <typename T>
double gram_oracle(MatrixView<T> x, MatrixView<T> y) {
  const std::size_t n = x.rows;
  if (n != y.rows)
    throw DataError("cka: row count mismatch (" + std::to_string(x.rows) + " vs " + std::to_string(y.rows) + ")");
  if (n < 2) throw DataError("cka: need at least 2 rows");
  if (n > kGramOracleMaxRows) throw DataError("cka_gram_oracle: n exceeds " + std::to_string(kGramOracleMaxRows));

  auto gram = [n](MatrixView<T> m) {
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) s += static_cast<double>(m(i, c)) * static_cast<double>(m(j, c));
        g(i, j) = s;
      }
    return g;
  };
  Matrix h(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
  auto multiply = [n](const Matrix& a, const Matrix& b) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        const double aik = a(i, k);
        for (std::size_t j = 0; j < n; ++j) out(i, j) += aik * b(k, j);
      }
    return out;
  };
  auto trace_of_product = [n](const Matrix& a, const Matrix& b) {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) t += a(i, j) * b(j, i);
    return t;
  };
  auto trace = [n](const Matrix& a) {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) t += a(i, i);
    return t;
  };

  const Matrix k = gram(x);
  const Matrix l = gram(y);
  const Matrix kh = multiply(k, h);
  const Matrix lh = multiply(l, h);
  const double scale = static_cast<double>(n - 1) * static_cast<double>(n - 1);
  const double hsic_kl = trace_of_product(kh, lh) / scale;
  const double hsic_kk = trace_of_product(kh, kh) / scale;
  const double hsic_ll = trace_of_product(lh, lh) / scale;
  const double tk = trace(k) / static_cast<double>(n - 1);
  const double tl = trace(l) / static_cast<double>(n - 1);
  if (!(hsic_kk > kDegenerateRatio * tk * tk) || !(hsic_ll > kDegenerateRatio * tl * tl))
    throw DataError("cka: zero denominator (embeddings are constant after centering)");
  return std::clamp(hsic_kl / std::sqrt(hsic_kk * hsic_ll), 0.0, 1.0);
}

}  // namespace

Matrix center_columns(MatrixView<double> x) {
  if (x.rows < 2) throw DataError("center_columns: need at least 2 rows");
  std::vector<double> mean(x.cols, 0.0);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) mean[c] += x(r, c);
  for (auto& m : mean) m /= static_cast<double>(x.rows);
  Matrix out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = x(r, c) - mean[c];
  return out;
}

double cka_gram_oracle(MatrixView<double> x, MatrixView<double> y) { return gram_oracle(x, y); }
double cka_gram_oracle(MatrixView<float> x, MatrixView<float> y) { return gram_oracle(x, y); }

double rank_pair(std::uint64_t r, std::uint64_t r2) {
  if (r < 1 || r2 < 1) throw DataError("rank_pair: ranks are 1-based");
  const std::uint64_t diff = r > r2 ? r - r2 : r2 - r;
  return 2.0 / (static_cast<double>(1 + diff) * static_cast<double>(r + r2));
}

double harmonic(std::size_t m) {
  double h = 0.0;
  for (std::size_t k = 1; k <= m; ++k) h += 1.0 / static_cast<double>(k);
  return h;
}

namespace detail {

double harmonic_normalizer(std::size_t m) {
  FixedSum h;
  for (std::size_t k = 1; k <= m; ++k) h.add(1.0 / static_cast<double>(k));
  return h.value();
}

double rank_ratio(const FixedSum& sum, std::size_t common) {
  if (common == 0) return 0.0;
  return rank_ratio(sum, harmonic_normalizer(common), common);
}

double rank_ratio(const FixedSum& sum, double normalizer, std::size_t common) {
  if (common == 0) return 0.0;
  return std::clamp(sum.value() / normalizer, 0.0, 1.0);
}

}  // namespace detail
}  // namespace embsim
