#include <algorithm>
#include <exception>
#include <thread>

#include <Eigen/Dense>

#include "embsim/parallel.hpp"
#include "embsim/simmath.hpp"

namespace embsim {
namespace {

using RowBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kDegenerateRatio = 1e-24;

struct Moments {
  std::vector<double> mean;
  double raw_sum_sq = 0.0;
};

template <typename T>
Moments column_moments(MatrixView<T> m) {
  Moments out{std::vector<double>(m.cols, 0.0), 0.0};
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double v = row[c];
      out.mean[c] += v;
      out.raw_sum_sq += v * v;
    }
  }
  for (auto& v : out.mean) v /= static_cast<double>(m.rows);
  return out;
}

template <typename T>
void load_centered(MatrixView<T> m, const std::vector<double>& mean, std::size_t begin, std::size_t end,
                   RowBlock& block) {
  block.resize(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(m.cols));
  for (std::size_t r = begin; r < end; ++r) {
    const auto row = m.row(r);
    double* out = block.row(static_cast<Eigen::Index>(r - begin)).data();
    for (std::size_t c = 0; c < m.cols; ++c) out[c] = static_cast<double>(row[c]) - mean[c];
  }
}

struct Accumulator {
  Eigen::MatrixXd cross;  // Xc^T Yc
  Eigen::MatrixXd xx;     // lower triangle of Xc^T Xc
  Eigen::MatrixXd yy;     // lower triangle of Yc^T Yc

  Accumulator(Eigen::Index dx, Eigen::Index dy)
      : cross(Eigen::MatrixXd::Zero(dx, dy)), xx(Eigen::MatrixXd::Zero(dx, dx)), yy(Eigen::MatrixXd::Zero(dy, dy)) {}
};

double frobenius_sq(const Eigen::MatrixXd& m) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) s += m(r, c) * m(r, c);
  return s;
}

double symmetric_frobenius_sq(const Eigen::MatrixXd& lower) {
  double diag = 0.0;
  double off = 0.0;
  for (Eigen::Index c = 0; c < lower.cols(); ++c) {
    diag += lower(c, c) * lower(c, c);
    for (Eigen::Index r = c + 1; r < lower.rows(); ++r) off += lower(r, c) * lower(r, c);
  }
  return diag + 2.0 * off;
}

/// Orders the operands canonically so that cka(x, y) and cka(y, x) run the
/// same arithmetic.
template <typename T>
bool should_swap(MatrixView<T> x, MatrixView<T> y) {
  if (x.cols != y.cols) return y.cols > x.cols;
  return std::lexicographical_compare(y.values.begin(), y.values.end(), x.values.begin(), x.values.end());
}

template <typename T>
double linear_cka_impl(MatrixView<T> x, MatrixView<T> y, const CkaOptions& options) {
  if (x.rows != y.rows)
    throw DataError("linear_cka: row count mismatch (" + std::to_string(x.rows) + " vs " + std::to_string(y.rows) +
                    ")");
  if (x.rows < 2) throw DataError("linear_cka: need at least 2 rows");
  if (x.cols == 0 || y.cols == 0) throw DataError("linear_cka: matrices need at least one column");
  if (options.block_rows == 0) throw DataError("linear_cka: block_rows must be positive");
  if (should_swap(x, y)) std::swap(x, y);

  const Moments mx = column_moments(x);
  const Moments my = column_moments(y);
  const std::size_t n = x.rows;
  const std::size_t blocks = (n + options.block_rows - 1) / options.block_rows;
  const std::size_t workers = std::min<std::size_t>(resolve_threads(options.threads), blocks);
  const auto dx = static_cast<Eigen::Index>(x.cols);
  const auto dy = static_cast<Eigen::Index>(y.cols);

  // Worker t owns the contiguous block range [t*B/W, (t+1)*B/W); partials are
  // summed in worker order, so the result depends only on the worker count.
  std::vector<Accumulator> partial;
  partial.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) partial.emplace_back(dx, dy);
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t t) {
    try {
      RowBlock xb;
      RowBlock yb;
      Accumulator& acc = partial[t];
      for (std::size_t b = t * blocks / workers; b < (t + 1) * blocks / workers; ++b) {
        const std::size_t begin = b * options.block_rows;
        const std::size_t end = std::min(n, begin + options.block_rows);
        load_centered(x, mx.mean, begin, end, xb);
        load_centered(y, my.mean, begin, end, yb);
        acc.cross.noalias() += xb.transpose() * yb;
        acc.xx.selfadjointView<Eigen::Lower>().rankUpdate(xb.transpose());
        acc.yy.selfadjointView<Eigen::Lower>().rankUpdate(yb.transpose());
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work, t);
    work(0);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  Accumulator& total = partial.front();
  for (std::size_t t = 1; t < workers; ++t) {
    total.cross += partial[t].cross;
    total.xx += partial[t].xx;
    total.yy += partial[t].yy;
  }

  const double numerator = frobenius_sq(total.cross);
  const double sxx = symmetric_frobenius_sq(total.xx);
  const double syy = symmetric_frobenius_sq(total.yy);
  if (!(sxx > kDegenerateRatio * mx.raw_sum_sq * mx.raw_sum_sq) ||
      !(syy > kDegenerateRatio * my.raw_sum_sq * my.raw_sum_sq))
    throw DataError("linear_cka: zero denominator (embeddings are constant after centering)");
  return std::clamp(numerator / (std::sqrt(sxx) * std::sqrt(syy)), 0.0, 1.0);
}

}  // namespace

double linear_cka(MatrixView<float> x, MatrixView<float> y, const CkaOptions& options) {
  return linear_cka_impl(x, y, options);
}

double linear_cka(MatrixView<double> x, MatrixView<double> y, const CkaOptions& options) {
  return linear_cka_impl(x, y, options);
}

}  // namespace embsim
