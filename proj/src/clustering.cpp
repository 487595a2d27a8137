#include <algorithm>
#include <cmath>
#include <limits>

#include "embsim/analysis.hpp"
#include "embsim/error.hpp"

namespace embsim {
namespace {

struct Cluster {
  std::size_t id;
  std::size_t min_leaf;
  std::vector<std::size_t> leaves;  // left-to-right order
};

}  // namespace

Linkage parse_linkage(std::string_view name) {
  if (name == "average") return Linkage::average;
  if (name == "single") return Linkage::single;
  if (name == "complete") return Linkage::complete;
  throw DataError("unknown linkage '" + std::string(name) + "' (expected average, single or complete)");
}

std::string_view to_string(Linkage linkage) {
  switch (linkage) {
    case Linkage::average: return "average";
    case Linkage::single: return "single";
    case Linkage::complete: return "complete";
  }
  return "unknown";
}

Dendrogram cluster_distances(std::span<const double> distances, std::vector<std::string> labels, Linkage linkage) {
  const std::size_t m = labels.size();
  if (m < 2) throw DataError("hierarchical_cluster: need at least 2 labels");
  if (distances.size() != m * m) throw DataError("hierarchical_cluster: distance matrix is not square");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (!std::isfinite(distances[i * m + j]) || std::abs(distances[i * m + j] - distances[j * m + i]) > 1e-9)
        throw DataError("hierarchical_cluster: input is not symmetric at (" + labels[i] + ", " + labels[j] + ")");

  std::vector<Cluster> active;
  for (std::size_t i = 0; i < m; ++i) active.push_back(Cluster{i, i, {i}});
  // dist[a][b] between active slots, updated with the Lance-Williams rule.
  std::vector<std::vector<double>> dist(m, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) dist[i][j] = distances[i * m + j];

  Dendrogram out;
  out.labels = std::move(labels);
  for (std::size_t step = 0; active.size() > 1; ++step) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a)
      for (std::size_t b = a + 1; b < active.size(); ++b) best = std::min(best, dist[a][b]);

    std::size_t pa = 0, pb = 0;
    std::pair<std::size_t, std::size_t> best_key{m, m};
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        if (dist[a][b] > best + kLinkageTieTolerance) continue;
        const std::pair<std::size_t, std::size_t> key = std::minmax(active[a].min_leaf, active[b].min_leaf);
        if (key < best_key) {
          best_key = key;
          pa = a;
          pb = b;
        }
      }
    }
    if (active[pb].min_leaf < active[pa].min_leaf) std::swap(pa, pb);

    const double height = dist[pa][pb];
    const std::size_t size_a = active[pa].leaves.size();
    const std::size_t size_b = active[pb].leaves.size();
    out.merges.push_back(MergeStep{active[pa].id, active[pb].id, height, size_a + size_b});

    for (std::size_t c = 0; c < active.size(); ++c) {
      if (c == pa || c == pb) continue;
      double d = 0.0;
      switch (linkage) {
        case Linkage::average:
          d = (static_cast<double>(size_a) * dist[pa][c] + static_cast<double>(size_b) * dist[pb][c]) /
              static_cast<double>(size_a + size_b);
          break;
        case Linkage::single: d = std::min(dist[pa][c], dist[pb][c]); break;
        case Linkage::complete: d = std::max(dist[pa][c], dist[pb][c]); break;
      }
      dist[pa][c] = dist[c][pa] = d;
    }
    Cluster merged{m + step, std::min(active[pa].min_leaf, active[pb].min_leaf), std::move(active[pa].leaves)};
    merged.leaves.insert(merged.leaves.end(), active[pb].leaves.begin(), active[pb].leaves.end());
    active[pa] = std::move(merged);

    active.erase(active.begin() + static_cast<std::ptrdiff_t>(pb));
    dist.erase(dist.begin() + static_cast<std::ptrdiff_t>(pb));
    for (auto& row : dist) row.erase(row.begin() + static_cast<std::ptrdiff_t>(pb));
  }
  out.leaf_order = active.front().leaves;
  return out;
}

Dendrogram hierarchical_cluster(const PairwiseMatrix& m, Linkage linkage) {
  const std::size_t n = m.labels.size();
  if (m.values.size() != n * n) throw DataError("hierarchical_cluster: malformed matrix");
  std::vector<double> distances(n * n);
  for (std::size_t i = 0; i < n * n; ++i) distances[i] = 1.0 - m.values[i];
  return cluster_distances(distances, m.labels, linkage);
}

}  // namespace embsim
