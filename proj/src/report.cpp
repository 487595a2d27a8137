#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "embsim/analysis.hpp"
#include "embsim/error.hpp"
#include "io_util.hpp"

namespace embsim {
namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::string optional_number(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : ""; }

void write_or_throw(const std::filesystem::path& path, const std::string& contents) {
  try {
    detail::write_file_atomic(path, contents);
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error("cannot write " + path.string() + ": " + e.what());
  }
}

}  // namespace

Rgb color_ramp(double value) {
  static constexpr Rgb kLow{0x44, 0x01, 0x54};
  static constexpr Rgb kMid{0x21, 0x91, 0x8c};
  static constexpr Rgb kHigh{0xfd, 0xe7, 0x25};
  const double v = std::isfinite(value) ? std::clamp(value, 0.0, 1.0) : 0.0;
  const Rgb& from = v <= 0.5 ? kLow : kMid;
  const Rgb& to = v <= 0.5 ? kMid : kHigh;
  const double t = v <= 0.5 ? v / 0.5 : (v - 0.5) / 0.5;
  auto mix = [t](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  return Rgb{mix(from.r, to.r), mix(from.g, to.g), mix(from.b, to.b)};
}

std::string to_hex(Rgb color) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", color.r, color.g, color.b);
  return buf;
}

std::string render_csv(const PairwiseMatrix& m, const Provenance& provenance) {
  std::ostringstream out;
  out << "# measure=" << to_string(m.measure) << ",dataset=" << m.dataset_id << ",k=" << optional_number(m.k)
      << ",num_queries=" << optional_number(m.num_queries) << '\n';
  if (!provenance.empty()) {
    out << "# ";
    for (std::size_t i = 0; i < provenance.size(); ++i)
      out << (i ? "," : "") << provenance[i].first << '=' << provenance[i].second;
    out << '\n';
  }
  out << "model_a,model_b,value\n";
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i; j < m.size(); ++j)
      out << csv_field(m.labels[i]) << ',' << csv_field(m.labels[j]) << ',' << fixed(m.at(i, j), 9) << '\n';
  return out.str();
}

std::string render_heatmap_svg(const PairwiseMatrix& m, const Dendrogram* dendrogram) {
  const std::size_t n = m.size();
  if (m.values.size() != n * n || n == 0) throw DataError("heatmap: malformed matrix");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (dendrogram) {
    if (dendrogram->labels != m.labels) throw DataError("heatmap: dendrogram labels differ from matrix labels");
    std::vector<std::size_t> sorted = dendrogram->leaf_order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != order) throw DataError("heatmap: dendrogram leaf order is not a permutation of the labels");
    order = dendrogram->leaf_order;
  }

  const bool with_text = n <= kHeatmapTextLimit;
  const int cell = with_text ? 40 : 20;
  std::size_t longest = 0;
  for (const auto& l : m.labels) longest = std::max(longest, l.size());
  const int margin = 20 + 7 * static_cast<int>(longest);
  const int grid = cell * static_cast<int>(n);
  const int left = margin;
  const int top = margin + 30;
  const int bar_x = left + grid + 30;
  const int width = bar_x + 70;
  const int height = top + grid + 20;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<style>text{font-family:sans-serif;font-size:11px}</style>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"18\" font-size=\"14\">" << xml_escape(std::string(to_string(m.measure)))
      << " similarity, " << xml_escape(m.dataset_id);
  if (m.k) svg << ", k=" << *m.k;
  if (m.num_queries) svg << ", " << *m.num_queries << " queries";
  svg << "</text>\n";

  svg << "<g id=\"cells\">\n";
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = m.at(order[r], order[c]);
      const int x = left + cell * static_cast<int>(c);
      const int y = top + cell * static_cast<int>(r);
      svg << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"" << to_hex(color_ramp(v)) << "\"><title>" << xml_escape(m.labels[order[r]]) << " / "
          << xml_escape(m.labels[order[c]]) << ": " << fixed(v, 9) << "</title></rect>\n";
      if (with_text) {
        svg << "<text class=\"cell-value\" x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
            << "\" text-anchor=\"middle\" fill=\"" << (v >= 0.5 ? "#000000" : "#ffffff") << "\">" << fixed(v, 2)
            << "</text>\n";
      }
    }
  }
  svg << "</g>\n<g id=\"labels\">\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int mid = cell * static_cast<int>(i) + cell / 2;
    const std::string label = xml_escape(m.labels[order[i]]);
    svg << "<text class=\"row-label\" x=\"" << left - 6 << "\" y=\"" << top + mid + 4
        << "\" text-anchor=\"end\">" << label << "</text>\n";
    svg << "<text class=\"col-label\" transform=\"translate(" << left + mid + 4 << ',' << top - 6
        << ") rotate(-90)\">" << label << "</text>\n";
  }
  svg << "</g>\n<g id=\"colorbar\">\n<defs><linearGradient id=\"ramp\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
      << "<stop offset=\"0\" stop-color=\"#440154\"/><stop offset=\"0.5\" stop-color=\"#21918c\"/>"
      << "<stop offset=\"1\" stop-color=\"#fde725\"/></linearGradient></defs>\n";
  svg << "<rect x=\"" << bar_x << "\" y=\"" << top << "\" width=\"16\" height=\"" << grid
      << "\" fill=\"url(#ramp)\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const int y = top + grid - grid * t / 4;
    svg << "<text x=\"" << bar_x + 22 << "\" y=\"" << y + 4 << "\">" << fixed(t / 4.0, 2) << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

std::string render_sweep_csv(std::span<const KSweepCurve> curves) {
  std::ostringstream out;
  const bool one_pair = std::all_of(curves.begin(), curves.end(), [&](const KSweepCurve& c) {
    return c.model_a == curves.front().model_a && c.model_b == curves.front().model_b;
  });
  if (!curves.empty() && one_pair)
    out << "# model_a=" << curves.front().model_a << ",model_b=" << curves.front().model_b << '\n';
  out << "query_id,k,jaccard,rank_sim\n";
  for (const auto& curve : curves)
    for (const auto& p : curve.points)
      out << csv_field(curve.query_id) << ',' << p.k << ',' << fixed(p.jaccard, 9) << ',' << fixed(p.rank_sim, 9)
          << '\n';
  return out.str();
}

std::string render_dendrogram_json(const Dendrogram& d) {
  nlohmann::json doc{{"labels", d.labels}, {"merges", nlohmann::json::array()}, {"leaf_order", nlohmann::json::array()}};
  for (const auto& step : d.merges)
    doc["merges"].push_back(
        {{"cluster_a", step.cluster_a}, {"cluster_b", step.cluster_b}, {"height", step.height}, {"size", step.size}});
  for (std::size_t leaf : d.leaf_order) doc["leaf_order"].push_back(d.labels.at(leaf));
  return doc.dump(2) + "\n";
}

void emit_csv(const PairwiseMatrix& m, const std::filesystem::path& path, const Provenance& provenance) {
  write_or_throw(path, render_csv(m, provenance));
}

void emit_heatmap_svg(const PairwiseMatrix& m, const Dendrogram* dendrogram, const std::filesystem::path& path) {
  write_or_throw(path, render_heatmap_svg(m, dendrogram));
}

void emit_sweep_csv(std::span<const KSweepCurve> curves, const std::filesystem::path& path) {
  write_or_throw(path, render_sweep_csv(curves));
}

void emit_dendrogram_json(const Dendrogram& d, const std::filesystem::path& path) {
  write_or_throw(path, render_dendrogram_json(d));
}

}  // namespace embsim
