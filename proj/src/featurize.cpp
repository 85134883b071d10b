#include "featurize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "error.hpp"

namespace hyperrna {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 unit(const Vec3& a) {
  const double n = norm(a);
  if (n == 0.0) return {0.0, 0.0, 0.0};
  return {a[0] / n, a[1] / n, a[2] / n};
}
double distance(const Vec3& a, const Vec3& b) { return norm(sub(a, b)); }

void append_rbf(std::vector<double>& out, double d, std::size_t bins) {
  const auto r = rbf_expand(d, bins, kRbfMin, kRbfMax, rbf_spacing(bins, kRbfMin, kRbfMax));
  out.insert(out.end(), r.begin(), r.end());
}

void append_zeros(std::vector<double>& out, std::size_t count) { out.insert(out.end(), count, 0.0); }

}  // namespace

std::size_t GeometricGraph::num_rna() const {
  return static_cast<std::size_t>(std::count(node_kind.begin(), node_kind.end(), ChainKind::kRna));
}

Adjacency knn_graph(std::span<const Vec3> positions, std::size_t k) {
  const std::size_t n = positions.size();
  if (n < 2) {
    throw Error(ErrorCode::kDegenerateGraph, "kNN graph needs at least 2 nodes, got " +
                                                 std::to_string(n));
  }
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  const std::size_t kk = std::min(k, n - 1);
  Adjacency adj(n);
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec3 d = sub(positions[i], positions[j]);
      order.emplace_back(dot(d, d), j);
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end());
    adj[i].reserve(kk);
    for (std::size_t m = 0; m < kk; ++m) adj[i].push_back(order[m].second);
  }
  return adj;
}

double rbf_spacing(std::size_t bins, double lo, double hi) {
  return bins > 1 ? (hi - lo) / static_cast<double>(bins - 1) : hi - lo;
}

std::vector<double> rbf_expand(double distance, std::size_t bins, double lo, double hi,
                               double width) {
  if (bins < 1) throw Error(ErrorCode::kInvalidArgument, "rbf_expand needs at least one center");
  if (!(width > 0.0)) throw Error(ErrorCode::kInvalidArgument, "rbf width must be positive");
  const double d = std::clamp(distance, lo, hi);
  const double step = bins > 1 ? (hi - lo) / static_cast<double>(bins - 1) : 0.0;
  std::vector<double> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double z = (d - (lo + step * static_cast<double>(b))) / width;
    out[b] = std::exp(-0.5 * z * z);
  }
  return out;
}

BackboneVectors backbone_unit_vectors(const CoarseBackbone& bb) {
  const std::size_t n = bb.length();
  BackboneVectors out;
  out.forward.assign(n, {0.0, 0.0, 0.0});
  out.reverse.assign(n, {0.0, 0.0, 0.0});
  out.to_p.resize(n);
  out.to_n.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n) out.forward[i] = unit(sub(bb.center(i + 1), bb.center(i)));
    if (i > 0) out.reverse[i] = unit(sub(bb.center(i - 1), bb.center(i)));
    out.to_p[i] = unit(sub(bb.atoms[i][0], bb.center(i)));
    out.to_n[i] = unit(sub(bb.atoms[i][2], bb.center(i)));
  }
  return out;
}

double dihedral(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4) {
  const Vec3 b1 = sub(p2, p1);
  const Vec3 b2 = sub(p3, p2);
  const Vec3 b3 = sub(p4, p3);
  constexpr double kMinSeparation = 1e-9;
  if (norm(b1) < kMinSeparation || norm(b2) < kMinSeparation || norm(b3) < kMinSeparation) {
    throw Error(ErrorCode::kDegenerateTorsion, "coincident consecutive points");
  }
  const Vec3 n1 = cross(b1, b2);
  const Vec3 n2 = cross(b2, b3);
  if (norm(n1) < 1e-12 || norm(n2) < 1e-12) {
    throw Error(ErrorCode::kDegenerateTorsion, "collinear points, torsion undefined");
  }
  const double y = norm(b2) * dot(b1, n2);
  const double x = dot(n1, n2);
  const double angle = std::atan2(y, x);
  return angle <= -std::numbers::pi ? std::numbers::pi : angle;
}

GeometricGraph build_features(std::span<const CoarseBackbone> chains, const FeatureConfig& config) {
  std::vector<const CoarseBackbone*> ordered;
  for (const auto& c : chains) {
    if (c.kind == ChainKind::kRna) ordered.push_back(&c);
  }
  if (ordered.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "featurization needs at least one RNA chain");
  }
  for (const auto& c : chains) {
    if (c.kind == ChainKind::kProtein) ordered.push_back(&c);
  }

  GeometricGraph g;
  g.rbf_bins = config.rbf_bins;
  const std::size_t bins = config.rbf_bins;
  for (const CoarseBackbone* bb : ordered) {
    const std::size_t len = bb->length();
    const BackboneVectors uv = backbone_unit_vectors(*bb);
    for (std::size_t i = 0; i < len; ++i) {
      const Vec3& c = bb->center(i);
      // forward, backward, C4'->N, C4'->P
      if (i + 1 < len) append_rbf(g.scalar, distance(c, bb->center(i + 1)), bins);
      else append_zeros(g.scalar, bins);
      if (i > 0) append_rbf(g.scalar, distance(c, bb->center(i - 1)), bins);
      else append_zeros(g.scalar, bins);
      append_rbf(g.scalar, distance(c, bb->atoms[i][2]), bins);
      append_rbf(g.scalar, distance(c, bb->atoms[i][0]), bins);

      const std::size_t kind_bit = bb->kind == ChainKind::kProtein ? 2 : 0;
      g.token.push_back(kind_bit + (i % 2));

      const std::array<Vec3, 4> base = {uv.forward[i], uv.reverse[i], uv.to_p[i], uv.to_n[i]};
      double sin_t = 0.0, cos_t = 0.0, cos_bend = 0.0;
      if (i > 0 && i + 1 < len) {
        try {
          const double t = dihedral(bb->center(i - 1), bb->atoms[i][0], c, bb->atoms[i + 1][0]);
          sin_t = std::sin(t);
          cos_t = std::cos(t);
        } catch (const Error&) {
          // degenerate local geometry: torsion channels stay zero
        }
        cos_bend = dot(uv.reverse[i], uv.forward[i]);
      }
      for (const double factor : {1.0, sin_t, cos_t, cos_bend}) {
        for (const Vec3& v : base) {
          for (double x : v) g.vector.push_back(factor * x);
        }
      }

      g.node_kind.push_back(bb->kind);
      g.node_chain.push_back(bb->chain_id);
      g.residue_ids.push_back(bb->residue_ids[i]);
      g.sequence.push_back(bb->sequence[i]);
      g.beads.push_back(bb->atoms[i]);
    }
  }
  g.n = g.beads.size();

  std::vector<Vec3> centers(g.n);
  for (std::size_t i = 0; i < g.n; ++i) centers[i] = g.beads[i][1];
  g.adjacency = knn_graph(centers, config.knn);
  g.k = g.adjacency[0].size();
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j : g.adjacency[i]) {
      const Vec3 d = sub(centers[j], centers[i]);
      append_rbf(g.edge_scalar, norm(d), kEdgeRbfBins);
      for (double x : unit(d)) g.edge_vector.push_back(x);
    }
  }
  return g;
}

// ---- cache format ---------------------------------------------------------------------

namespace {

void append_row(std::string& out, std::span<const double> values) {
  char buf[40];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, i == 0 ? "%.6f" : " %.6f", values[i]);
    out += buf;
  }
  out += '\n';
}

}  // namespace

std::string write_graph(const GeometricGraph& g) {
  std::string out = "#hyperrna-graph v1\n";
  out += "#id " + (g.id.empty() ? std::string("_") : g.id) + "\n";
  out += "#nodes " + std::to_string(g.n) + " " + std::to_string(g.k) + " " +
         std::to_string(g.rbf_bins) + "\n";
  for (std::size_t i = 0; i < g.n; ++i) {
    out += std::to_string(i) + " " + chain_kind_name(g.node_kind[i]) + " " +
           (g.node_chain[i].empty() ? std::string("_") : g.node_chain[i]) + " " +
           std::to_string(g.residue_ids[i]) + " " + g.sequence[i] + " " +
           std::to_string(g.token[i]) + "\n";
  }
  out += "#adjacency\n";
  for (std::size_t i = 0; i < g.n; ++i) {
    out += std::to_string(i);
    for (std::size_t j : g.adjacency[i]) out += " " + std::to_string(j);
    out += '\n';
  }
  const std::size_t sw = g.scalar_width();
  out += "#scalar " + std::to_string(sw) + "\n";
  for (std::size_t i = 0; i < g.n; ++i) append_row(out, std::span(g.scalar).subspan(i * sw, sw));
  out += "#vector " + std::to_string(kVectorChannels) + "\n";
  for (std::size_t i = 0; i < g.n; ++i) {
    append_row(out, std::span(g.vector).subspan(i * kVectorChannels * 3, kVectorChannels * 3));
  }
  out += "#edges " + std::to_string(g.n * g.k) + " " + std::to_string(kEdgeRbfBins) + "\n";
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t m = 0; m < g.k; ++m) {
      const std::size_t e = i * g.k + m;
      out += std::to_string(i) + " " + std::to_string(g.adjacency[i][m]) + " ";
      std::vector<double> row(g.edge_scalar.begin() + static_cast<std::ptrdiff_t>(e * kEdgeRbfBins),
                              g.edge_scalar.begin() + static_cast<std::ptrdiff_t>((e + 1) * kEdgeRbfBins));
      row.insert(row.end(), g.edge_vector.begin() + static_cast<std::ptrdiff_t>(e * 3),
                 g.edge_vector.begin() + static_cast<std::ptrdiff_t>(e * 3 + 3));
      append_row(out, row);
    }
  }
  out += "#coords\n";
  for (std::size_t i = 0; i < g.n; ++i) {
    std::vector<double> row;
    for (const Vec3& p : g.beads[i]) row.insert(row.end(), p.begin(), p.end());
    append_row(out, row);
  }
  return out;
}

GeometricGraph read_graph(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return Error(ErrorCode::kParseError, "graph line " + std::to_string(line_no) + ": " + what);
  };
  auto next = [&](std::string& l) {
    if (!std::getline(in, l)) throw fail("unexpected end of file");
    ++line_no;
  };
  auto expect_header = [&](std::string_view tag) {
    next(line);
    if (!line.starts_with(tag)) throw fail("expected " + std::string(tag));
    return std::istringstream(line.substr(tag.size()));
  };
  auto read_doubles = [&](std::vector<double>& dst, std::size_t count) {
    next(line);
    std::istringstream ls(line);
    for (std::size_t c = 0; c < count; ++c) {
      double x;
      if (!(ls >> x)) throw fail("expected " + std::to_string(count) + " values");
      dst.push_back(x);
    }
  };

  GeometricGraph g;
  expect_header("#hyperrna-graph v1");
  {
    auto hs = expect_header("#id");
    hs >> g.id;
    if (g.id == "_") g.id.clear();
  }
  {
    auto hs = expect_header("#nodes");
    if (!(hs >> g.n >> g.k >> g.rbf_bins)) throw fail("bad #nodes header");
  }
  for (std::size_t i = 0; i < g.n; ++i) {
    next(line);
    std::istringstream ls(line);
    std::size_t idx, token;
    std::string kind, chain;
    int rid;
    char letter;
    if (!(ls >> idx >> kind >> chain >> rid >> letter >> token) || idx != i ||
        token >= kTokenCategories) {
      throw fail("bad node row");
    }
    g.node_kind.push_back(parse_chain_kind(kind));
    g.node_chain.push_back(chain == "_" ? std::string() : chain);
    g.residue_ids.push_back(rid);
    g.sequence.push_back(letter);
    g.token.push_back(token);
  }
  expect_header("#adjacency");
  g.adjacency.resize(g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    next(line);
    std::istringstream ls(line);
    std::size_t idx;
    if (!(ls >> idx) || idx != i) throw fail("bad adjacency row");
    std::size_t j;
    while (ls >> j) {
      if (j >= g.n || j == i) throw fail("bad neighbour index");
      g.adjacency[i].push_back(j);
    }
    if (g.adjacency[i].size() != g.k) throw fail("wrong neighbour count");
  }
  expect_header("#scalar");
  for (std::size_t i = 0; i < g.n; ++i) read_doubles(g.scalar, g.scalar_width());
  expect_header("#vector");
  for (std::size_t i = 0; i < g.n; ++i) read_doubles(g.vector, kVectorChannels * 3);
  expect_header("#edges");
  for (std::size_t e = 0; e < g.n * g.k; ++e) {
    next(line);
    std::istringstream ls(line);
    std::size_t i, j;
    if (!(ls >> i >> j)) throw fail("bad edge row");
    for (std::size_t c = 0; c < kEdgeRbfBins + 3; ++c) {
      double x;
      if (!(ls >> x)) throw fail("bad edge row");
      (c < kEdgeRbfBins ? g.edge_scalar : g.edge_vector).push_back(x);
    }
  }
  expect_header("#coords");
  for (std::size_t i = 0; i < g.n; ++i) {
    std::vector<double> row;
    read_doubles(row, 9);
    g.beads.push_back({Vec3{row[0], row[1], row[2]}, Vec3{row[3], row[4], row[5]},
                       Vec3{row[6], row[7], row[8]}});
  }
  return g;
}

}  // namespace hyperrna
