// Stage 2: two-pass connected-component labelling of a category map into
// superpixels, their geometric descriptors, and the adjacency / inclusion
// graph the spatial detectors reason over.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cloudmask/quantize.hpp"
#include "cloudmask/raster.hpp"

namespace cloudmask {

using SegmentId = std::uint32_t;

enum class Connectivity : int { Four = 4, Eight = 8 };

inline Connectivity parse_connectivity(int c) {
  if (c == 4) return Connectivity::Four;
  if (c == 8) return Connectivity::Eight;
  throw config_error("connectivity must be 4 or 8");
}

/// Segment ids are dense 1..count, numbered by first pixel in raster order.
struct SegmentMap {
  Plane<SegmentId> ids;
  SegmentId count = 0;

  std::size_t width() const { return ids.width(); }
  std::size_t height() const { return ids.height(); }
  friend bool operator==(const SegmentMap&, const SegmentMap&) = default;
};

/// Array union-find with path halving; union keeps the smaller root.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n = 0) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), SegmentId{0});
  }
  SegmentId make_set() {
    const auto id = static_cast<SegmentId>(parent_.size());
    parent_.push_back(id);
    return id;
  }
  SegmentId find(SegmentId x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void join(SegmentId a, SegmentId b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) parent_[b] = a;
    else parent_[a] = b;
  }
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<SegmentId> parent_;
};

namespace detail {

/// Backward (already-scanned) neighbour offsets: W, NW, N, NE.
struct BackNeighbour {
  int dr, dc;
};
inline std::vector<BackNeighbour> back_neighbours(Connectivity c) {
  if (c == Connectivity::Four) return {{0, -1}, {-1, 0}};
  return {{0, -1}, {-1, -1}, {-1, 0}, {-1, 1}};
}

/// Replaces provisional labels by their root, renumbered 1..n in raster
/// order of first appearance.
inline SegmentId canonical_relabel(Plane<SegmentId>& labels, DisjointSets& ds) {
  std::vector<SegmentId> remap(ds.size(), 0);
  SegmentId next = 0;
  for (SegmentId& l : labels.data()) {
    const SegmentId root = ds.find(l);
    if (remap[root] == 0) remap[root] = ++next;
    l = remap[root];
  }
  return next;
}

/// First pass over a window; provisional labels are allocated from `ds`.
template <typename T>
void label_window(const Plane<T>& values, const Tile& t, Connectivity conn,
                  Plane<SegmentId>& labels, DisjointSets& ds) {
  const auto nbrs = back_neighbours(conn);
  for (std::size_t r = t.row; r < t.row_end(); ++r)
    for (std::size_t c = t.col; c < t.col_end(); ++c) {
      const T v = values(r, c);
      SegmentId best = 0;
      bool found = false;
      for (const auto& n : nbrs) {
        const auto rr = static_cast<std::ptrdiff_t>(r) + n.dr;
        const auto cc = static_cast<std::ptrdiff_t>(c) + n.dc;
        if (rr < static_cast<std::ptrdiff_t>(t.row) || cc < static_cast<std::ptrdiff_t>(t.col) ||
            cc >= static_cast<std::ptrdiff_t>(t.col_end()))
          continue;
        if (values(rr, cc) != v) continue;
        const SegmentId l = labels(rr, cc);
        if (!found) {
          best = l;
          found = true;
        } else if (l != best) {
          ds.join(best, l);
        }
      }
      labels(r, c) = found ? best : ds.make_set();
    }
}

}  // namespace detail

/// Two-pass labelling: raster scan with union-find equivalences, then a
/// resolving pass. Pixels share an id iff a `conn`-path of equal values
/// joins them.
template <typename T>
SegmentMap label_connected_components(const Plane<T>& values,
                                      Connectivity conn = Connectivity::Eight) {
  SegmentMap out;
  out.ids = Plane<SegmentId>(values.width(), values.height());
  if (values.empty()) return out;
  DisjointSets ds;
  detail::label_window(values, Tile{0, 0, values.height(), values.width()}, conn, out.ids, ds);
  out.count = detail::canonical_relabel(out.ids, ds);
  return out;
}

inline SegmentMap label_connected_components(const ColorNameMap& map,
                                             Connectivity conn = Connectivity::Eight) {
  return label_connected_components(map.ids, conn);
}

/// Tile-streaming variant: every tile is labelled independently, then
/// equivalences are merged along tile borders. Output is identical to
/// whole-image labelling.
template <typename T>
SegmentMap label_connected_components_tiled(const Plane<T>& values, Connectivity conn,
                                            std::size_t tile_size, unsigned threads = 1) {
  SegmentMap out;
  out.ids = Plane<SegmentId>(values.width(), values.height());
  if (values.empty()) return out;
  const auto ts = tiles(values.width(), values.height(), tile_size);

  // Tile-local passes; each tile owns its window of `out.ids` and its own
  // union-find.
  std::vector<DisjointSets> local(ts.size());
  std::vector<Tile> slots(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) slots[i] = Tile{i, 0, 1, 1};
  for_each_tile(slots, threads, [&](const Tile& slot) {
    detail::label_window(values, ts[slot.row], conn, out.ids, local[slot.row]);
  });

  // Offset tile-local ids into one global id space.
  std::vector<SegmentId> base(ts.size() + 1, 0);
  for (std::size_t i = 0; i < ts.size(); ++i)
    base[i + 1] = base[i] + static_cast<SegmentId>(local[i].size());
  DisjointSets global(base.back());
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (SegmentId l = 0; l < local[i].size(); ++l) global.join(base[i] + l, base[i] + local[i].find(l));

  const std::size_t cols_of_tiles = (values.width() + tile_size - 1) / tile_size;
  auto tile_index = [&](std::size_t r, std::size_t c) {
    return (r / tile_size) * cols_of_tiles + c / tile_size;
  };
  for (std::size_t r = 0; r < values.height(); ++r)
    for (std::size_t c = 0; c < values.width(); ++c)
      out.ids(r, c) += base[tile_index(r, c)];

  // Border merge: only pixel pairs straddling two tiles need checking.
  const auto nbrs = detail::back_neighbours(conn);
  auto merge_at = [&](std::size_t r, std::size_t c) {
    const std::size_t ti = tile_index(r, c);
    for (const auto& n : nbrs) {
      const auto rr = static_cast<std::ptrdiff_t>(r) + n.dr;
      const auto cc = static_cast<std::ptrdiff_t>(c) + n.dc;
      if (rr < 0 || cc < 0 || cc >= static_cast<std::ptrdiff_t>(values.width())) continue;
      if (tile_index(rr, cc) == ti) continue;
      if (values(rr, cc) == values(r, c)) global.join(out.ids(rr, cc), out.ids(r, c));
    }
  };
  for (std::size_t r = 0; r < values.height(); ++r) {
    if (r % tile_size == 0) {
      for (std::size_t c = 0; c < values.width(); ++c) merge_at(r, c);
    } else {
      for (std::size_t c = 0; c < values.width(); ++c)
        if (c % tile_size == 0 || (c + 1) % tile_size == 0) merge_at(r, c);
    }
  }
  out.count = detail::canonical_relabel(out.ids, global);
  return out;
}

// ---------------------------------------------------------------------------
// Geometric features

struct BoundingBox {
  std::size_t row_min = 0, col_min = 0, row_max = 0, col_max = 0;
  std::size_t rows() const { return row_max - row_min + 1; }
  std::size_t cols() const { return col_max - col_min + 1; }
};

struct SegmentRecord {
  SegmentId id = 0;
  CategoryId category = 0;
  std::size_t area_px = 0;
  double area_m2 = 0.0;
  std::size_t perimeter_px = 0;
  BoundingBox bbox;
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  double compactness = 0.0;
  double elongation = 1.0;
};

/// 4*pi*area / perimeter^2. On a pixel grid with city-block perimeter this
/// never exceeds pi/4.
inline double compactness(std::size_t area, std::size_t perimeter) {
  if (perimeter == 0) return 0.0;
  const double p = static_cast<double>(perimeter);
  return 4.0 * std::numbers::pi * static_cast<double>(area) / (p * p);
}

inline double elongation(const BoundingBox& b) {
  const double a = static_cast<double>(b.rows()), c = static_cast<double>(b.cols());
  return std::max(a, c) / std::min(a, c);
}

/// Number of pixel edges of the set that face a non-member or the border.
template <typename Pred>
std::size_t exposed_edges(std::size_t width, std::size_t height, std::size_t r, std::size_t c,
                          Pred&& member) {
  std::size_t e = 0;
  if (r == 0 || !member(r - 1, c)) ++e;
  if (r + 1 == height || !member(r + 1, c)) ++e;
  if (c == 0 || !member(r, c - 1)) ++e;
  if (c + 1 == width || !member(r, c + 1)) ++e;
  return e;
}

inline std::vector<SegmentRecord> compute_geometric_features(const SegmentMap& seg,
                                                             const ColorNameMap& map,
                                                             double resolution_m) {
  if (!seg.ids.same_shape(map.ids)) throw config_error("segment and category maps are misaligned");
  std::vector<SegmentRecord> recs(seg.count);
  std::vector<double> sum_r(seg.count, 0.0), sum_c(seg.count, 0.0);
  for (SegmentId i = 0; i < seg.count; ++i) recs[i].id = i + 1;
  const std::size_t w = seg.width(), h = seg.height();
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const SegmentId id = seg.ids(r, c);
      SegmentRecord& s = recs[id - 1];
      if (s.area_px == 0) {
        s.category = map.ids(r, c);
        s.bbox = BoundingBox{r, c, r, c};
      }
      ++s.area_px;
      s.bbox.row_min = std::min(s.bbox.row_min, r);
      s.bbox.row_max = std::max(s.bbox.row_max, r);
      s.bbox.col_min = std::min(s.bbox.col_min, c);
      s.bbox.col_max = std::max(s.bbox.col_max, c);
      sum_r[id - 1] += static_cast<double>(r);
      sum_c[id - 1] += static_cast<double>(c);
      s.perimeter_px += exposed_edges(w, h, r, c, [&](std::size_t rr, std::size_t cc) {
        return seg.ids(rr, cc) == id;
      });
    }
  for (SegmentId i = 0; i < seg.count; ++i) {
    SegmentRecord& s = recs[i];
    s.area_m2 = static_cast<double>(s.area_px) * resolution_m * resolution_m;
    s.centroid_row = sum_r[i] / static_cast<double>(s.area_px);
    s.centroid_col = sum_c[i] / static_cast<double>(s.area_px);
    s.compactness = compactness(s.area_px, s.perimeter_px);
    s.elongation = elongation(s.bbox);
  }
  return recs;
}

// ---------------------------------------------------------------------------
// Segment graph

class SegmentGraph {
 public:
  SegmentGraph() = default;

  const std::vector<SegmentRecord>& records() const noexcept { return records_; }
  const SegmentRecord& record(SegmentId id) const { return records_.at(id - 1); }
  std::size_t size() const noexcept { return records_.size(); }

  /// Unordered adjacent pairs (a < b), sorted.
  const std::vector<std::pair<SegmentId, SegmentId>>& adjacency() const noexcept {
    return adjacency_;
  }
  const std::vector<SegmentId>& neighbours(SegmentId id) const { return neighbours_.at(id - 1); }
  bool adjacent(SegmentId a, SegmentId b) const {
    const auto& n = neighbours(a);
    return std::binary_search(n.begin(), n.end(), b);
  }
  /// Segment that fully surrounds `id`, or 0.
  SegmentId container(SegmentId id) const { return container_.at(id - 1); }
  bool includes(SegmentId container_id, SegmentId contained) const {
    return container(contained) == container_id;
  }

  friend SegmentGraph build_segment_graph(const SegmentMap&, std::vector<SegmentRecord>);

 private:
  std::vector<SegmentRecord> records_;
  std::vector<std::pair<SegmentId, SegmentId>> adjacency_;
  std::vector<std::vector<SegmentId>> neighbours_;
  std::vector<SegmentId> container_;
};

/// Adjacency: some 4-adjacent pixel pair straddles the two segments.
/// Inclusion: A does not touch the image border and every pixel 4-adjacent
/// to A from outside (not from one of A's holes) lies in B.
inline SegmentGraph build_segment_graph(const SegmentMap& seg, std::vector<SegmentRecord> records) {
  if (records.size() != seg.count) throw config_error("segment records do not match segment map");
  SegmentGraph g;
  g.records_ = std::move(records);
  const std::size_t w = seg.width(), h = seg.height();
  std::vector<std::pair<SegmentId, SegmentId>> pairs;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const SegmentId a = seg.ids(r, c);
      if (c + 1 < w && seg.ids(r, c + 1) != a)
        pairs.emplace_back(std::min(a, seg.ids(r, c + 1)), std::max(a, seg.ids(r, c + 1)));
      if (r + 1 < h && seg.ids(r + 1, c) != a)
        pairs.emplace_back(std::min(a, seg.ids(r + 1, c)), std::max(a, seg.ids(r + 1, c)));
    }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  g.adjacency_ = std::move(pairs);

  g.neighbours_.assign(seg.count, {});
  for (const auto& [a, b] : g.adjacency_) {
    g.neighbours_[a - 1].push_back(b);
    g.neighbours_[b - 1].push_back(a);
  }
  for (auto& n : g.neighbours_) std::sort(n.begin(), n.end());

  std::vector<bool> touches_border(seg.count, false);
  for (std::size_t c = 0; c < w; ++c) {
    touches_border[seg.ids(0, c) - 1] = true;
    touches_border[seg.ids(h - 1, c) - 1] = true;
  }
  for (std::size_t r = 0; r < h; ++r) {
    touches_border[seg.ids(r, 0) - 1] = true;
    touches_border[seg.ids(r, w - 1) - 1] = true;
  }
  g.container_.assign(seg.count, 0);
  std::vector<std::uint8_t> seen;
  std::vector<std::size_t> stack;
  for (SegmentId i = 0; i < seg.count; ++i) {
    if (touches_border[i] || g.neighbours_[i].empty()) continue;
    if (g.neighbours_[i].size() == 1) {
      g.container_[i] = g.neighbours_[i][0];
      continue;
    }
    // Several neighbours: some may sit in holes. Flood the complement from
    // the margin of the bounding box and keep only neighbours reached that
    // way.
    const SegmentId id = i + 1;
    const BoundingBox& b = g.records_[i].bbox;
    const std::size_t r0 = b.row_min - 1, c0 = b.col_min - 1;
    const std::size_t bh = b.rows() + 2, bw = b.cols() + 2;
    seen.assign(bw * bh, 0);
    stack.clear();
    for (std::size_t r = 0; r < bh; ++r)
      for (std::size_t c = 0; c < bw; ++c)
        if (r == 0 || c == 0 || r + 1 == bh || c + 1 == bw) {
          seen[r * bw + c] = 1;
          stack.push_back(r * bw + c);
        }
    SegmentId outer = 0;
    bool unique = true;
    while (!stack.empty() && unique) {
      const std::size_t k = stack.back();
      stack.pop_back();
      const std::size_t r = k / bw, c = k % bw;
      const SegmentId here = seg.ids(r0 + r, c0 + c);
      const std::size_t nr[4] = {r - 1, r + 1, r, r};
      const std::size_t nc[4] = {c, c, c - 1, c + 1};
      for (int d = 0; d < 4; ++d) {
        if (nr[d] >= bh || nc[d] >= bw) continue;
        const std::size_t nk = nr[d] * bw + nc[d];
        if (seg.ids(r0 + nr[d], c0 + nc[d]) == id) {
          if (outer == 0) outer = here;
          else if (outer != here) unique = false;
        } else if (!seen[nk]) {
          seen[nk] = 1;
          stack.push_back(nk);
        }
      }
    }
    if (unique) g.container_[i] = outer;
  }
  return g;
}

inline SegmentGraph build_segment_graph(const SegmentMap& seg, const ColorNameMap& map,
                                        double resolution_m) {
  return build_segment_graph(seg, compute_geometric_features(seg, map, resolution_m));
}

/// Delimited segment table for inspection.
inline std::string segment_table_csv(const SegmentGraph& g, const CategoryVocabulary& vocab) {
  std::ostringstream os;
  os << "id,category,area_px,area_m2,perimeter_px,centroid_row,centroid_col,compactness,"
        "elongation\n";
  for (const SegmentRecord& s : g.records())
    os << s.id << "," << vocab[s.category].name << "," << s.area_px << ","
       << detail::format_double(s.area_m2) << "," << s.perimeter_px << ","
       << detail::format_double(s.centroid_row) << "," << detail::format_double(s.centroid_col)
       << "," << detail::format_double(s.compactness) << ","
       << detail::format_double(s.elongation) << "\n";
  return os.str();
}

inline LabelRaster to_label_raster(const SegmentMap& s) {
  LabelRaster lr{LabelKind::Segments, "segments", s.ids};
  return lr;
}

}  // namespace cloudmask
