#ifndef MESHLEARN_NEIGHBORHOOD_HPP
#define MESHLEARN_NEIGHBORHOOD_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "meshlearn/core.hpp"
#include "meshlearn/dataset.hpp"

namespace meshlearn {

/// Ordered p-nearest spatial neighbors of every voxel, center excluded.
///
/// Row j lists voxels by ascending (squared Euclidean distance, voxel index),
/// so rows of a (p-1)-table are prefixes of the p-table rows.
class NeighborhoodTable {
 public:
  NeighborhoodTable() = default;
  NeighborhoodTable(std::size_t order, std::vector<std::size_t> indices, std::vector<double> distances)
      : order_(order), indices_(std::move(indices)), distances_(std::move(distances)) {}

  std::size_t order() const { return order_; }
  std::size_t n_voxels() const { return order_ == 0 ? 0 : indices_.size() / order_; }

  std::span<const std::size_t> row(std::size_t voxel) const {
    return {indices_.data() + voxel * order_, order_};
  }
  /// Euclidean distance from `voxel` to its rank-th neighbor.
  double distance(std::size_t voxel, std::size_t rank) const { return distances_[voxel * order_ + rank]; }

  friend bool operator==(const NeighborhoodTable&, const NeighborhoodTable&) = default;

 private:
  std::size_t order_ = 0;
  std::vector<std::size_t> indices_;
  std::vector<double> distances_;
};

namespace detail {

/// Static 3-d tree over voxel positions for exact k-nearest queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Coord>& pts) : pts_(pts), order_(pts.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!pts.empty()) build(0, pts.size());
  }

  /// The k nearest points to pts[query], excluding `query`, as (d^2, index)
  /// ascending. Equal distances resolve to the smaller index.
  std::vector<std::pair<double, std::size_t>> nearest(std::size_t query, std::size_t k) const {
    Heap heap;
    if (k > 0 && !nodes_.empty()) search(0, query, k, heap);
    std::vector<std::pair<double, std::size_t>> out(heap.size());
    for (auto i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

 private:
  using Entry = std::pair<double, std::size_t>;
  using Heap = std::priority_queue<Entry>;  // max-heap on (d^2, index)
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin, end;
    int axis = -1;  // -1 for leaves
    double split = 0;
    std::size_t left = 0, right = 0;
  };

  static double coord(const Coord& c, int axis) { return axis == 0 ? c.x : axis == 1 ? c.y : c.z; }

  std::size_t build(std::size_t begin, std::size_t end) {
    const auto id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    std::array<double, 3> lo{}, hi{};
    lo.fill(INFINITY);
    hi.fill(-INFINITY);
    for (auto i = begin; i < end; ++i)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], coord(pts_[order_[i]], a));
        hi[a] = std::max(hi[a], coord(pts_[order_[i]], a));
      }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;

    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return coord(pts_[a], axis) < coord(pts_[b], axis); });
    const double split = coord(pts_[order_[mid]], axis);
    // Left holds values <= split, right values >= split.
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  static void offer(Heap& heap, std::size_t k, Entry e) {
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }

  void search(std::size_t node_id, std::size_t query, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[node_id];
    const Coord& q = pts_[query];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        if (idx != query) offer(heap, k, {squared_distance(q, pts_[idx]), idx});
      }
      return;
    }
    const double diff = coord(q, node.axis) - node.split;
    const auto near = diff <= 0 ? node.left : node.right;
    const auto far = diff <= 0 ? node.right : node.left;
    search(near, query, k, heap);
    // Points beyond the plane are at least |diff| away; keep ties (strict >).
    if (heap.size() < k || !(diff * diff > heap.top().first)) search(far, query, k, heap);
  }

  const std::vector<Coord>& pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace detail

inline NeighborhoodTable build_neighborhood_table(const std::vector<Coord>& coords, std::size_t p) {
  const auto n = coords.size();
  if (p < 1 || p + 1 > n)
    throw ArgumentError("mesh order p=" + std::to_string(p) + " outside [1, " + std::to_string(n == 0 ? 0 : n - 1) +
                        "]");
  detail::KdTree tree(coords);
  std::vector<std::size_t> indices(n * p);
  std::vector<double> distances(n * p);
  for (std::size_t j = 0; j < n; ++j) {
    auto nn = tree.nearest(j, p);
    for (std::size_t r = 0; r < p; ++r) {
      indices[j * p + r] = nn[r].second;
      distances[j * p + r] = std::sqrt(nn[r].first);
    }
  }
  return {p, std::move(indices), std::move(distances)};
}

/// neighbors.csv: voxel_id,rank,neighbor_id,distance (rank is 0-based).
inline void write_neighbors_csv(const NeighborhoodTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "voxel_id,rank,neighbor_id,distance\n";
  for (std::size_t j = 0; j < table.n_voxels(); ++j)
    for (std::size_t r = 0; r < table.order(); ++r)
      out << j << ',' << r << ',' << table.row(j)[r] << ',' << detail::format_double(table.distance(j, r)) << '\n';
}

}  // namespace meshlearn

#endif  // MESHLEARN_NEIGHBORHOOD_HPP
