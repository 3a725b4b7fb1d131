// manifold_mapping (part 1): exact k-NN k-d tree.  Max-spread split axis,
// median split, leaf size 16.  Queries are exact — a subtree is pruned only
// when the splitting plane is strictly farther than the current worst
// neighbor, so equal-distance candidates are still visited and the
// lowest-index tie rule can act on them.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "fairmap/core.hpp"

namespace fairmap::manifold {

class KdTree {
 public:
  static constexpr std::size_t leaf_size = 16;

  KdTree() = default;

  explicit KdTree(const Matrix& points) : points_(points) {
    require(points_.rows() >= 1, errc::empty_input, "k-d tree needs at least one point");
    order_.resize(points_.rows());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.rows() / leaf_size + 2);
    root_ = build(0, points_.rows());
  }

  std::size_t size() const { return points_.rows(); }
  std::size_t dim() const { return points_.cols(); }
  const Matrix& points() const { return points_; }

  // Exact Euclidean k-NN: (indices, distances) ascending by (distance, index).
  std::pair<std::vector<std::size_t>, std::vector<double>> knn_query(
      const std::vector<double>& query, std::size_t k_nn) const {
    require(query.size() == points_.cols(), errc::dimension_mismatch,
            "query dimension mismatch");
    require(k_nn >= 1 && k_nn <= points_.rows(), errc::argument,
            "k_nn must lie in [1, point count]");

    // worst-first heap of (dist2, index)
    std::vector<std::pair<double, std::size_t>> heap;
    heap.reserve(k_nn);
    search(root_, query.data(), k_nn, heap);
    std::sort(heap.begin(), heap.end());
    std::vector<std::size_t> idx(heap.size());
    std::vector<double> dist(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) {
      idx[i] = heap[i].second;
      dist[i] = std::sqrt(heap[i].first);
    }
    return {std::move(idx), std::move(dist)};
  }

 private:
  struct Node {
    int axis = -1;          // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
    std::size_t begin = 0, end = 0;  // range in order_ (leaves)
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    Node node;
    if (end - begin <= leaf_size) {
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return nodes_.size() - 1;
    }
    // axis of maximum spread over this range
    std::size_t k = points_.cols();
    std::size_t axis = 0;
    double best_spread = -1.0;
    for (std::size_t a = 0; a < k; ++a) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        double v = points_(order_[i], a);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        axis = a;
      }
    }
    std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid,
                     order_.begin() + end, [&](std::size_t a, std::size_t b) {
                       double va = points_(a, axis), vb = points_(b, axis);
                       if (va != vb) return va < vb;
                       return a < b;  // deterministic under duplicates
                     });
    node.axis = static_cast<int>(axis);
    node.split = points_(order_[mid], axis);
    nodes_.push_back(node);
    std::size_t self = nodes_.size() - 1;
    std::size_t left = build(begin, mid);
    std::size_t right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  static bool worse(const std::pair<double, std::size_t>& a,
                    const std::pair<double, std::size_t>& b) {
    return a < b;  // max-heap on (dist2, index): top = current worst
  }

  void consider(const double* q, std::size_t point, std::size_t k_nn,
                std::vector<std::pair<double, std::size_t>>& heap) const {
    double d2 = 0.0;
    const double* p = points_.row(point);
    for (std::size_t a = 0; a < points_.cols(); ++a) {
      double d = p[a] - q[a];
      d2 += d * d;
    }
    std::pair<double, std::size_t> cand{d2, point};
    if (heap.size() < k_nn) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), worse);
    } else if (cand < heap.front()) {
      std::pop_heap(heap.begin(), heap.end(), worse);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), worse);
    }
  }

  void search(std::size_t node_id, const double* q, std::size_t k_nn,
              std::vector<std::pair<double, std::size_t>>& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i)
        consider(q, order_[i], k_nn, heap);
      return;
    }
    double delta = q[node.axis] - node.split;
    std::size_t near = delta < 0.0 ? node.left : node.right;
    std::size_t far = delta < 0.0 ? node.right : node.left;
    search(near, q, k_nn, heap);
    // Visit the far side unless every point there is strictly worse than the
    // current k-th best (>=, not >, so distance ties are still examined).
    if (heap.size() < k_nn || delta * delta <= heap.front().first)
      search(far, q, k_nn, heap);
  }

  Matrix points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t root_ = 0;
};

// Brute-force oracle with the same (distance, index) ordering; used by tests
// and by the small-instance paths.
inline std::pair<std::vector<std::size_t>, std::vector<double>> knn_brute_force(
    const Matrix& points, const std::vector<double>& query, std::size_t k_nn) {
  require(points.rows() >= 1, errc::empty_input, "no points");
  require(query.size() == points.cols(), errc::dimension_mismatch, "query dim");
  require(k_nn >= 1 && k_nn <= points.rows(), errc::argument, "k_nn range");
  std::vector<std::pair<double, std::size_t>> all(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double d2 = 0.0;
    for (std::size_t a = 0; a < points.cols(); ++a) {
      double d = points(i, a) - query[a];
      d2 += d * d;
    }
    all[i] = {d2, i};
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> idx(k_nn);
  std::vector<double> dist(k_nn);
  for (std::size_t i = 0; i < k_nn; ++i) {
    idx[i] = all[i].second;
    dist[i] = std::sqrt(all[i].first);
  }
  return {std::move(idx), std::move(dist)};
}

}  // namespace fairmap::manifold
