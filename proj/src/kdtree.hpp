#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace mranchor::detail {

// Static 3-d tree over a borrowed point array. Built once per call site and
// never serialized.
class KdTree3 {
 public:
  explicit KdTree3(std::span<const Eigen::Vector3d> points) : points_(points), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) build(0, static_cast<int>(order_.size()));
  }

  std::size_t size() const noexcept { return points_.size(); }

  /// Index of the nearest point, or -1 if the tree is empty.
  int nearest(const Eigen::Vector3d& query, double* dist2 = nullptr) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) nearest_rec(0, query, best, best_d2);
    if (dist2) *dist2 = best_d2;
    return best;
  }

  /// k nearest neighbors sorted by ascending distance (ties by index).
  void knn(const Eigen::Vector3d& query, int k, std::vector<int>& indices, std::vector<double>& dist2) const {
    heap_.clear();
    if (!nodes_.empty() && k > 0) knn_rec(0, query, static_cast<std::size_t>(k));
    std::sort_heap(heap_.begin(), heap_.end());
    indices.resize(heap_.size());
    dist2.resize(heap_.size());
    for (std::size_t i = 0; i < heap_.size(); ++i) {
      dist2[i] = heap_[i].first;
      indices[i] = heap_[i].second;
    }
  }

  /// All points within `radius`, sorted by ascending distance.
  void radius_search(const Eigen::Vector3d& query, double radius, std::vector<int>& indices,
                     std::vector<double>& dist2) const {
    heap_.clear();
    if (!nodes_.empty()) radius_rec(0, query, radius * radius);
    std::sort(heap_.begin(), heap_.end());
    indices.resize(heap_.size());
    dist2.resize(heap_.size());
    for (std::size_t i = 0; i < heap_.size(); ++i) {
      dist2[i] = heap_[i].first;
      indices[i] = heap_[i].second;
    }
  }

 private:
  static constexpr int kLeafSize = 8;

  struct Node {
    int begin = 0;
    int end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = points_[order_[begin]];
    Eigen::Vector3d hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
      const double pa = points_[a][axis];
      const double pb = points_[b][axis];
      return pa < pb || (pa == pb && a < b);
    });
    const double split = points_[order_[mid]][axis];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void nearest_rec(int id, const Eigen::Vector3d& q, int& best, double& best_d2) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
          best_d2 = d2;
          best = idx;
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff < 0.0 ? n.left : n.right;
    const int second = diff < 0.0 ? n.right : n.left;
    nearest_rec(first, q, best, best_d2);
    if (diff * diff <= best_d2) nearest_rec(second, q, best, best_d2);
  }

  void knn_rec(int id, const Eigen::Vector3d& q, std::size_t k) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const std::pair<double, int> cand{(points_[idx] - q).squaredNorm(), idx};
        if (heap_.size() < k) {
          heap_.push_back(cand);
          std::push_heap(heap_.begin(), heap_.end());
        } else if (cand < heap_.front()) {
          std::pop_heap(heap_.begin(), heap_.end());
          heap_.back() = cand;
          std::push_heap(heap_.begin(), heap_.end());
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff < 0.0 ? n.left : n.right;
    const int second = diff < 0.0 ? n.right : n.left;
    knn_rec(first, q, k);
    if (heap_.size() < k || diff * diff <= heap_.front().first) knn_rec(second, q, k);
  }

  void radius_rec(int id, const Eigen::Vector3d& q, double r2) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 <= r2) heap_.emplace_back(d2, idx);
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff < 0.0 ? n.left : n.right;
    const int second = diff < 0.0 ? n.right : n.left;
    radius_rec(first, q, r2);
    if (diff * diff <= r2) radius_rec(second, q, r2);
  }

  std::span<const Eigen::Vector3d> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  mutable std::vector<std::pair<double, int>> heap_;
};

}  // namespace mranchor::detail
