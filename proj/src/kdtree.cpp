#include "steinscan/kdtree.hpp"

#include <algorithm>
#include <numeric>

#include "steinscan/errors.hpp"

namespace steinscan {

KdTree::KdTree(const PointCloud& cloud) : points_(&cloud) {
  if (cloud.empty()) {
    fail(ErrorCode::invalid_argument, "cannot build kd-tree from empty cloud");
  }
  std::vector<int> indices(cloud.size());
  std::iota(indices.begin(), indices.end(), 0);
  nodes_.reserve(cloud.size());
  root_ = build(indices, 0, static_cast<int>(indices.size()));
}

int KdTree::build(std::vector<int>& indices, int lo, int hi) {
  if (lo >= hi) return -1;

  const auto& pts = points_->points;
  Vec3 mn = pts[indices[lo]];
  Vec3 mx = mn;
  for (int i = lo + 1; i < hi; ++i) {
    mn = mn.cwiseMin(pts[indices[i]]);
    mx = mx.cwiseMax(pts[indices[i]]);
  }
  int axis = 0;
  (mx - mn).maxCoeff(&axis);

  const int mid = lo + (hi - lo) / 2;
  std::nth_element(indices.begin() + lo, indices.begin() + mid,
                   indices.begin() + hi, [&](int a, int b) {
                     if (pts[a][axis] != pts[b][axis]) {
                       return pts[a][axis] < pts[b][axis];
                     }
                     return a < b;
                   });

  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{indices[mid], axis, -1, -1});
  const int left = build(indices, lo, mid);
  const int right = build(indices, mid + 1, hi);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

void KdTree::search(int node_id, const Vec3& query, int k,
                    std::vector<Candidate>& best) const {
  if (node_id < 0) return;
  const Node& node = nodes_[node_id];
  const Vec3& p = points_->points[node.point];

  const Candidate cand{(query - p).squaredNorm(), node.point};
  if (static_cast<int>(best.size()) < k) {
    best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
  } else if (cand < best.back()) {
    best.pop_back();
    best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
  }

  const double delta = query[node.axis] - p[node.axis];
  const int near = delta < 0.0 ? node.left : node.right;
  const int far = delta < 0.0 ? node.right : node.left;
  search(near, query, k, best);
  if (static_cast<int>(best.size()) < k || delta * delta <= best.back().d2) {
    search(far, query, k, best);
  }
}

void KdTree::knn(const Vec3& query, int k, std::vector<int>& indices,
                 std::vector<double>& sq_dists) const {
  k = std::min<int>(k, static_cast<int>(points_->size()));
  indices.clear();
  sq_dists.clear();
  if (k <= 0) return;

  std::vector<Candidate> best;
  best.reserve(k + 1);
  search(root_, query, k, best);

  indices.reserve(best.size());
  sq_dists.reserve(best.size());
  for (const Candidate& c : best) {
    indices.push_back(c.index);
    sq_dists.push_back(c.d2);
  }
}

std::pair<int, double> KdTree::nearest(const Vec3& query) const {
  std::vector<Candidate> best;
  best.reserve(2);
  search(root_, query, 1, best);
  return {best[0].index, best[0].d2};
}

}  // namespace steinscan
