#pragma once

#include <utility>
#include <vector>

#include "steinscan/point_cloud.hpp"

namespace steinscan {

// Exact k-nearest-neighbor index. Splits on the widest-spread axis at the
// median; distance ties break by lower point index, so query results are
// identical to a brute-force scan sorted by (distance, index).
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud);

  // k nearest neighbors of `query`, ascending by (squared distance, index).
  // k is clamped to the cloud size.
  void knn(const Vec3& query, int k, std::vector<int>& indices,
           std::vector<double>& sq_dists) const;

  std::pair<int, double> nearest(const Vec3& query) const;

  std::size_t size() const { return points_->size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  struct Candidate {
    double d2;
    int index;
    bool operator<(const Candidate& o) const {
      return d2 < o.d2 || (d2 == o.d2 && index < o.index);
    }
  };

  int build(std::vector<int>& indices, int lo, int hi);
  void search(int node, const Vec3& query, int k,
              std::vector<Candidate>& best) const;

  const PointCloud* points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace steinscan
