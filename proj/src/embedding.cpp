#include "oaslam/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "oaslam/errors.hpp"

namespace oaslam {

FeaturePatchGrid::FeaturePatchGrid(Eigen::MatrixXd patches) : patches_(std::move(patches)) {
  if (patches_.rows() < 1 || patches_.cols() < 1) {
    throw InputError("feature patch grid needs at least one patch and one column");
  }
  if (!patches_.allFinite()) {
    throw InputError("feature patch grid contains non-finite entries");
  }
}

Embedding::Embedding(Eigen::VectorXd values) : values_(std::move(values)) {
  if (values_.size() == 0) throw DegenerateEmbeddingError("embedding has zero width");
  if (!values_.allFinite()) throw InputError("embedding contains non-finite entries");
  if ((values_.array() == 0.0).all()) throw DegenerateEmbeddingError("embedding is the zero vector");
}

Embedding patch_average(const FeaturePatchGrid& grid) {
  const auto& m = grid.patches();
  Eigen::VectorXd mean(m.cols());
  std::vector<double> column(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index d = 0; d < m.cols(); ++d) {
    // Sorted summation makes the mean independent of patch order.
    for (Eigen::Index n = 0; n < m.rows(); ++n) column[static_cast<std::size_t>(n)] = m(n, d);
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double x : column) sum += x;
    mean(d) = sum / static_cast<double>(m.rows());
  }
  return Embedding(std::move(mean));
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw InputError("embedding width mismatch");
  const auto& x = a.values();
  const auto& y = b.values();
  long double dot = 0.0L, nx = 0.0L, ny = 0.0L;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    dot += static_cast<long double>(x(i)) * y(i);
    nx += static_cast<long double>(x(i)) * x(i);
    ny += static_cast<long double>(y(i)) * y(i);
  }
  if (nx == 0.0L || ny == 0.0L) throw DegenerateEmbeddingError("cosine similarity of a zero vector");
  const long double s = dot / (std::sqrt(nx) * std::sqrt(ny));
  return std::clamp(static_cast<double>(s), -1.0, 1.0);
}

Embedding aggregate_landmark_embedding(const Embedding& current, std::size_t count,
                                       const Embedding& new_obs) {
  if (count < 1) throw InputError("landmark observation count must be >= 1");
  if (current.dim() != new_obs.dim()) throw InputError("embedding width mismatch");
  const double n = static_cast<double>(count) + 1.0;
  Eigen::VectorXd mean = current.values() + (new_obs.values() - current.values()) / n;
  return Embedding(std::move(mean));
}

}  // namespace oaslam
