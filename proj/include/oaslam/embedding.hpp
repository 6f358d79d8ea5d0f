#pragma once

#include <Eigen/Core>

#include <cstddef>

namespace oaslam {

constexpr int kDefaultEmbeddingDim = 384;

/// N x D patch features of one segmented mask. N varies with mask size.
class FeaturePatchGrid {
 public:
  explicit FeaturePatchGrid(Eigen::MatrixXd patches);

  const Eigen::MatrixXd& patches() const { return patches_; }
  Eigen::Index num_patches() const { return patches_.rows(); }
  Eigen::Index dim() const { return patches_.cols(); }

 private:
  Eigen::MatrixXd patches_;
};

/// Fixed-width, finite, non-zero feature vector.
class Embedding {
 public:
  /// Throws DegenerateEmbeddingError on a zero vector and InputError on
  /// non-finite entries.
  explicit Embedding(Eigen::VectorXd values);

  const Eigen::VectorXd& values() const { return values_; }
  Eigen::Index dim() const { return values_.size(); }

 private:
  Eigen::VectorXd values_;
};

/// Per-dimension mean over patches. Invariant to patch order (bitwise).
Embedding patch_average(const FeaturePatchGrid& grid);

/// (a.b) / (|a| |b|), clamped to [-1, 1].
double cosine_similarity(const Embedding& a, const Embedding& b);

/// Running mean after folding one more observation into `count` previous ones.
Embedding aggregate_landmark_embedding(const Embedding& current, std::size_t count,
                                       const Embedding& new_obs);

}  // namespace oaslam
