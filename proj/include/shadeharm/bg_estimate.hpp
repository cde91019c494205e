// Background illumination estimation: closed-form ridge regression from
// pooled background-image features to the illumination descriptor, plus the
// evaluable descriptor+rendered-shading objective.
#pragma once

#include "shadeharm/shading.hpp"

#include <string>
#include <vector>

namespace shadeharm {

/// Deterministic feature vector of length 3*Gw*Gh + 9, laid out as
/// [pooled grid, row-major, RGB per cell..., mean RGB, p10 RGB, p90 RGB].
struct BgFeatures {
  Eigen::VectorXd v;
  int grid_w = 0, grid_h = 0;
};

BgFeatures extract_features(const LinearImage& bg, int grid_w = 16, int grid_h = 12);

/// Linear descriptor regressor. prediction = clamp(W^T features + bias, 0).
/// Fitting mean-centers both sides, so bias = mean_y - W^T mean_x and the
/// large-lambda limit predicts the mean training descriptor.
struct BgEstimator {
  Eigen::MatrixXd weights;  // F x 3K
  Eigen::VectorXd bias;     // 3K, channel-major (R coefficients, then G, then B)
  BasisPartition partition;
  double ridge_lambda = 0;
  int grid_w = 0, grid_h = 0;
  double training_loss = 0;  // mean absolute training residual
  bool fitted = false;

  int K() const { return partition.cell_count(); }
};

/// W = (X^T X + lambda I)^-1 X^T Y on centered data. Throws on inconsistent
/// descriptors or a singular system (lambda = 0 with rank-deficient X).
BgEstimator fit_bg_estimator(const std::vector<BgFeatures>& features,
                             const std::vector<IlluminationDescriptor>& descriptors,
                             double ridge_lambda);

IlluminationDescriptor estimate_descriptor(const BgEstimator& est, const LinearImage& bg);

/// Mean absolute descriptor error over all 3K coefficients, plus the
/// per-pixel (channel-summed) mean absolute error between gt_shading and the
/// shading composed from the predicted descriptor.
double eval_bie_loss(const IlluminationDescriptor& pred, const IlluminationDescriptor& gt,
                     const ShadingBases& bases, const Shading& gt_shading);

std::string estimator_to_json(const BgEstimator& est);
BgEstimator estimator_from_json(const std::string& json_text);
void save_estimator(const std::string& path, const BgEstimator& est);
BgEstimator load_estimator(const std::string& path);

}  // namespace shadeharm
