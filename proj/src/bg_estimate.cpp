#include "shadeharm/bg_estimate.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace shadeharm {

namespace {

double percentile(std::vector<float>& values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * (static_cast<double>(values.size()) - 1.0);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

Eigen::VectorXd flatten_descriptor(const IlluminationDescriptor& d) {
  const int K = d.K();
  Eigen::VectorXd y(3 * K);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < K; ++k) y(c * K + k) = d.l(c, k);
  }
  return y;
}

}  // namespace

BgFeatures extract_features(const LinearImage& bg, int grid_w, int grid_h) {
  if (bg.empty()) throw std::invalid_argument("extract_features: empty image");
  if (grid_w < 1 || grid_h < 1) throw std::invalid_argument("extract_features: bad grid");
  const Eigen::Index hgt = bg.rows(), wid = bg.cols();
  BgFeatures f;
  f.grid_w = grid_w;
  f.grid_h = grid_h;
  f.v = Eigen::VectorXd::Zero(3 * grid_w * grid_h + 9);

  Eigen::Index idx = 0;
  for (int gy = 0; gy < grid_h; ++gy) {
    const Eigen::Index y0 = hgt * gy / grid_h;
    const Eigen::Index y1 = std::max<Eigen::Index>(y0 + 1, hgt * (gy + 1) / grid_h);
    for (int gx = 0; gx < grid_w; ++gx) {
      const Eigen::Index x0 = wid * gx / grid_w;
      const Eigen::Index x1 = std::max<Eigen::Index>(x0 + 1, wid * (gx + 1) / grid_w);
      for (int c = 0; c < 3; ++c) {
        const auto block = bg.channel(c).block(y0, x0, y1 - y0, x1 - x0);
        f.v(idx++) = block.template cast<double>().mean();
      }
    }
  }
  for (int c = 0; c < 3; ++c) f.v(idx + c) = bg.channel(c).cast<double>().mean();
  for (int c = 0; c < 3; ++c) {
    std::vector<float> vals(bg.channel(c).data(), bg.channel(c).data() + bg.channel(c).size());
    std::vector<float> vals_copy = vals;
    f.v(idx + 3 + c) = percentile(vals, 0.10);
    f.v(idx + 6 + c) = percentile(vals_copy, 0.90);
  }
  return f;
}

BgEstimator fit_bg_estimator(const std::vector<BgFeatures>& features,
                             const std::vector<IlluminationDescriptor>& descriptors,
                             double ridge_lambda) {
  if (features.empty() || features.size() != descriptors.size()) {
    throw std::invalid_argument("fit_bg_estimator: need matching, nonempty training lists");
  }
  if (ridge_lambda < 0) throw std::invalid_argument("fit_bg_estimator: lambda must be >= 0");
  const BasisPartition part = descriptors.front().partition;
  for (const auto& d : descriptors) {
    if (!(d.partition == part)) {
      throw std::invalid_argument("fit_bg_estimator: descriptors disagree on K/partition");
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(features.size());
  const Eigen::Index dim_f = features.front().v.size();
  const Eigen::Index dim_y = 3 * part.cell_count();
  Eigen::MatrixXd X(n, dim_f), Y(n, dim_y);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (features[static_cast<size_t>(i)].v.size() != dim_f) {
      throw std::invalid_argument("fit_bg_estimator: feature lengths differ");
    }
    X.row(i) = features[static_cast<size_t>(i)].v.transpose();
    Y.row(i) = flatten_descriptor(descriptors[static_cast<size_t>(i)]).transpose();
  }
  const Eigen::RowVectorXd mean_x = X.colwise().mean();
  const Eigen::RowVectorXd mean_y = Y.colwise().mean();
  X.rowwise() -= mean_x;
  Y.rowwise() -= mean_y;

  // Standardize feature columns so the ridge penalty is scale-free (linear
  // radiance features span several orders of magnitude); the scaling is
  // folded back into the stored weights afterwards.
  Eigen::VectorXd scale(dim_f);
  for (Eigen::Index j = 0; j < dim_f; ++j) {
    const double sd = std::sqrt(X.col(j).squaredNorm() / static_cast<double>(n));
    scale(j) = sd > 1e-12 ? sd : 1.0;
    X.col(j) /= scale(j);
  }

  Eigen::MatrixXd normal = X.transpose() * X;
  normal.diagonal().array() += ridge_lambda;

  BgEstimator est;
  if (ridge_lambda > 0) {
    est.weights = normal.ldlt().solve(X.transpose() * Y);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
    if (qr.rank() < dim_f) {
      throw std::runtime_error("fit_bg_estimator: singular system (lambda = 0, rank-deficient features)");
    }
    est.weights = qr.solve(X.transpose() * Y);
  }
  est.training_loss = (X * est.weights - Y).cwiseAbs().mean();  // X is still scaled here
  est.weights.array().colwise() /= scale.array();
  est.bias = (mean_y - mean_x * est.weights).transpose();
  est.partition = part;
  est.ridge_lambda = ridge_lambda;
  est.grid_w = features.front().grid_w;
  est.grid_h = features.front().grid_h;
  est.fitted = true;
  return est;
}

IlluminationDescriptor estimate_descriptor(const BgEstimator& est, const LinearImage& bg) {
  if (!est.fitted) throw std::invalid_argument("estimate_descriptor: estimator is not fitted");
  const BgFeatures f = extract_features(bg, est.grid_w, est.grid_h);
  if (f.v.size() != est.weights.rows()) {
    throw std::invalid_argument("estimate_descriptor: feature length mismatch");
  }
  const Eigen::VectorXd y = (est.weights.transpose() * f.v + est.bias).cwiseMax(0.0);
  IlluminationDescriptor d;
  d.partition = est.partition;
  const int K = est.K();
  d.l.resize(3, K);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < K; ++k) d.l(c, k) = y(c * K + k);
  }
  return d;
}

double eval_bie_loss(const IlluminationDescriptor& pred, const IlluminationDescriptor& gt,
                     const ShadingBases& bases, const Shading& gt_shading) {
  if (pred.K() != gt.K() || !(pred.partition == gt.partition)) {
    throw std::invalid_argument("eval_bie_loss: descriptor shapes differ");
  }
  if (gt_shading.rows() != bases.rows() || gt_shading.cols() != bases.cols()) {
    throw std::invalid_argument("eval_bie_loss: shading does not align with bases");
  }
  const double descriptor_term = (pred.l - gt.l).cwiseAbs().mean();
  const Shading rendered = compose_shading(bases, pred);
  double acc = 0;
  for (int c = 0; c < 3; ++c) {
    acc += (rendered.channel(c).cast<double>() - gt_shading.channel(c).cast<double>()).abs().sum();
  }
  const double shading_term = acc / (static_cast<double>(gt_shading.rows()) * gt_shading.cols());
  return descriptor_term + shading_term;
}

namespace {

nlohmann::json partition_json(const BasisPartition& part) {
  return {{"scheme", part.scheme == BasisPartition::Scheme::EqualArea ? "equal_area" : "pixel_grid"},
          {"rings", part.bands},
          {"sectors", part.sectors}};
}

}  // namespace

std::string estimator_to_json(const BgEstimator& est) {
  if (!est.fitted) throw std::invalid_argument("estimator_to_json: estimator is not fitted");
  nlohmann::json j;
  j["K"] = est.K();
  j["partition"] = partition_json(est.partition);
  j["lambda"] = est.ridge_lambda;
  j["feature_layout"] = {{"grid_w", est.grid_w},
                         {"grid_h", est.grid_h},
                         {"length", est.weights.rows()},
                         {"order", "grid_rgb,mean_rgb,p10_rgb,p90_rgb"}};
  nlohmann::json w = nlohmann::json::array();
  for (Eigen::Index r = 0; r < est.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < est.weights.cols(); ++c) w.push_back(est.weights(r, c));
  }
  j["W"] = std::move(w);
  nlohmann::json b = nlohmann::json::array();
  for (Eigen::Index i = 0; i < est.bias.size(); ++i) b.push_back(est.bias(i));
  j["bias"] = std::move(b);
  j["training_loss"] = est.training_loss;
  return j.dump();
}

BgEstimator estimator_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  BgEstimator est;
  const auto& pj = j.at("partition");
  est.partition.scheme = pj.value("scheme", "equal_area") == "pixel_grid"
                             ? BasisPartition::Scheme::PixelGrid
                             : BasisPartition::Scheme::EqualArea;
  est.partition.bands = pj.at("rings").get<int>();
  est.partition.sectors = pj.at("sectors").get<int>();
  if (j.at("K").get<int>() != est.partition.cell_count()) {
    throw std::runtime_error("estimator: K does not match partition");
  }
  est.ridge_lambda = j.at("lambda").get<double>();
  est.grid_w = j.at("feature_layout").at("grid_w").get<int>();
  est.grid_h = j.at("feature_layout").at("grid_h").get<int>();
  const Eigen::Index dim_f = j.at("feature_layout").at("length").get<Eigen::Index>();
  const Eigen::Index dim_y = 3 * est.partition.cell_count();
  const auto& w = j.at("W");
  if (static_cast<Eigen::Index>(w.size()) != dim_f * dim_y) {
    throw std::runtime_error("estimator: weight matrix size mismatch");
  }
  est.weights.resize(dim_f, dim_y);
  Eigen::Index idx = 0;
  for (Eigen::Index r = 0; r < dim_f; ++r) {
    for (Eigen::Index c = 0; c < dim_y; ++c) est.weights(r, c) = w[static_cast<size_t>(idx++)].get<double>();
  }
  const auto& b = j.at("bias");
  if (static_cast<Eigen::Index>(b.size()) != dim_y) throw std::runtime_error("estimator: bias size mismatch");
  est.bias.resize(dim_y);
  for (Eigen::Index i = 0; i < dim_y; ++i) est.bias(i) = b[static_cast<size_t>(i)].get<double>();
  est.training_loss = j.value("training_loss", 0.0);
  est.fitted = true;
  return est;
}

void save_estimator(const std::string& path, const BgEstimator& est) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << estimator_to_json(est) << "\n";
}

BgEstimator load_estimator(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return estimator_from_json(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace shadeharm
