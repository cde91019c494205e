#include "shadeharm/bg_estimate.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace shadeharm;

namespace {

Image3 random_image(int h, int w, Rng& rng) {
  Image3 img(h, w);
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < img.r.size(); ++i) {
      img.channel(c).data()[i] = static_cast<float>(rng.next_double());
    }
  }
  return img;
}

IlluminationDescriptor descriptor_from_vector(const Eigen::VectorXd& y, const BasisPartition& part) {
  IlluminationDescriptor d;
  d.partition = part;
  const int K = part.cell_count();
  d.l.resize(3, K);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < K; ++k) d.l(c, k) = y(c * K + k);
  }
  return d;
}

}  // namespace

TEST_CASE("extract_features: constants, halves, layout") {
  const Image3 gray = Image3::constant(24, 32, 0.5f, 0.5f, 0.5f);
  const BgFeatures f = extract_features(gray, 4, 3);
  CHECK(f.v.size() == 3 * 4 * 3 + 9);
  for (Eigen::Index i = 0; i < f.v.size(); ++i) CHECK(f.v(i) == doctest::Approx(0.5).epsilon(1e-7));

  Image3 split(8, 8);
  for (Eigen::Index y = 0; y < 8; ++y) {
    for (Eigen::Index x = 0; x < 8; ++x) {
      const float v = x < 4 ? 0.0f : 1.0f;
      split.r(y, x) = split.g(y, x) = split.b(y, x) = v;
    }
  }
  const BgFeatures half = extract_features(split, 2, 1);
  CHECK(half.v(0) == 0.0);  // left cell RGB
  CHECK(half.v(1) == 0.0);
  CHECK(half.v(2) == 0.0);
  CHECK(half.v(3) == 1.0);  // right cell RGB
  CHECK(half.v(4) == 1.0);
  CHECK(half.v(5) == 1.0);
  CHECK(half.v(6) == doctest::Approx(0.5));  // mean R
}

TEST_CASE("extract_features: pooled grid matches brute-force block means") {
  Rng rng(71);
  const Image3 img = random_image(37, 53, rng);
  const int gw = 16, gh = 12;
  const BgFeatures f = extract_features(img, gw, gh);
  Eigen::Index idx = 0;
  for (int gy = 0; gy < gh; ++gy) {
    const Eigen::Index y0 = 37 * gy / gh;
    const Eigen::Index y1 = std::max<Eigen::Index>(y0 + 1, 37 * (gy + 1) / gh);
    for (int gx = 0; gx < gw; ++gx) {
      const Eigen::Index x0 = 53 * gx / gw;
      const Eigen::Index x1 = std::max<Eigen::Index>(x0 + 1, 53 * (gx + 1) / gw);
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (Eigen::Index y = y0; y < y1; ++y) {
          for (Eigen::Index x = x0; x < x1; ++x) acc += img.channel(c)(y, x);
        }
        acc /= static_cast<double>((y1 - y0) * (x1 - x0));
        CHECK(f.v(idx++) == doctest::Approx(acc).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("fit: recovers a realizable linear map and interpolates training points") {
  Rng rng(81);
  const BasisPartition part = make_partition(4);
  const int dim_f = 3 * 2 * 2 + 9;  // grid 2x2
  Eigen::MatrixXd true_map(dim_f, 12);
  for (Eigen::Index i = 0; i < true_map.size(); ++i) true_map.data()[i] = rng.uniform(-0.5, 0.5);

  std::vector<BgFeatures> features;
  std::vector<IlluminationDescriptor> targets;
  std::vector<Image3> images;
  for (int n = 0; n < 60; ++n) {
    images.push_back(random_image(12, 16, rng));
    features.push_back(extract_features(images.back(), 2, 2));
    targets.push_back(descriptor_from_vector(true_map.transpose() * features.back().v, part));
  }
  const BgEstimator est = fit_bg_estimator(features, targets, 1e-10);
  CHECK(est.training_loss < 1e-6);

  for (int n = 0; n < 5; ++n) {
    const IlluminationDescriptor pred = estimate_descriptor(est, images[static_cast<size_t>(n)]);
    // estimate clamps at zero; compare where the target is nonnegative
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 4; ++k) {
        if (targets[static_cast<size_t>(n)].l(c, k) >= 0) {
          CHECK(pred.l(c, k) ==
                doctest::Approx(targets[static_cast<size_t>(n)].l(c, k)).epsilon(1e-5));
        } else {
          CHECK(pred.l(c, k) == 0.0);  // clamp keeps the descriptor nonnegative
        }
      }
    }
  }
}

TEST_CASE("fit: huge lambda collapses to the mean descriptor") {
  Rng rng(91);
  const BasisPartition part = make_partition(4);
  std::vector<BgFeatures> features;
  std::vector<IlluminationDescriptor> targets;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(12);
  std::vector<Image3> images;
  for (int n = 0; n < 30; ++n) {
    images.push_back(random_image(10, 10, rng));
    features.push_back(extract_features(images.back(), 2, 2));
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) y(i) = rng.uniform(0.0, 3.0);
    mean += y;
    targets.push_back(descriptor_from_vector(y, part));
  }
  mean /= 30.0;
  const BgEstimator est = fit_bg_estimator(features, targets, 1e12);
  const IlluminationDescriptor pred = estimate_descriptor(est, images[0]);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 4; ++k) {
      CHECK(pred.l(c, k) == doctest::Approx(mean(c * 4 + k)).epsilon(1e-4));
    }
  }
}

TEST_CASE("fit: ridge training residual is non-decreasing in lambda") {
  Rng rng(101);
  const BasisPartition part = make_partition(8);
  std::vector<BgFeatures> features;
  std::vector<IlluminationDescriptor> targets;
  for (int n = 0; n < 40; ++n) {
    const Image3 img = random_image(10, 10, rng);
    features.push_back(extract_features(img, 2, 2));
    Eigen::VectorXd y(24);
    for (int i = 0; i < 24; ++i) y(i) = rng.uniform(0.0, 2.0);
    targets.push_back(descriptor_from_vector(y, part));
  }
  double last = -1;
  for (double lambda : {1e-6, 1e-3, 1e-1, 10.0, 1e4}) {
    const BgEstimator est = fit_bg_estimator(features, targets, lambda);
    CHECK(est.training_loss >= last - 1e-12);
    last = est.training_loss;
  }
}

TEST_CASE("fit: error paths") {
  Rng rng(111);
  const BasisPartition part = make_partition(4);
  std::vector<BgFeatures> features;
  std::vector<IlluminationDescriptor> targets;
  for (int n = 0; n < 6; ++n) {
    // constant images: every feature column identical -> rank deficient
    features.push_back(extract_features(Image3::constant(8, 8, 0.3f, 0.3f, 0.3f), 2, 2));
    Eigen::VectorXd y = Eigen::VectorXd::Constant(12, 1.0);
    targets.push_back(descriptor_from_vector(y, part));
  }
  CHECK_THROWS_AS(fit_bg_estimator(features, targets, 0.0), std::runtime_error);

  targets.back().partition = make_partition(8);
  targets.back().l.resize(3, 8);
  targets.back().l.setZero();
  CHECK_THROWS_AS(fit_bg_estimator(features, targets, 1e-2), std::invalid_argument);

  BgEstimator unfitted;
  CHECK_THROWS_AS(estimate_descriptor(unfitted, Image3::constant(8, 8, 0.1f, 0.1f, 0.1f)),
                  std::invalid_argument);
}

TEST_CASE("eval_bie_loss: zero case, closed-form perturbation, brute-force oracle") {
  // small synthetic bases: 2x2 partition over an 6x6 image
  const BasisPartition part = make_partition(4);
  Rng rng(121);
  ShadingBases bases;
  bases.partition = part;
  for (int k = 0; k < 4; ++k) {
    Planef plane(6, 6);
    for (Eigen::Index i = 0; i < plane.size(); ++i) {
      plane.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }
    bases.sb.push_back(plane);
  }
  IlluminationDescriptor gt;
  gt.partition = part;
  gt.l.resize(3, 4);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 4; ++k) gt.l(c, k) = rng.uniform(0.0, 2.0);
  }
  const Shading gt_shading = compose_shading(bases, gt);
  CHECK(eval_bie_loss(gt, gt, bases, gt_shading) == 0.0);

  SUBCASE("single-coefficient perturbation closed form") {
    const double delta = 0.37;
    const int k = 2, c = 1;
    IlluminationDescriptor pred = gt;
    pred.l(c, k) += delta;
    const double sb_mean = bases.sb[static_cast<size_t>(k)].cast<double>().mean();
    const double expected = delta / (3.0 * 4.0) + delta * sb_mean;
    CHECK(eval_bie_loss(pred, gt, bases, gt_shading) == doctest::Approx(expected).epsilon(1e-7));
  }

  SUBCASE("random prediction against an independent summation") {
    IlluminationDescriptor pred = gt;
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 4; ++k) pred.l(c, k) = rng.uniform(0.0, 2.0);
    }
    double term1 = 0;
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 4; ++k) term1 += std::abs(pred.l(c, k) - gt.l(c, k));
    }
    term1 /= 12.0;
    double term2 = 0;
    for (Eigen::Index y = 0; y < 6; ++y) {
      for (Eigen::Index x = 0; x < 6; ++x) {
        for (int c = 0; c < 3; ++c) {
          double s = 0;
          for (int k = 0; k < 4; ++k) s += pred.l(c, k) * bases.sb[static_cast<size_t>(k)](y, x);
          term2 += std::abs(s - gt_shading.channel(c)(y, x));
        }
      }
    }
    term2 /= 36.0;
    CHECK(eval_bie_loss(pred, gt, bases, gt_shading) ==
          doctest::Approx(term1 + term2).epsilon(1e-7));
  }

  SUBCASE("shape mismatch throws") {
    IlluminationDescriptor wrong = gt;
    wrong.partition = make_partition(8);
    wrong.l.resize(3, 8);
    wrong.l.setZero();
    CHECK_THROWS_AS(eval_bie_loss(wrong, gt, bases, gt_shading), std::invalid_argument);
  }
}

TEST_CASE("estimator JSON round-trip") {
  Rng rng(131);
  const BasisPartition part = make_partition(4);
  std::vector<BgFeatures> features;
  std::vector<IlluminationDescriptor> targets;
  std::vector<Image3> images;
  for (int n = 0; n < 25; ++n) {
    images.push_back(random_image(9, 9, rng));
    features.push_back(extract_features(images.back(), 2, 2));
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) y(i) = rng.uniform(0.0, 1.5);
    targets.push_back(descriptor_from_vector(y, part));
  }
  const BgEstimator est = fit_bg_estimator(features, targets, 1e-2);
  const BgEstimator back = estimator_from_json(estimator_to_json(est));
  CHECK(back.partition == est.partition);
  CHECK(back.ridge_lambda == est.ridge_lambda);
  CHECK((back.weights - est.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.bias - est.bias).cwiseAbs().maxCoeff() == 0.0);
  const IlluminationDescriptor a = estimate_descriptor(est, images[0]);
  const IlluminationDescriptor b = estimate_descriptor(back, images[0]);
  CHECK((a.l - b.l).cwiseAbs().maxCoeff() == 0.0);
}
