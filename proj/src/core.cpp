#include "shadeharm/core.hpp"

#include <cmath>
#include <thread>

namespace shadeharm {

Mask mask_from_alpha(const Planef& alpha) {
  Mask mask;
  mask.alpha = alpha;
  mask.m = Planeb::Zero(alpha.rows(), alpha.cols());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    mask.m.data()[i] = alpha.data()[i] >= 0.5f ? 1 : 0;
  }
  return mask;
}

Mask mask_all_ones(Eigen::Index h, Eigen::Index w) {
  Mask mask;
  mask.m = Planeb::Constant(h, w, 1);
  return mask;
}

float srgb_encode(float linear) {
  float v = std::fmin(std::fmax(linear, 0.0f), 1.0f);
  return v <= 0.0031308f ? 12.92f * v : 1.055f * std::pow(v, 1.0f / 2.4f) - 0.055f;
}

float srgb_decode(float srgb) {
  return srgb <= 0.04045f ? srgb / 12.92f : std::pow((srgb + 0.055f) / 1.055f, 2.4f);
}

Image3 srgb_encode(const Image3& linear) {
  Image3 out(linear.rows(), linear.cols());
  for (int c = 0; c < 3; ++c) {
    const Planef& src = linear.channel(c);
    Planef& dst = out.channel(c);
    for (Eigen::Index i = 0; i < src.size(); ++i) dst.data()[i] = srgb_encode(src.data()[i]);
  }
  return out;
}

Image3 srgb_decode(const Image3& display) {
  Image3 out(display.rows(), display.cols());
  for (int c = 0; c < 3; ++c) {
    const Planef& src = display.channel(c);
    Planef& dst = out.channel(c);
    for (Eigen::Index i = 0; i < src.size(); ++i) dst.data()[i] = srgb_decode(src.data()[i]);
  }
  return out;
}

Image3 to_display(const Image3& linear) { return srgb_encode(linear); }

std::uint64_t hash_u64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng Rng::child(std::uint64_t stream) const {
  return Rng(hash_u64(state_ ^ hash_u64(stream + 0x632be59bd9b4e019ull)));
}

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void parallel_for(Eigen::Index begin, Eigen::Index end, int threads,
                  const std::function<void(Eigen::Index)>& fn) {
  const Eigen::Index n = end - begin;
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (Eigen::Index i = begin; i < end; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<Eigen::Index>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const Eigen::Index lo = begin + n * w / workers;
    const Eigen::Index hi = begin + n * (w + 1) / workers;
    pool.emplace_back([lo, hi, &fn] {
      for (Eigen::Index i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace shadeharm
