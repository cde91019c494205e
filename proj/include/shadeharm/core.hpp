// Core dense raster types, frame conventions, and small shared utilities.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shadeharm {

template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Planef = Plane<float>;
using Planed = Plane<double>;
using Planeb = Plane<std::uint8_t>;

using Vec3f = Eigen::Vector3f;
using Vec3d = Eigen::Vector3d;

/// Planar three-channel raster. Values are linear radiance unless a function
/// documents otherwise (display-space helpers say so explicitly).
template <typename T>
struct Image3T {
  Plane<T> r, g, b;

  Image3T() = default;
  Image3T(Eigen::Index h, Eigen::Index w)
      : r(Plane<T>::Zero(h, w)), g(Plane<T>::Zero(h, w)), b(Plane<T>::Zero(h, w)) {}

  Eigen::Index rows() const { return r.rows(); }
  Eigen::Index cols() const { return r.cols(); }
  bool empty() const { return r.size() == 0; }

  Plane<T>& channel(int c) { return c == 0 ? r : (c == 1 ? g : b); }
  const Plane<T>& channel(int c) const { return c == 0 ? r : (c == 1 ? g : b); }

  bool same_size(const Image3T& o) const { return rows() == o.rows() && cols() == o.cols(); }

  static Image3T constant(Eigen::Index h, Eigen::Index w, T vr, T vg, T vb) {
    Image3T img;
    img.r = Plane<T>::Constant(h, w, vr);
    img.g = Plane<T>::Constant(h, w, vg);
    img.b = Plane<T>::Constant(h, w, vb);
    return img;
  }
};

using Image3 = Image3T<float>;
using LinearImage = Image3;

/// Binary foreground mask, optionally carrying the soft coverage band the
/// binary map was thresholded from (alpha >= 0.5 => m = 1).
struct Mask {
  Planeb m;      // {0,1}
  Planef alpha;  // optional coverage in [0,1]; empty when absent

  bool has_alpha() const { return alpha.size() > 0; }
  long count() const {
    long n = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) n += m.data()[i] != 0;
    return n;
  }
};

Mask mask_from_alpha(const Planef& alpha);
Mask mask_all_ones(Eigen::Index h, Eigen::Index w);

// Frame conventions.
//
// Camera space: +x right, +y down (image row direction), +z forward.
// World space:  +y zenith, azimuth 0 along +x, azimuth grows toward +z.
// The camera sits horizon-level looking along azimuth 0, so the change of
// basis is the self-inverse axis swap below. Every module that mixes camera
// geometry with environment directions relies on this single convention.
inline Vec3d cam_to_world(const Vec3d& v) { return {v.z(), -v.y(), v.x()}; }
inline Vec3d world_to_cam(const Vec3d& v) { return {v.z(), -v.y(), v.x()}; }

// sRGB transfer (IEC 61966-2-1). Encode clamps to [0,1].
float srgb_encode(float linear);
float srgb_decode(float srgb);
Image3 srgb_encode(const Image3& linear);
Image3 srgb_decode(const Image3& display);

/// Clamp to [0,1] and sRGB-encode; the display space all metrics live in.
Image3 to_display(const Image3& linear);

/// Deterministic splitmix64 generator. Used everywhere randomness is needed
/// so results are reproducible across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Child generator for an independent work item; does not advance *this.
  Rng child(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_int(0, i))]);
    }
  }

 private:
  std::uint64_t state_;
};

std::uint64_t hash_u64(std::uint64_t x);
std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

/// Run fn(i) for i in [begin, end). With threads <= 1 runs inline, otherwise
/// splits the range into contiguous blocks. Callers must only write to
/// disjoint per-i state, which keeps results independent of the thread count.
void parallel_for(Eigen::Index begin, Eigen::Index end, int threads,
                  const std::function<void(Eigen::Index)>& fn);

}  // namespace shadeharm
