// Synthetic dataset construction: analytic primitive scenes rendered under
// environment lighting, background crops from a virtual camera, object
// placement, and paired unharmonized/harmonized tuple building.
#pragma once

#include "shadeharm/envlight.hpp"
#include "shadeharm/harmonize.hpp"
#include "shadeharm/shading.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace shadeharm {

struct Material {
  Vec3f color_a = Vec3f(0.7f, 0.7f, 0.7f);
  Vec3f color_b = Vec3f(0.2f, 0.2f, 0.2f);  // second checker color
  float checker_size = 0.0f;                // meters; 0 = solid color_a

  Vec3f albedo_at(const Vec3d& world_pos) const;
};

struct Primitive {
  enum class Shape { Sphere, Box, Capsule };

  Shape shape = Shape::Sphere;
  Vec3d position = Vec3d::Zero();  // sphere/capsule: bottom rests at position.y
  Vec3d size = Vec3d(0.3, 0.3, 0.3);  // sphere: x=radius; box: half extents;
                                      // capsule: x=radius, y=cylinder half length
  double yaw_deg = 0.0;               // boxes only
  Material material;
};

/// Camera position; orientation is the project-wide fixed frame (horizon
/// level, looking along azimuth 0). Objects rest on the world plane y = 0.
struct CameraSpec {
  Intrinsics intrinsics;  // defined at intrinsics.width x height, rescaled on render
  Vec3d eye = Vec3d(-2.2, 0.7, 0.0);
};

struct SceneSpec {
  std::string id;
  std::vector<Primitive> primitives;
  Material ground;  // reserved for the world plane; not part of object rasters
  CameraSpec camera;
};

struct RenderedObject {
  LinearImage image;
  Shading shading;
  Albedo albedo;
  DepthMap depth;
  NormalMap normals;
  Mask mask;
  Intrinsics intrinsics;
  Eigen::Vector4d ground_plane_cam = Eigen::Vector4d::Zero();
};

/// Primary-ray pass only: analytic depth/normals/albedo/mask (no shading).
RenderedObject render_geometry(const SceneSpec& scene, const Intrinsics& intr, int threads = 1);

/// Full per-object ground truth under env rotated by rotation_deg (must be a
/// multiple of 45). Shading is the dense reference renderer; image is
/// albedo * shading. All rasters share out_size.
RenderedObject render_object(const SceneSpec& scene, const EnvMap& env, double rotation_deg,
                             int out_w, int out_h, const ShadowConfig& cfg, int threads = 1,
                             const std::optional<Intrinsics>& intrinsics_override = std::nullopt);

/// Perspective crop of the environment at the given yaw (pitch 0), bilinear
/// sampling, horizontal fov in (0, 180).
LinearImage crop_background(const EnvMap& env, double yaw_deg, double fov_deg,
                            int out_w, int out_h);

/// Ground-plane regions of a background crop, polygons in normalized [0,1]^2
/// crop coordinates.
struct PlanarAnnotation {
  std::vector<std::vector<Eigen::Vector2d>> polygons;

  bool empty() const { return polygons.empty(); }
  /// Pixel centers inside any polygon (even-odd rule), row-major order.
  std::vector<Eigen::Vector2i> rasterize(int width, int height) const;
};

/// The default band just below the horizon used for procedural skies.
PlanarAnnotation default_horizon_annotation();

/// JSON file: { "<env_id>": [ [ [x,y], ... ], ... ], ... } with normalized coords.
std::map<std::string, PlanarAnnotation> load_annotations(const std::string& path);

struct Placement {
  Eigen::Vector2i target;       // annotated pixel the reference corner lands on
  double scale = 1.0;           // resize factor applied to the cropped object
  double scale_fraction = 0.0;  // drawn u: scaled height = u * bg height
  std::string corner = "bottom-left";
  Eigen::Vector2i paste;        // top-left of the scaled crop in the bg frame
  Eigen::Vector2i crop_origin;  // tight mask bbox in the source frame
  Eigen::Vector2i crop_size;
  Eigen::Vector2i scaled_size;
};

struct PlacedObject {
  LinearImage composite;
  Mask mask;
  Placement record;
};

/// Draw a placement: uniform target pixel over the annotation, scale fraction
/// u in [scale_min, scale_max] of the bg height, bottom-left reference corner.
/// Throws on an empty annotation or a scaled object smaller than 8 px.
Placement draw_placement(const Mask& fg_mask, int bg_w, int bg_h,
                         const PlanarAnnotation& annotation, Rng& rng,
                         double scale_min = 0.3, double scale_max = 0.8);

/// Bilinear resize + alpha composite of a rendered object crop onto a
/// background so the bottom-left corner lands on the drawn target pixel.
/// Deterministic for a fixed seed.
PlacedObject place_object(const LinearImage& fg_image, const Mask& fg_mask,
                          const LinearImage& bg, const PlanarAnnotation& annotation,
                          std::uint64_t rng_seed, double scale_min = 0.3,
                          double scale_max = 0.8);

struct ForgeEnv {
  std::string id;
  EnvMap map;
  std::string condition = "custom";
  PlanarAnnotation annotation = default_horizon_annotation();
};

struct ForgeConfig {
  int width = 640, height = 480;  // tuple raster size (paper-default 640x480)
  double fov_deg = 60.0;          // background crop fov
  ShadowConfig shadow;
  std::string split = "train";
  double scale_min = 0.3, scale_max = 0.8;
  int threads = 1;
};

struct TupleRecord {
  std::string id, dir, scene_id, env_id, src_env_id, condition, split;
  double rotation_deg = 0;
  Placement placement;
};

struct ForgeManifest {
  std::uint64_t seed = 0;
  ForgeConfig config;
  std::vector<std::string> env_ids, selected_env_ids;
  std::map<std::string, std::string> env_files;       // env id -> path relative to the root
  std::map<std::string, std::string> env_conditions;  // env id -> condition tag
  std::vector<TupleRecord> tuples;
};

/// Build the paired dataset under out_dir: half the envs are selected without
/// replacement; each (scene, selected env) pair draws 4 of the 8 multiples of
/// 45 degrees; the harmonized image renders under env E at that angle and the
/// unharmonized foreground renders under a uniformly drawn different env at
/// the same placement. Writes tuples/<id>/... , envs/<id>.pfm and
/// manifest.json; a pure function of (scenes, envs, seed).
ForgeManifest build_tuples(const std::vector<SceneSpec>& scenes, const std::vector<ForgeEnv>& envs,
                           std::uint64_t seed, const std::string& out_dir, const ForgeConfig& cfg);

ForgeManifest load_manifest(const std::string& path);

// Procedural content for the forge CLI: primitive scenes on the ground plane
// and skies spanning sunny / sunrise_sunset / cloudy / night conditions.
SceneSpec random_scene(Rng& rng, const std::string& id);
ForgeEnv random_sky(Rng& rng, const std::string& id, int env_w, int env_h);

}  // namespace shadeharm
