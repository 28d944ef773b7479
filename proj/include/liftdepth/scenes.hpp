#pragma once

#include <thread>

#include "liftdepth/io.hpp"

namespace liftdepth {

// Rendered sample: RGB image in [0,1], metric depth, validity mask (1 = valid).
struct SceneSample {
  Tensor image;  // (3, H, W)
  Tensor depth;  // (H, W)
  Tensor mask;   // (H, W), values 0/1
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int objects_min = 2;
  int objects_max = 6;
  double d_near = 1.0;
  double d_far = 10.0;
  double albedo_min = 0.25;
  double albedo_max = 1.0;

  void validate() const {
    if (height <= 0 || width <= 0) throw ConfigError("SceneSpec: bad image size");
    if (objects_min < 0 || objects_max < objects_min)
      throw ConfigError("SceneSpec: bad object count range");
    if (d_near <= 0.0 || d_far <= d_near) throw ConfigError("SceneSpec: bad depth range");
    if (albedo_min < 0.0 || albedo_max > 1.0 || albedo_max < albedo_min)
      throw ConfigError("SceneSpec: bad albedo range");
  }
};

// Renders seeded-random fronto-parallel rectangles over a background plane at
// d_far. Occlusion is nearest-wins per pixel; intensity is the surface albedo
// attenuated by d_near/depth so that depth is visually inferable. Fully
// deterministic per seed.
inline SceneSample generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  int h = spec.height, w = spec.width, plane = h * w;

  SceneSample s;
  s.image = Tensor::zeros({3, h, w});
  s.depth = Tensor::full({h, w}, spec.d_far);
  s.mask = Tensor::full({h, w}, 1.0);

  double bg_albedo[3];
  for (double& a : bg_albedo) a = rng.uniform(spec.albedo_min, spec.albedo_max);
  double bg_shade = spec.d_near / spec.d_far;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < plane; ++i) s.image[c * plane + i] = bg_albedo[c] * bg_shade;

  int count = rng.uniform_int(spec.objects_min, spec.objects_max);
  for (int k = 0; k < count; ++k) {
    double depth = rng.uniform(spec.d_near, spec.d_far);
    int rw = rng.uniform_int(std::max(1, w / 8), std::max(2, w / 2));
    int rh = rng.uniform_int(std::max(1, h / 8), std::max(2, h / 2));
    int x0 = rng.uniform_int(0, std::max(0, w - rw));
    int y0 = rng.uniform_int(0, std::max(0, h - rh));
    double albedo[3];
    for (double& a : albedo) a = rng.uniform(spec.albedo_min, spec.albedo_max);
    double shade = spec.d_near / depth;
    for (int y = y0; y < y0 + rh && y < h; ++y)
      for (int x = x0; x < x0 + rw && x < w; ++x) {
        int i = y * w + x;
        if (depth < s.depth[i]) {
          s.depth[i] = depth;
          for (int c = 0; c < 3; ++c) s.image[c * plane + i] = albedo[c] * shade;
        }
      }
  }
  return s;
}

inline Tensor flip_lr(const Tensor& t) {
  if (t.rank() == 2) {
    int h = t.dim(0), w = t.dim(1);
    Tensor out = Tensor::zeros(t.shape());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out[y * w + x] = t[y * w + (w - 1 - x)];
    return out;
  }
  detail::check_rank(t, 3, "flip_lr");
  int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor out = Tensor::zeros(t.shape());
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[(ch * h + y) * w + x] = t[(ch * h + y) * w + (w - 1 - x)];
  return out;
}

// ---------------------------------------------------------------------------
// dataset directory layout: NNNN.ppm + NNNN.pfm (+ optional NNNN.mask.pfm)
// and a manifest listing the per-sample seeds.
// ---------------------------------------------------------------------------

inline std::string sample_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", index);
  return buf;
}

// Writes `count` samples drawn from per-sample seeds spec.seed + index.
// Generation is independent per sample, so extra workers only shard work.
inline void generate_dataset(const SceneSpec& spec, int count, const std::string& dir,
                             int workers = 1) {
  spec.validate();
  if (count < 0) throw ConfigError("generate_dataset: negative count");
  std::filesystem::create_directories(dir);
  auto emit = [&](int index) {
    SceneSpec one = spec;
    one.seed = spec.seed + std::uint64_t(index);
    SceneSample s = generate_scene(one);
    std::string stem = dir + "/" + sample_stem(index);
    write_ppm(s.image, stem + ".ppm");
    write_pfm(s.depth, stem + ".pfm");
  };
  workers = std::max(1, workers);
  if (workers == 1 || count < 2) {
    for (int i = 0; i < count; ++i) emit(i);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&, t]() {
        for (int i = t; i < count; i += workers) emit(i);
      });
    for (auto& th : pool) th.join();
  }
  std::string manifest;
  for (int i = 0; i < count; ++i)
    manifest += sample_stem(i) + " " + std::to_string(spec.seed + std::uint64_t(i)) + "\n";
  detail::write_file(dir + "/manifest.txt", manifest);
}

// Loads every sample listed in the manifest. A missing mask file means all
// pixels are valid.
inline std::vector<SceneSample> load_dataset(const std::string& dir) {
  std::string manifest = detail::read_file(dir + "/manifest.txt");
  std::vector<SceneSample> out;
  std::size_t pos = 0;
  while (pos < manifest.size()) {
    std::size_t eol = manifest.find('\n', pos);
    if (eol == std::string::npos) eol = manifest.size();
    std::string line = manifest.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::string stem = dir + "/" + line.substr(0, line.find(' '));
    SceneSample s;
    s.image = read_ppm(stem + ".ppm");
    s.depth = read_pfm(stem + ".pfm");
    if (std::filesystem::exists(stem + ".mask.pfm")) {
      Tensor m = read_pfm(stem + ".mask.pfm");
      s.mask = Tensor::zeros(m.shape());
      for (int i = 0; i < m.size(); ++i) s.mask[i] = m[i] > 0.5 ? 1.0 : 0.0;
    } else {
      s.mask = Tensor::full(s.depth.shape(), 1.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace liftdepth
