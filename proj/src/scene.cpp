#include "dpx/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpx/error.hpp"
#include "dpx/rng.hpp"

namespace dpx::scene {

void SceneParams::validate() const {
  if (num_classes < 2) throw ConfigError("scene: num_classes must be >= 2, got " + std::to_string(num_classes));
  if (height == 0 || width == 0) throw ConfigError("scene: grid must be non-empty");
  if (height * width < 2) throw ConfigError("scene: grid needs at least two pixels");
  if (!(noise_std >= 0.0)) throw ConfigError("scene: noise_std must be >= 0");
}

double layer_depth(std::size_t layer, std::size_t shapes) {
  return 1.0 - static_cast<double>(layer) / static_cast<double>(shapes + 1);
}

std::array<double, 3> class_color(std::size_t cls, std::size_t num_classes) {
  const double h = 6.0 * static_cast<double>(cls) / static_cast<double>(num_classes);
  const double sector = std::floor(h);
  const double f = h - sector;
  switch (static_cast<int>(sector) % 6) {
    case 0: return {1.0, f, 0.0};
    case 1: return {1.0 - f, 1.0, 0.0};
    case 2: return {0.0, 1.0, f};
    case 3: return {0.0, 1.0 - f, 1.0};
    case 4: return {f, 0.0, 1.0};
    default: return {1.0, 0.0, 1.0 - f};
  }
}

namespace {

struct Shape2d {
  bool ellipse;
  double cy, cx, ry, rx;

  bool covers(std::size_t y, std::size_t x) const {
    const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
    const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
    if (ellipse) return dy * dy + dx * dx <= 1.0;
    return std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
  }
};

// Radii lie in [1/8, 1/3] of the extent, so a shape never covers the whole grid
// and always covers its own centre pixel.
Shape2d random_shape(Rng& rng, std::size_t h, std::size_t w) {
  Shape2d s;
  s.ellipse = rng.below(2) == 1;
  const double hh = static_cast<double>(h), ww = static_cast<double>(w);
  s.ry = std::max(0.5, rng.uniform(hh / 8.0, hh / 3.0));
  s.rx = std::max(0.5, rng.uniform(ww / 8.0, ww / 3.0));
  s.cy = static_cast<double>(rng.below(h)) + 0.5;
  s.cx = static_cast<double>(rng.below(w)) + 0.5;
  return s;
}

}  // namespace

SyntheticScene generate_scene(const SceneParams& params) {
  params.validate();
  const std::size_t h = params.height, w = params.width, k = params.num_classes;
  SyntheticScene sc;
  sc.params = params;
  sc.layers = Tensor<std::int32_t>({h, w});
  Rng geometry = Rng(params.seed).split(1);
  Rng noise = Rng(params.seed).split(2);

  for (std::size_t l = 1; l <= params.shapes; ++l) {
    const Shape2d s = random_shape(geometry, h, w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if (s.covers(y, x)) sc.layers.at(y, x) = static_cast<std::int32_t>(l);
  }
  // The background must stay visible. A grid small enough to be fully covered
  // gives its first pixel back to layer 0.
  if (std::none_of(sc.layers.data().begin(), sc.layers.data().end(), [](std::int32_t v) { return v == 0; })) {
    sc.layers[0] = 0;
  }

  sc.labels.labels = Tensor<std::int32_t>({h, w});
  sc.depth = Tensor<double>({h, w, 1});
  sc.rgb = Tensor<double>({h, w, 3});
  for (std::size_t i = 0; i < h * w; ++i) {
    const auto l = static_cast<std::size_t>(sc.layers[i]);
    const std::size_t cls = l == 0 ? 0 : 1 + (l - 1) % (k - 1);
    sc.labels.labels[i] = static_cast<std::int32_t>(cls);
    sc.depth[i] = layer_depth(l, params.shapes);
    const auto color = class_color(cls, k);
    for (std::size_t c = 0; c < 3; ++c) sc.rgb[i * 3 + c] = color[c] + params.noise_std * noise.normal();
  }
  return sc;
}

}  // namespace dpx::scene
