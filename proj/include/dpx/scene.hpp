#pragma once

#include <cstddef>
#include <array>
#include <cstdint>

#include "dpx/metrics.hpp"
#include "dpx/tensor.hpp"

namespace dpx::scene {

struct SceneParams {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t num_classes = 4;
  std::size_t shapes = 5;   // foreground layers drawn over the background
  double noise_std = 0.05;  // additive RGB noise
  std::uint64_t seed = 0;

  bool operator==(const SceneParams&) const = default;
  /// Throws ConfigError when num_classes < 2 or the grid is empty.
  void validate() const;
};

/// Layered synthetic RGB-D scene. Layer 0 is the background (class 0, farthest);
/// layer l > 0 is a rectangle or ellipse of class 1 + (l - 1) mod (k - 1) with
/// constant depth 1 - l / (shapes + 1), painted in layer order.
struct SyntheticScene {
  SceneParams params;
  Tensor<double> rgb;               // [H x W x 3], class color plus noise
  Tensor<double> depth;             // [H x W x 1]
  metrics::SegmentationMap labels;  // [H x W]
  Tensor<std::int32_t> layers;      // [H x W], top-most layer index per pixel

  bool operator==(const SyntheticScene&) const = default;
};

SyntheticScene generate_scene(const SceneParams& params);

/// Depth assigned to layer `layer` of a scene with `shapes` foreground layers.
double layer_depth(std::size_t layer, std::size_t shapes);

/// Base color of a class: evenly spaced hues at full saturation.
std::array<double, 3> class_color(std::size_t cls, std::size_t num_classes);

}  // namespace dpx::scene
