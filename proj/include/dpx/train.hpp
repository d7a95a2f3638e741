#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "dpx/model.hpp"
#include "dpx/scene.hpp"

namespace dpx::train {

struct TrainOptions {
  std::size_t steps = 500;
  double learning_rate = 0.15;
  std::uint64_t seed = 0;  // parameter init and drop-path draws
};

struct StepRecord {
  std::size_t step = 0;  // metrics of the parameters before update `step`
  double loss = 0;
  double miou = 0;
  double macc = 0;
  double pixel_acc = 0;
};

struct TrainResult {
  std::vector<StepRecord> log;  // steps + 1 records; the last one is after the final update
  Model<float> model;

  const StepRecord& final() const { return log.back(); }
};

/// Plain gradient descent on mean cross-entropy over one scene in single
/// precision. Throws TrainingError naming the step when the loss stops being finite.
TrainResult smoke_train(const ModelConfig& cfg, const scene::SyntheticScene& sc, const TrainOptions& opts,
                        const std::function<void(const StepRecord&)>& on_step = {});

/// Loss and metrics of `m` on the scene without updating anything.
StepRecord evaluate(const Model<float>& m, const scene::SyntheticScene& sc, std::size_t step = 0);

}  // namespace dpx::train
