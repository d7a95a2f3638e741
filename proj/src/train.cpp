#include "dpx/train.hpp"

#include <cmath>
#include <string>

#include "dpx/error.hpp"
#include "dpx/metrics.hpp"
#include "dpx/params.hpp"

namespace dpx::train {

namespace {

struct Inputs {
  Tensor<float> rgb;    // [HW x 3]
  Tensor<float> depth;  // [HW x 1]
};

Inputs scene_inputs(const ModelConfig& cfg, const scene::SyntheticScene& sc) {
  const std::size_t h = cfg.encoder.height, w = cfg.encoder.width;
  if (sc.params.height != h || sc.params.width != w) {
    throw ConfigError("smoke-train: scene is " + std::to_string(sc.params.height) + "x" +
                      std::to_string(sc.params.width) + " but the model expects " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  if (sc.params.num_classes > cfg.num_classes) {
    throw ConfigError("smoke-train: scene has more classes than the model predicts");
  }
  return {sc.rgb.cast<float>().reshaped({h * w, 3}), sc.depth.cast<float>().reshaped({h * w, 1})};
}

StepRecord score(const Tensor<float>& logits, const scene::SyntheticScene& sc, std::size_t k, std::size_t step,
                 float loss) {
  const metrics::SegmentationMap pred{argmax_labels(logits, sc.params.height, sc.params.width)};
  const auto cm = metrics::confusion(sc.labels, pred, k);
  return {step, static_cast<double>(loss), metrics::miou(cm), metrics::macc(cm), metrics::pixel_acc(cm)};
}

}  // namespace

StepRecord evaluate(const Model<float>& m, const scene::SyntheticScene& sc, std::size_t step) {
  const Inputs in = scene_inputs(m.config, sc);
  const Tensor<float> logits = model_forward(m, in.rgb, in.depth);
  const auto l = cross_entropy(logits, sc.labels.labels);
  return score(logits, sc, m.config.num_classes, step, l.loss);
}

TrainResult smoke_train(const ModelConfig& cfg, const scene::SyntheticScene& sc, const TrainOptions& opts,
                        const std::function<void(const StepRecord&)>& on_step) {
  if (!(opts.learning_rate > 0.0) || !std::isfinite(opts.learning_rate)) {
    throw ConfigError("smoke-train: learning rate must be positive and finite");
  }
  Rng rng(opts.seed);
  Rng init_rng = rng.split(1);
  Rng drop_rng = rng.split(2);
  TrainResult r{{}, Model<float>::init(cfg, init_rng)};
  const Inputs in = scene_inputs(cfg, sc);
  const float lr = static_cast<float>(opts.learning_rate);

  for (std::size_t step = 0;; ++step) {
    ModelCache<float> cache;
    Tensor<float> logits;
    try {
      logits = model_forward(r.model, in.rgb, in.depth, &cache, &drop_rng);
    } catch (const DomainError& e) {
      // Non-finite activations only arise once the parameters have diverged.
      throw TrainingError("smoke-train: diverged at step " + std::to_string(step) + ": " + e.what());
    }
    const auto l = cross_entropy(logits, sc.labels.labels);
    if (!std::isfinite(l.loss)) {
      throw TrainingError("smoke-train: non-finite loss at step " + std::to_string(step));
    }
    r.log.push_back(score(logits, sc, cfg.num_classes, step, l.loss));
    if (on_step) on_step(r.log.back());
    if (step == opts.steps) break;
    auto grads = zeros_like_params<float>(r.model);
    model_backward(r.model, cache, l.grad, grads);
    sgd_step<float>(r.model, grads, lr);
  }
  return r;
}

}  // namespace dpx::train
