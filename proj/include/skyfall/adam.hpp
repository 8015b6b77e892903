#pragma once

#include <span>
#include <vector>

#include "skyfall/lstm.hpp"
#include "skyfall/tape.hpp"

namespace skyfall::diff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment slots are keyed by position in the
// parameter list, which must stay stable across steps.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<const ParamRef> params, std::span<const Mat* const> grads);

  long steps_taken() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Mat> m_, v_;
  long step_ = 0;
};

}  // namespace skyfall::diff
