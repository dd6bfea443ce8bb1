#pragma once

#include <string>
#include <vector>

#include "latcast/model.hpp"

// Central finite-difference validation of the analytic BPTT gradients on a
// small model. The loss under test is the full train-mode path (dropout mask
// included; the mask rng is reseeded per evaluation so the loss stays a
// deterministic function of the weights).

namespace latcast {

struct GradCheckRow {
  std::string name;
  Index size = 0;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;  // one per parameter tensor
  double max_rel_err = 0.0;
  std::string worst_param;

  bool pass(double threshold = 1e-3) const { return max_rel_err < threshold; }
};

// The small reference geometry: 2 units, lookback 5, input_dim 3,
// dropout 0.2, seed as given.
ModelConfig gradcheck_model_config(std::uint64_t seed = 7);

// Relative error is |analytic - numeric| / (|analytic| + 1e-8), central
// differences with the given epsilon. `corrupt` perturbs one analytic
// gradient entry so harness failures are detectable (test hook).
GradCheckReport run_gradient_check(const ModelConfig& cfg,
                                   double epsilon = 1e-4,
                                   bool corrupt = false);

}  // namespace latcast
