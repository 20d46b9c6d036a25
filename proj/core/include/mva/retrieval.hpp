#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mva/tensor.hpp"

namespace mva {

/// Decreasing upper bound for the learnable temperature. The effective
/// temperature at any step is clamp(tau, 1, cap(step)).
struct TauSchedule {
  enum class Shape { Linear, Constant };
  double cap_start = 100.0;
  double cap_end = 20.0;
  std::int64_t total_steps = 0;
  Shape shape = Shape::Linear;
};

TauSchedule::Shape parse_tau_shape(const std::string& name);
std::string tau_shape_name(TauSchedule::Shape shape);

/// cap(step) = cap_start - (cap_start - cap_end) * min(1, step/total_steps)
/// for the linear shape; cap_start for the constant shape. total_steps == 0
/// pins the linear cap at cap_end everywhere.
double tau_cap(std::int64_t step, const TauSchedule& schedule);

/// Mean over frames of per-frame [CLS] features: |v| x d -> d.
Tensor pool_video(const Tensor& frame_cls);

/// tau_eff * cosine(e_v, e_t). Rejects zero-norm vectors.
Tensor similarity(const Tensor& e_v, const Tensor& e_t, double tau_eff);

/// Symmetric cross-entropy over a square similarity matrix with the diagonal
/// as ground truth: (row CE + column CE) / 2.
Tensor contrastive_loss(const Tensor& sim);

struct MetricsReport {
  std::string direction;  // "T2V" or "V2T"
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
  double mean = 0.0;
};

/// Ranks the gallery per query by descending similarity, stable by gallery
/// index; ties with the ground truth count as a miss unless the ground-truth
/// index wins the stable order. R@K for K > gallery size is 100 by
/// definition (a warning goes to stderr).
MetricsReport recall_at_k(const std::vector<double>& sim, int queries, int gallery,
                          const std::vector<int>& ground_truth, const std::string& direction);

/// Line format: `direction R@1 R@5 R@10 mean`, fixed 2-decimal fields.
std::string format_metrics(const MetricsReport& report);

}  // namespace mva
