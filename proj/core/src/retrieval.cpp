#include "mva/retrieval.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mva/ops.hpp"

namespace mva {

TauSchedule::Shape parse_tau_shape(const std::string& name) {
  if (name == "linear") return TauSchedule::Shape::Linear;
  if (name == "constant") return TauSchedule::Shape::Constant;
  throw std::invalid_argument("unknown tau cap shape: " + name);
}

std::string tau_shape_name(TauSchedule::Shape shape) {
  return shape == TauSchedule::Shape::Linear ? "linear" : "constant";
}

double tau_cap(std::int64_t step, const TauSchedule& schedule) {
  if (step < 0) throw std::invalid_argument("tau_cap: step must be nonnegative");
  if (schedule.shape == TauSchedule::Shape::Constant) return schedule.cap_start;
  if (schedule.total_steps <= 0) return schedule.cap_end;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  const double clamped = frac < 1.0 ? frac : 1.0;
  return schedule.cap_start - (schedule.cap_start - schedule.cap_end) * clamped;
}

Tensor pool_video(const Tensor& frame_cls) {
  if (frame_cls.rank() != 2 || frame_cls.shape[0] < 1) {
    throw std::invalid_argument("pool_video: |v| x d matrix required, got " + shape_str(frame_cls.shape));
  }
  return mean(frame_cls, 0);
}

Tensor similarity(const Tensor& e_v, const Tensor& e_t, double tau_eff) {
  if (e_v.rank() != 1 || e_t.rank() != 1 || e_v.shape[0] != e_t.shape[0]) {
    throw std::invalid_argument("similarity: matching vectors required, got " + shape_str(e_v.shape) + " and " +
                                shape_str(e_t.shape));
  }
  const int d = e_v.shape[0];
  Tensor nv = l2_normalize(reshape(e_v, {1, d}));
  Tensor nt = l2_normalize(reshape(e_t, {1, d}));
  return reshape(scale(matmul(nv, transpose(nt)), tau_eff), {});
}

Tensor contrastive_loss(const Tensor& sim) {
  if (sim.rank() != 2 || sim.shape[0] != sim.shape[1]) {
    throw std::invalid_argument("contrastive_loss: square matrix required, got " + shape_str(sim.shape));
  }
  const int b = sim.shape[0];
  std::vector<int> diag(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) diag[static_cast<std::size_t>(i)] = i;
  Tensor row_ce = cross_entropy(sim, diag);
  Tensor col_ce = cross_entropy(transpose(sim), diag);
  return scale(add(row_ce, col_ce), 0.5);
}

MetricsReport recall_at_k(const std::vector<double>& sim, int queries, int gallery,
                          const std::vector<int>& ground_truth, const std::string& direction) {
  if (queries <= 0 || gallery <= 0 || static_cast<std::int64_t>(sim.size()) != static_cast<std::int64_t>(queries) * gallery) {
    throw std::invalid_argument("recall_at_k: similarity size " + std::to_string(sim.size()) + " does not match " +
                                std::to_string(queries) + "x" + std::to_string(gallery));
  }
  if (static_cast<int>(ground_truth.size()) != queries) {
    throw std::invalid_argument("recall_at_k: ground truth size " + std::to_string(ground_truth.size()) +
                                " does not match query count " + std::to_string(queries));
  }
  std::vector<bool> seen(static_cast<std::size_t>(gallery), false);
  for (int g : ground_truth) {
    if (g < 0 || g >= gallery) throw std::invalid_argument("recall_at_k: ground truth index " + std::to_string(g) + " out of range");
    if (seen[static_cast<std::size_t>(g)]) throw std::invalid_argument("recall_at_k: ground truth must be injective");
    seen[static_cast<std::size_t>(g)] = true;
  }

  const int ks[3] = {1, 5, 10};
  double hits[3] = {0.0, 0.0, 0.0};
  for (int q = 0; q < queries; ++q) {
    const double* row = sim.data() + static_cast<std::int64_t>(q) * gallery;
    const int gt = ground_truth[static_cast<std::size_t>(q)];
    const double gt_score = row[gt];
    // Rank under descending sort, stable by gallery index.
    int rank = 1;
    for (int j = 0; j < gallery; ++j) {
      if (row[j] > gt_score || (row[j] == gt_score && j < gt)) ++rank;
    }
    for (int ki = 0; ki < 3; ++ki) {
      if (rank <= ks[ki]) hits[ki] += 1.0;
    }
  }
  for (int ki = 0; ki < 3; ++ki) {
    if (ks[ki] > gallery) {
      std::fprintf(stderr, "warning: R@%d with gallery of %d is 100 by definition\n", ks[ki], gallery);
      hits[ki] = queries;
    }
  }
  MetricsReport r;
  r.direction = direction;
  r.r1 = 100.0 * hits[0] / queries;
  r.r5 = 100.0 * hits[1] / queries;
  r.r10 = 100.0 * hits[2] / queries;
  r.mean = (r.r1 + r.r5 + r.r10) / 3.0;
  return r;
}

std::string format_metrics(const MetricsReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s %.2f %.2f %.2f %.2f", report.direction.c_str(), report.r1, report.r5, report.r10,
                report.mean);
  return std::string(buf);
}

}  // namespace mva
