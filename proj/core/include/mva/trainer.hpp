#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mva/config.hpp"
#include "mva/encoder.hpp"
#include "mva/retrieval.hpp"
#include "mva/synthdata.hpp"

namespace mva {

/// Pooled, projected video feature in the joint space.
Tensor video_embedding(const ModelState& state, const std::vector<Tensor>& frames, bool adapters_enabled);
/// Projected text feature in the joint space.
Tensor text_embedding(const ModelState& state, const std::vector<int>& tokens, bool adapters_enabled);

/// Symmetric contrastive loss over one batch. The effective temperature is
/// the current value of the model's tau parameter (clamped by the caller),
/// and gradients flow into it when a graph is active. `weight_t2v` scales the
/// text-to-video cross-entropy term (1 = symmetric loss).
Tensor batch_loss(const ModelState& state, const Dataset& data, const std::vector<int>& batch_indices,
                  double weight_t2v = 1.0);

struct StepLog {
  std::int64_t step = 0;
  double loss = 0.0;
  double tau_eff = 0.0;
  double cap = 0.0;
};

struct TrainResult {
  std::vector<StepLog> log;
  /// `step loss tau cap` lines with 6-decimal floats.
  std::string log_text() const;
};

/// Adam over the tunable set only, with the decreasing temperature cap.
/// Frozen buffers are never touched. Throws on a non-finite loss, naming the
/// step.
TrainResult train(ModelState& state, const Dataset& data, const std::vector<int>& train_indices,
                  const TrainSettings& cfg);

/// Offline per-modality features, then full similarity matrices in both
/// directions with identity ground truth over `indices`.
std::pair<MetricsReport, MetricsReport> evaluate(const ModelState& state, const Dataset& data,
                                                 const std::vector<int>& indices);

struct ParamReport {
  std::int64_t total = 0;
  std::int64_t tunable = 0;
  double ratio_percent = 0.0;
  std::vector<std::pair<std::string, std::int64_t>> breakdown;  // category -> scalar count
};

ParamReport count_params(const EncoderConfig& enc, const AdapterConfig& ad);
std::string format_param_report(const ParamReport& report);

/// Storage units relative to one backbone: 1 + tasks * ratio with a shared
/// backbone, tasks * 1 when every task stores a full model.
double storage_units(int n_tasks, double ratio, bool shared_backbone);

/// Adapter-only checkpoint: canonical config text (+ its FNV-1a hash), the
/// tunable tensors, trailing CRC32. The backbone is regenerated from the
/// config seed on load.
void save_checkpoint(const ModelState& state, const RunConfig& config, const std::string& path);

struct Checkpoint {
  RunConfig config;
  ModelState state;
};
Checkpoint load_checkpoint(const std::string& path);

/// Deep copy: cloned buffers, so mutations no longer alias.
ModelState clone_state(const ModelState& state);

/// Central-difference check of the full model's analytic gradients on a
/// 2-sample batch derived from the config. Parameter shards may run on
/// several threads; the result is identical for any thread count.
double model_gradcheck(const RunConfig& config, double eps, int threads = 0);

}  // namespace mva
