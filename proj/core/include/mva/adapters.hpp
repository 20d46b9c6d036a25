#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mva/tensor.hpp"

namespace mva {

enum class AdapterKind { None, Mv, AdaptMlpParallel, AdaptMlpSequential };

AdapterKind parse_adapter_kind(const std::string& name);
std::string adapter_kind_name(AdapterKind kind);

/// Hyperparameters of the adapter branches mounted after each block's FFN.
struct AdapterConfig {
  AdapterKind kind = AdapterKind::Mv;
  int bottleneck = 8;     // d', width after Downsample
  double scale = 0.1;     // s, output scalar
  int shrinkage = 4;      // sigma, calibration hidden width is d'/sigma
  int trm_heads = 2;
  int trm_ffn_mult = 2;
  std::vector<int> blocks;      // equipped block indices (must be explicit; see expand helpers in config)
  bool cmi_enabled = true;
  std::vector<int> cmi_layers;  // blocks whose downsample comes from the shared space
  int cmi_rows = 4;             // m
  int cmi_cols = 2;             // n
};

/// One pre-norm transformer layer used inside every branch.
struct TrmParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;
};

struct TextBranchParams {
  Tensor w_down;  // d_t x d' (possibly CMI-materialized)
  Tensor w_up;    // d' x d_t
  TrmParams trm;
};

struct VideoBranchParams {
  Tensor w_down;  // d_v x d' (possibly CMI-materialized), shared by [CLS] and patches
  Tensor w_up;    // d' x d_v
  Tensor cc;      // d', learnable token appended to the frame-[CLS] sequence
  Tensor fc1_w, fc1_b;  // 2d' x (d'/sigma)
  Tensor fc2_w, fc2_b;  // (d'/sigma) x d'
  TrmParams trm;
};

struct AdaptMlpParams {
  Tensor w_down;
  Tensor w_up;
};

/// Pre-norm self-attention + FFN with residuals over an M x d token matrix.
/// Without a causal mask the block is permutation-equivariant; with one,
/// token i attends only to tokens <= i.
Tensor trm_forward(const Tensor& tokens, const TrmParams& p, int heads, bool causal = false);

/// Basic bottleneck branch over word tokens: s * TRM(x W_down) W_up.
Tensor text_branch_forward(const Tensor& x, const TextBranchParams& p, double s, int trm_heads);

/// Appends the learnable token to the downsampled frame-[CLS] sequence and
/// runs the TRM across frames under a causal playback-order mask, so frame
/// order can reach the pooled video feature; the appended token sits last and
/// sees every frame. Returns (adapted [CLS] rows |v| x d', global token d').
std::pair<Tensor, Tensor> temporal_cls_adapt(const Tensor& cls_tokens, const Tensor& cc, const TrmParams& trm,
                                             int heads);

/// Two-layer calibration MLP over concat(global token, frame token).
Tensor calibration_weights(const Tensor& hat_cc, const Tensor& hat_cls_i, const Tensor& fc1_w, const Tensor& fc1_b,
                           const Tensor& fc2_w, const Tensor& fc2_b);

/// Row-wise upsample calibration: row r of the result is alpha[r] * row r.
Tensor calibrate_upsample(const Tensor& w_up, const Tensor& alpha);

/// Full video branch over all frames' FFN outputs (each (N_P+1) x d_v):
/// shared downsample, temporal adaptation of the [CLS] sequence, per-frame
/// calibrated upsampling of patches. Output matches the input layout and is
/// added to the FFN output by the caller.
std::vector<Tensor> video_branch_forward(const std::vector<Tensor>& frames_ffn_out, const VideoBranchParams& p,
                                         double s, int trm_heads);

/// AdaptMLP baseline: s * ReLU(x W_down) W_up, applied frame-independently.
Tensor adaptmlp_forward(const Tensor& x, const AdaptMlpParams& p, double s);

}  // namespace mva
