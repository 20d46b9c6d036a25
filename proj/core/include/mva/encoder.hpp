#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mva/adapters.hpp"
#include "mva/init.hpp"
#include "mva/tensor.hpp"

namespace mva {

/// Token id 0 is reserved for padding; padded positions are masked out of
/// text attention.
constexpr int kPadTokenId = 0;

struct EncoderConfig {
  int d_v = 48;
  int d_t = 32;
  int embed_dim = 32;   // joint retrieval space; both modalities project into it
  int layers = 2;
  int heads = 2;
  int patches = 16;     // N_P, tokens per frame before [CLS]
  int patch_dim = 12;   // raw patch vector length
  int vocab_size = 64;
  int max_text_len = 8;
  int max_frames = 4;
  int ffn_mult = 4;
};

struct ParamSpec {
  std::string path;
  std::vector<int> shape;
  bool tunable = false;
  std::string category;  // backbone.vision | backbone.text | backbone.proj | down | trm | up | calibration | cmi | tau
  InitScheme scheme = InitScheme::Zeros;
};

/// Every parameter tensor of the model, in a fixed deterministic order. The
/// single source of truth shared by construction and parameter accounting.
std::vector<ParamSpec> enumerate_params(const EncoderConfig& enc, const AdapterConfig& ad);

void validate_configs(const EncoderConfig& enc, const AdapterConfig& ad);

struct ModelState {
  EncoderConfig enc;
  AdapterConfig adapter;
  std::map<std::string, Tensor> params;
  std::vector<std::string> tunable;  // sorted parameter paths the optimizer may touch

  const Tensor& param(const std::string& path) const;
  bool is_tunable(const std::string& path) const;
  std::vector<std::pair<std::string, Tensor>> tunable_params() const;
};

/// Builds the frozen backbone plus adapter parameters from the seed. Every
/// parameter derives its init substream from (seed, path), so the same seed
/// reproduces the model bit for bit.
ModelState build_model(const EncoderConfig& enc, const AdapterConfig& ad, std::uint64_t seed,
                       double tau_init = 2.0);

/// The set of parameter paths the optimizer may update.
std::vector<std::string> build_freeze_mask(const ModelState& state);

/// Per-frame [CLS] features after the final block: |v| x d_v. Each frame is
/// an N_P x patch_dim grid. With adapters enabled the video branch sees all
/// frames' FFN outputs jointly inside every equipped block.
Tensor encode_frames(const ModelState& state, const std::vector<Tensor>& frames, bool adapters_enabled);

/// Feature of the terminal (last padded) position after the final block: d_t.
Tensor encode_text(const ModelState& state, const std::vector<int>& tokens, bool adapter_enabled);

/// Frozen projections into the joint retrieval space.
Tensor project_video(const ModelState& state, const Tensor& pooled);  // d_v -> embed_dim
Tensor project_text(const ModelState& state, const Tensor& feature);  // d_t -> embed_dim

}  // namespace mva
