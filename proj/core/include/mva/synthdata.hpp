#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mva/tensor.hpp"

namespace mva {

/// Synthetic video-text pairs whose order bit is decodable only from frame
/// order. Samples come in clip twins: sample 2j plays clip j forward, sample
/// 2j+1 plays the same clip reversed (identical frames before noise), and
/// both texts share the clip's identity tokens. Any frame-permutation-
/// invariant video feature therefore collapses each twin, while appearance
/// and clip identity stay separable without temporal reasoning.
struct DatasetSpec {
  int n_pairs = 256;  // video-text pairs; two per clip, so must be even
  int appearance_classes = 4;
  int order_classes = 2;  // forward / reversed
  int frames = 4;         // |v|
  int patches = 16;       // N_P
  int patch_dim = 12;
  double noise_std = 0.1;
  int template_len = 8;   // stored token count, padded
  std::uint64_t seed = 0;
};

struct SampleLabels {
  int appearance = 0;
  int order = 0;  // 0 forward, 1 reversed
};

struct VideoTextSample {
  std::vector<Tensor> frames;  // |v| grids of patches x patch_dim
  std::vector<int> tokens;     // template_len ids
  SampleLabels labels;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<VideoTextSample> samples;
};

// Token id layout: PAD, BOS, EOS, then appearance, order and clip-code
// alphabets in that order.
constexpr int kTokenPad = 0;
constexpr int kTokenBos = 1;
constexpr int kTokenEos = 2;
constexpr int kSpecialTokens = 3;

/// Side of the square clip-code alphabet for a given pair count.
int code_alphabet(int n_pairs);
/// Largest token id + 1 produced by a spec.
int vocab_required(const DatasetSpec& spec);

/// Deterministic generation; rejects specs whose token ids would not fit in
/// `vocab_limit`.
Dataset generate_dataset(const DatasetSpec& spec, int vocab_limit);

/// Bit-exact binary format: magic "MVAD", version, header, per-sample frame
/// and token payloads, trailing CRC32.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Reorders (or uniformly subsamples) frames; labels are unchanged. The index
/// list must be injective and in range; a full-length list must be a
/// permutation.
VideoTextSample permute_frames(const VideoTextSample& sample, const std::vector<int>& indices);

/// floor(k * from / to) for k in [0, to): the uniform selection rule.
std::vector<int> uniform_subsample_indices(int from, int to);

/// Seed-stable 75/25 split at clip granularity: twins never straddle the
/// boundary. Outputs are sorted sample indices.
void split_dataset(const Dataset& dataset, std::vector<int>& train_indices, std::vector<int>& test_indices);

}  // namespace mva
