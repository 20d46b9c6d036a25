#include "mva/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mva/cmi.hpp"
#include "mva/ops.hpp"

namespace mva {

namespace {

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

void append_trm_specs(std::vector<ParamSpec>& out, const std::string& prefix, int width, int ffn_mult) {
  auto push = [&](const char* name, std::vector<int> shape, InitScheme scheme) {
    out.push_back(ParamSpec{prefix + name, std::move(shape), true, "trm", scheme});
  };
  push("ln1.g", {width}, InitScheme::Ones);
  push("ln1.b", {width}, InitScheme::Zeros);
  push("attn.wq", {width, width}, InitScheme::ScaledNormal);
  push("attn.bq", {width}, InitScheme::Zeros);
  push("attn.wk", {width, width}, InitScheme::ScaledNormal);
  push("attn.bk", {width}, InitScheme::Zeros);
  push("attn.wv", {width, width}, InitScheme::ScaledNormal);
  push("attn.bv", {width}, InitScheme::Zeros);
  push("attn.wo", {width, width}, InitScheme::ScaledNormal);
  push("attn.bo", {width}, InitScheme::Zeros);
  push("ln2.g", {width}, InitScheme::Ones);
  push("ln2.b", {width}, InitScheme::Zeros);
  push("ffn.w1", {width, ffn_mult * width}, InitScheme::ScaledNormal);
  push("ffn.b1", {ffn_mult * width}, InitScheme::Zeros);
  push("ffn.w2", {ffn_mult * width, width}, InitScheme::ScaledNormal);
  push("ffn.b2", {width}, InitScheme::Zeros);
}

void append_backbone_block_specs(std::vector<ParamSpec>& out, const std::string& prefix, const std::string& category,
                                 int width, int ffn_mult) {
  auto push = [&](const char* name, std::vector<int> shape, InitScheme scheme) {
    out.push_back(ParamSpec{prefix + name, std::move(shape), false, category, scheme});
  };
  push("ln1.g", {width}, InitScheme::Ones);
  push("ln1.b", {width}, InitScheme::Zeros);
  push("attn.wq", {width, width}, InitScheme::ScaledNormal);
  push("attn.bq", {width}, InitScheme::Zeros);
  push("attn.wk", {width, width}, InitScheme::ScaledNormal);
  push("attn.bk", {width}, InitScheme::Zeros);
  push("attn.wv", {width, width}, InitScheme::ScaledNormal);
  push("attn.bv", {width}, InitScheme::Zeros);
  push("attn.wo", {width, width}, InitScheme::ScaledNormal);
  push("attn.bo", {width}, InitScheme::Zeros);
  push("ln2.g", {width}, InitScheme::Ones);
  push("ln2.b", {width}, InitScheme::Zeros);
  push("ffn.w1", {width, ffn_mult * width}, InitScheme::ScaledNormal);
  push("ffn.b1", {ffn_mult * width}, InitScheme::Zeros);
  push("ffn.w2", {ffn_mult * width, width}, InitScheme::ScaledNormal);
  push("ffn.b2", {width}, InitScheme::Zeros);
}

}  // namespace

void validate_configs(const EncoderConfig& enc, const AdapterConfig& ad) {
  auto bad = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (enc.d_v <= 0 || enc.d_t <= 0 || enc.embed_dim <= 0 || enc.layers <= 0 || enc.heads <= 0 || enc.patches <= 0 ||
      enc.patch_dim <= 0 || enc.vocab_size <= 1 || enc.max_text_len <= 0 || enc.max_frames <= 0 || enc.ffn_mult <= 0) {
    bad("encoder dimensions must be positive");
  }
  if (enc.d_v % enc.heads != 0) bad("d_v=" + std::to_string(enc.d_v) + " not divisible by heads=" + std::to_string(enc.heads));
  if (enc.d_t % enc.heads != 0) bad("d_t=" + std::to_string(enc.d_t) + " not divisible by heads=" + std::to_string(enc.heads));

  if (ad.kind == AdapterKind::None) {
    if (ad.cmi_enabled && !ad.cmi_layers.empty()) bad("cmi requires adapter.kind=mv");
    return;
  }
  if (ad.bottleneck <= 0) bad("adapter.bottleneck must be positive");
  if (ad.bottleneck >= enc.d_v || ad.bottleneck >= enc.d_t) {
    bad("adapter.bottleneck=" + std::to_string(ad.bottleneck) + " must be smaller than both encoder widths");
  }
  for (int b : ad.blocks) {
    if (b < 0 || b >= enc.layers) bad("adapter block index " + std::to_string(b) + " out of range");
  }
  if (ad.kind == AdapterKind::Mv) {
    if (ad.shrinkage <= 0 || ad.bottleneck % ad.shrinkage != 0) {
      bad("adapter.bottleneck=" + std::to_string(ad.bottleneck) + " not divisible by shrinkage=" +
          std::to_string(ad.shrinkage));
    }
    if (ad.trm_heads <= 0 || ad.bottleneck % ad.trm_heads != 0) {
      bad("adapter.bottleneck not divisible by trm_heads");
    }
    if (ad.trm_ffn_mult <= 0) bad("adapter.trm_ffn_mult must be positive");
    if (ad.cmi_enabled) {
      if (ad.cmi_rows <= 0 || ad.cmi_cols <= 0) bad("cmi factor shape must be positive");
      if (enc.d_v % ad.cmi_rows != 0) bad("d_v not divisible by cmi.rows=" + std::to_string(ad.cmi_rows));
      if (enc.d_t % ad.cmi_rows != 0) bad("d_t not divisible by cmi.rows=" + std::to_string(ad.cmi_rows));
      if (ad.bottleneck % ad.cmi_cols != 0) bad("adapter.bottleneck not divisible by cmi.cols=" + std::to_string(ad.cmi_cols));
      for (int l : ad.cmi_layers) {
        if (!contains(ad.blocks, l)) bad("cmi layer " + std::to_string(l) + " is not an equipped adapter block");
      }
    }
  } else if (ad.cmi_enabled && !ad.cmi_layers.empty()) {
    bad("cmi requires adapter.kind=mv");
  }
}

std::vector<ParamSpec> enumerate_params(const EncoderConfig& enc, const AdapterConfig& ad) {
  validate_configs(enc, ad);
  std::vector<ParamSpec> out;

  out.push_back({"vision.patch_proj", {enc.patch_dim, enc.d_v}, false, "backbone.vision", InitScheme::ScaledNormal});
  out.push_back({"vision.cls", {enc.d_v}, false, "backbone.vision", InitScheme::ScaledNormal});
  out.push_back({"vision.pos", {enc.patches + 1, enc.d_v}, false, "backbone.vision", InitScheme::ScaledNormal});
  for (int l = 0; l < enc.layers; ++l) {
    append_backbone_block_specs(out, "vision.blk" + std::to_string(l) + ".", "backbone.vision", enc.d_v, enc.ffn_mult);
  }

  out.push_back({"text.tok_emb", {enc.vocab_size, enc.d_t}, false, "backbone.text", InitScheme::ScaledNormal});
  out.push_back({"text.pos", {enc.max_text_len, enc.d_t}, false, "backbone.text", InitScheme::ScaledNormal});
  for (int l = 0; l < enc.layers; ++l) {
    append_backbone_block_specs(out, "text.blk" + std::to_string(l) + ".", "backbone.text", enc.d_t, enc.ffn_mult);
  }

  out.push_back({"proj.vision", {enc.d_v, enc.embed_dim}, false, "backbone.proj", InitScheme::ScaledNormal});
  out.push_back({"proj.text", {enc.d_t, enc.embed_dim}, false, "backbone.proj", InitScheme::ScaledNormal});

  const int dp = ad.bottleneck;
  for (int l : ad.blocks) {
    const bool cmi_here = ad.kind == AdapterKind::Mv && ad.cmi_enabled && contains(ad.cmi_layers, l);
    const std::string vp = "adapter.video.blk" + std::to_string(l) + ".";
    const std::string tp = "adapter.text.blk" + std::to_string(l) + ".";
    switch (ad.kind) {
      case AdapterKind::None:
        break;
      case AdapterKind::Mv: {
        if (!cmi_here) {
          out.push_back({vp + "w_down", {enc.d_v, dp}, true, "down", InitScheme::ScaledNormal});
        }
        out.push_back({vp + "w_up", {dp, enc.d_v}, true, "up", InitScheme::Zeros});
        out.push_back({vp + "cc", {dp}, true, "calibration", InitScheme::ScaledNormal});
        out.push_back({vp + "fc1.w", {2 * dp, dp / ad.shrinkage}, true, "calibration", InitScheme::ScaledNormal});
        out.push_back({vp + "fc1.b", {dp / ad.shrinkage}, true, "calibration", InitScheme::Zeros});
        out.push_back({vp + "fc2.w", {dp / ad.shrinkage, dp}, true, "calibration", InitScheme::Zeros});
        out.push_back({vp + "fc2.b", {dp}, true, "calibration", InitScheme::Ones});
        append_trm_specs(out, vp + "trm.", dp, ad.trm_ffn_mult);
        if (!cmi_here) {
          out.push_back({tp + "w_down", {enc.d_t, dp}, true, "down", InitScheme::ScaledNormal});
        }
        out.push_back({tp + "w_up", {dp, enc.d_t}, true, "up", InitScheme::Zeros});
        append_trm_specs(out, tp + "trm.", dp, ad.trm_ffn_mult);
        if (cmi_here) {
          const std::string cp = "cmi.blk" + std::to_string(l) + ".";
          out.push_back({cp + "m_c", {ad.cmi_rows, ad.cmi_cols}, true, "cmi", InitScheme::ScaledNormal});
          out.push_back({cp + "m_d_v", {enc.d_v / ad.cmi_rows, dp / ad.cmi_cols}, true, "cmi", InitScheme::ScaledNormal});
          out.push_back({cp + "m_d_t", {enc.d_t / ad.cmi_rows, dp / ad.cmi_cols}, true, "cmi", InitScheme::ScaledNormal});
        }
        break;
      }
      case AdapterKind::AdaptMlpParallel:
      case AdapterKind::AdaptMlpSequential: {
        out.push_back({vp + "w_down", {enc.d_v, dp}, true, "down", InitScheme::ScaledNormal});
        out.push_back({vp + "w_up", {dp, enc.d_v}, true, "up", InitScheme::Zeros});
        out.push_back({tp + "w_down", {enc.d_t, dp}, true, "down", InitScheme::ScaledNormal});
        out.push_back({tp + "w_up", {dp, enc.d_t}, true, "up", InitScheme::Zeros});
        break;
      }
    }
  }

  out.push_back({"tau", {}, true, "tau", InitScheme::Zeros});
  return out;
}

const Tensor& ModelState::param(const std::string& path) const {
  auto it = params.find(path);
  if (it == params.end()) throw std::invalid_argument("unknown parameter path: " + path);
  return it->second;
}

bool ModelState::is_tunable(const std::string& path) const {
  return std::binary_search(tunable.begin(), tunable.end(), path);
}

std::vector<std::pair<std::string, Tensor>> ModelState::tunable_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(tunable.size());
  for (const std::string& p : tunable) out.emplace_back(p, param(p));
  return out;
}

ModelState build_model(const EncoderConfig& enc, const AdapterConfig& ad, std::uint64_t seed, double tau_init) {
  ModelState state;
  state.enc = enc;
  state.adapter = ad;
  for (const ParamSpec& spec : enumerate_params(enc, ad)) {
    Tensor t = seeded_init(spec.shape, spec.scheme, substream(seed, spec.path));
    t.requires_grad = spec.tunable;
    if (spec.path == "tau") (*t.data)[0] = tau_init;
    state.params.emplace(spec.path, std::move(t));
    if (spec.tunable) state.tunable.push_back(spec.path);
  }
  std::sort(state.tunable.begin(), state.tunable.end());
  return state;
}

std::vector<std::string> build_freeze_mask(const ModelState& state) { return state.tunable; }

namespace {

Tensor masked_attention(const Tensor& x, const ModelState& s, const std::string& prefix, const Tensor* mask) {
  const int d = x.shape[1];
  const int heads = s.enc.heads;
  const int head_dim = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q = add_rows(matmul(x, s.param(prefix + "attn.wq")), s.param(prefix + "attn.bq"));
  Tensor k = add_rows(matmul(x, s.param(prefix + "attn.wk")), s.param(prefix + "attn.bk"));
  Tensor v = add_rows(matmul(x, s.param(prefix + "attn.wv")), s.param(prefix + "attn.bv"));
  std::vector<Tensor> ctx;
  ctx.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * head_dim, head_dim);
    Tensor kh = slice(k, 1, h * head_dim, head_dim);
    Tensor vh = slice(v, 1, h * head_dim, head_dim);
    Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
    if (mask) scores = add(scores, *mask);
    ctx.push_back(matmul(softmax(scores), vh));
  }
  return add_rows(matmul(concat(ctx, 1), s.param(prefix + "attn.wo")), s.param(prefix + "attn.bo"));
}

Tensor ffn_forward(const Tensor& x, const ModelState& s, const std::string& prefix) {
  Tensor h = gelu(add_rows(matmul(x, s.param(prefix + "ffn.w1")), s.param(prefix + "ffn.b1")));
  return add_rows(matmul(h, s.param(prefix + "ffn.w2")), s.param(prefix + "ffn.b2"));
}

TrmParams gather_trm(const ModelState& s, const std::string& prefix) {
  TrmParams p;
  p.ln1_g = s.param(prefix + "ln1.g");
  p.ln1_b = s.param(prefix + "ln1.b");
  p.wq = s.param(prefix + "attn.wq");
  p.bq = s.param(prefix + "attn.bq");
  p.wk = s.param(prefix + "attn.wk");
  p.bk = s.param(prefix + "attn.bk");
  p.wv = s.param(prefix + "attn.wv");
  p.bv = s.param(prefix + "attn.bv");
  p.wo = s.param(prefix + "attn.wo");
  p.bo = s.param(prefix + "attn.bo");
  p.ln2_g = s.param(prefix + "ln2.g");
  p.ln2_b = s.param(prefix + "ln2.b");
  p.w1 = s.param(prefix + "ffn.w1");
  p.b1 = s.param(prefix + "ffn.b1");
  p.w2 = s.param(prefix + "ffn.w2");
  p.b2 = s.param(prefix + "ffn.b2");
  return p;
}

bool block_equipped(const ModelState& s, int block) {
  return s.adapter.kind != AdapterKind::None && contains(s.adapter.blocks, block);
}

bool cmi_equipped(const ModelState& s, int block) {
  return s.adapter.kind == AdapterKind::Mv && s.adapter.cmi_enabled && contains(s.adapter.cmi_layers, block);
}

Tensor down_weight(const ModelState& s, int block, Modality modality) {
  if (cmi_equipped(s, block)) {
    const std::string cp = "cmi.blk" + std::to_string(block) + ".";
    CmiSpace space{s.param(cp + "m_c"), s.param(cp + "m_d_v"), s.param(cp + "m_d_t")};
    return materialize_down(space, modality);
  }
  const char* side = modality == Modality::Vision ? "video" : "text";
  return s.param("adapter." + std::string(side) + ".blk" + std::to_string(block) + ".w_down");
}

VideoBranchParams gather_video_branch(const ModelState& s, int block) {
  const std::string vp = "adapter.video.blk" + std::to_string(block) + ".";
  VideoBranchParams p;
  p.w_down = down_weight(s, block, Modality::Vision);
  p.w_up = s.param(vp + "w_up");
  p.cc = s.param(vp + "cc");
  p.fc1_w = s.param(vp + "fc1.w");
  p.fc1_b = s.param(vp + "fc1.b");
  p.fc2_w = s.param(vp + "fc2.w");
  p.fc2_b = s.param(vp + "fc2.b");
  p.trm = gather_trm(s, vp + "trm.");
  return p;
}

TextBranchParams gather_text_branch(const ModelState& s, int block) {
  const std::string tp = "adapter.text.blk" + std::to_string(block) + ".";
  TextBranchParams p;
  p.w_down = down_weight(s, block, Modality::Text);
  p.w_up = s.param(tp + "w_up");
  p.trm = gather_trm(s, tp + "trm.");
  return p;
}

AdaptMlpParams gather_adaptmlp(const ModelState& s, int block, Modality modality) {
  const char* side = modality == Modality::Vision ? "video" : "text";
  const std::string prefix = "adapter." + std::string(side) + ".blk" + std::to_string(block) + ".";
  return AdaptMlpParams{s.param(prefix + "w_down"), s.param(prefix + "w_up")};
}

}  // namespace

Tensor encode_frames(const ModelState& state, const std::vector<Tensor>& frames, bool adapters_enabled) {
  const EncoderConfig& enc = state.enc;
  if (frames.empty() || static_cast<int>(frames.size()) > enc.max_frames) {
    throw std::invalid_argument("encode_frames: frame count " + std::to_string(frames.size()) +
                                " outside [1," + std::to_string(enc.max_frames) + "]");
  }
  for (const Tensor& f : frames) {
    if (f.rank() != 2 || f.shape[0] != enc.patches || f.shape[1] != enc.patch_dim) {
      throw std::invalid_argument("encode_frames: frame shape " + shape_str(f.shape) + " does not match config [" +
                                  std::to_string(enc.patches) + "x" + std::to_string(enc.patch_dim) + "]");
    }
  }
  const int n_frames = static_cast<int>(frames.size());
  const Tensor& cls = state.param("vision.cls");
  const Tensor& pos = state.param("vision.pos");
  const Tensor& patch_proj = state.param("vision.patch_proj");

  std::vector<Tensor> x;
  x.reserve(static_cast<std::size_t>(n_frames));
  for (const Tensor& f : frames) {
    Tensor tokens = concat({reshape(cls, {1, enc.d_v}), matmul(f, patch_proj)}, 0);
    x.push_back(add(tokens, pos));
  }

  for (int l = 0; l < enc.layers; ++l) {
    const std::string prefix = "vision.blk" + std::to_string(l) + ".";
    std::vector<Tensor> h(static_cast<std::size_t>(n_frames));
    std::vector<Tensor> ffn_in(static_cast<std::size_t>(n_frames));
    std::vector<Tensor> f(static_cast<std::size_t>(n_frames));
    for (int i = 0; i < n_frames; ++i) {
      h[i] = add(x[i], masked_attention(layer_norm(x[i], state.param(prefix + "ln1.g"), state.param(prefix + "ln1.b")),
                                        state, prefix, nullptr));
      ffn_in[i] = layer_norm(h[i], state.param(prefix + "ln2.g"), state.param(prefix + "ln2.b"));
      f[i] = ffn_forward(ffn_in[i], state, prefix);
    }
    const bool branch_on = adapters_enabled && block_equipped(state, l);
    std::vector<Tensor> branch;
    if (branch_on) {
      switch (state.adapter.kind) {
        case AdapterKind::Mv:
          branch = video_branch_forward(f, gather_video_branch(state, l), state.adapter.scale, state.adapter.trm_heads);
          break;
        case AdapterKind::AdaptMlpParallel: {
          AdaptMlpParams p = gather_adaptmlp(state, l, Modality::Vision);
          for (int i = 0; i < n_frames; ++i) branch.push_back(adaptmlp_forward(ffn_in[i], p, state.adapter.scale));
          break;
        }
        case AdapterKind::AdaptMlpSequential: {
          AdaptMlpParams p = gather_adaptmlp(state, l, Modality::Vision);
          for (int i = 0; i < n_frames; ++i) branch.push_back(adaptmlp_forward(f[i], p, state.adapter.scale));
          break;
        }
        case AdapterKind::None:
          break;
      }
    }
    for (int i = 0; i < n_frames; ++i) {
      Tensor y = branch.empty() ? f[i] : add(f[i], branch[static_cast<std::size_t>(i)]);
      x[i] = add(h[i], y);
    }
  }

  std::vector<Tensor> cls_rows;
  cls_rows.reserve(static_cast<std::size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) cls_rows.push_back(slice(x[i], 0, 0, 1));
  return n_frames == 1 ? cls_rows[0] : concat(cls_rows, 0);
}

Tensor encode_text(const ModelState& state, const std::vector<int>& tokens, bool adapter_enabled) {
  const EncoderConfig& enc = state.enc;
  if (tokens.empty() || static_cast<int>(tokens.size()) > enc.max_text_len) {
    throw std::invalid_argument("encode_text: token count " + std::to_string(tokens.size()) + " outside [1," +
                                std::to_string(enc.max_text_len) + "]");
  }
  for (int id : tokens) {
    if (id < 0 || id >= enc.vocab_size) {
      throw std::invalid_argument("encode_text: token id " + std::to_string(id) + " out of vocabulary [0," +
                                  std::to_string(enc.vocab_size) + ")");
    }
  }
  std::vector<int> padded = tokens;
  padded.resize(static_cast<std::size_t>(enc.max_text_len), kPadTokenId);

  const int len = enc.max_text_len;
  Tensor mask = Tensor::zeros({len, len});
  for (int kcol = 0; kcol < len; ++kcol) {
    if (padded[static_cast<std::size_t>(kcol)] == kPadTokenId) {
      for (int qrow = 0; qrow < len; ++qrow) (*mask.data)[static_cast<std::size_t>(qrow) * len + kcol] = -1e30;
    }
  }

  Tensor x = add(rows_select(state.param("text.tok_emb"), padded), state.param("text.pos"));
  for (int l = 0; l < enc.layers; ++l) {
    const std::string prefix = "text.blk" + std::to_string(l) + ".";
    Tensor h = add(x, masked_attention(layer_norm(x, state.param(prefix + "ln1.g"), state.param(prefix + "ln1.b")),
                                       state, prefix, &mask));
    Tensor ffn_in = layer_norm(h, state.param(prefix + "ln2.g"), state.param(prefix + "ln2.b"));
    Tensor f = ffn_forward(ffn_in, state, prefix);
    Tensor y = f;
    if (adapter_enabled && block_equipped(state, l)) {
      switch (state.adapter.kind) {
        case AdapterKind::Mv:
          y = add(f, text_branch_forward(f, gather_text_branch(state, l), state.adapter.scale, state.adapter.trm_heads));
          break;
        case AdapterKind::AdaptMlpParallel:
          y = add(f, adaptmlp_forward(ffn_in, gather_adaptmlp(state, l, Modality::Text), state.adapter.scale));
          break;
        case AdapterKind::AdaptMlpSequential:
          y = add(f, adaptmlp_forward(f, gather_adaptmlp(state, l, Modality::Text), state.adapter.scale));
          break;
        case AdapterKind::None:
          break;
      }
    }
    x = add(h, y);
  }
  return reshape(slice(x, 0, enc.max_text_len - 1, 1), {enc.d_t});
}

Tensor project_video(const ModelState& state, const Tensor& pooled) {
  if (pooled.rank() != 1 || pooled.shape[0] != state.enc.d_v) {
    throw std::invalid_argument("project_video: expected [" + std::to_string(state.enc.d_v) + "], got " +
                                shape_str(pooled.shape));
  }
  return reshape(matmul(reshape(pooled, {1, state.enc.d_v}), state.param("proj.vision")), {state.enc.embed_dim});
}

Tensor project_text(const ModelState& state, const Tensor& feature) {
  if (feature.rank() != 1 || feature.shape[0] != state.enc.d_t) {
    throw std::invalid_argument("project_text: expected [" + std::to_string(state.enc.d_t) + "], got " +
                                shape_str(feature.shape));
  }
  return reshape(matmul(reshape(feature, {1, state.enc.d_t}), state.param("proj.text")), {state.enc.embed_dim});
}

}  // namespace mva
