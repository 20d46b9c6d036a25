#include "mva/adapters.hpp"

#include <cmath>
#include <stdexcept>

#include "mva/ops.hpp"

namespace mva {

AdapterKind parse_adapter_kind(const std::string& name) {
  if (name == "none") return AdapterKind::None;
  if (name == "mv") return AdapterKind::Mv;
  if (name == "adaptmlp_par") return AdapterKind::AdaptMlpParallel;
  if (name == "adaptmlp_seq") return AdapterKind::AdaptMlpSequential;
  throw std::invalid_argument("unknown adapter kind: " + name);
}

std::string adapter_kind_name(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::None: return "none";
    case AdapterKind::Mv: return "mv";
    case AdapterKind::AdaptMlpParallel: return "adaptmlp_par";
    case AdapterKind::AdaptMlpSequential: return "adaptmlp_seq";
  }
  return "none";
}

namespace {

Tensor causal_mask(int m) {
  Tensor mask = Tensor::zeros({m, m});
  double* p = mask.ptr();
  for (int q = 0; q < m; ++q)
    for (int k = q + 1; k < m; ++k) p[static_cast<std::int64_t>(q) * m + k] = -1e30;
  return mask;
}

Tensor multi_head_attention(const Tensor& x, const Tensor& wq, const Tensor& bq, const Tensor& wk, const Tensor& bk,
                            const Tensor& wv, const Tensor& bv, const Tensor& wo, const Tensor& bo, int heads,
                            const Tensor* mask) {
  const int d = x.shape[1];
  const int head_dim = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q = add_rows(matmul(x, wq), bq);
  Tensor k = add_rows(matmul(x, wk), bk);
  Tensor v = add_rows(matmul(x, wv), bv);
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
  return add_rows(matmul(concat(ctx, 1), wo), bo);
}

}  // namespace

Tensor trm_forward(const Tensor& tokens, const TrmParams& p, int heads, bool causal) {
  if (tokens.rank() != 2 || tokens.shape[0] < 1) {
    throw std::invalid_argument("trm_forward: M x d token matrix required, got " + shape_str(tokens.shape));
  }
  if (tokens.shape[1] % heads != 0) {
    throw std::invalid_argument("trm_forward: width " + std::to_string(tokens.shape[1]) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  Tensor mask;
  if (causal) mask = causal_mask(tokens.shape[0]);
  Tensor h = add(tokens, multi_head_attention(layer_norm(tokens, p.ln1_g, p.ln1_b), p.wq, p.bq, p.wk, p.bk, p.wv,
                                              p.bv, p.wo, p.bo, heads, causal ? &mask : nullptr));
  Tensor n2 = layer_norm(h, p.ln2_g, p.ln2_b);
  Tensor f = add_rows(matmul(gelu(add_rows(matmul(n2, p.w1), p.b1)), p.w2), p.b2);
  return add(h, f);
}

Tensor text_branch_forward(const Tensor& x, const TextBranchParams& p, double s, int trm_heads) {
  return scale(matmul(trm_forward(matmul(x, p.w_down), p.trm, trm_heads), p.w_up), s);
}

std::pair<Tensor, Tensor> temporal_cls_adapt(const Tensor& cls_tokens, const Tensor& cc, const TrmParams& trm,
                                             int heads) {
  if (cls_tokens.rank() != 2 || cls_tokens.shape[0] < 1) {
    throw std::invalid_argument("temporal_cls_adapt: |v| x d' matrix required, got " + shape_str(cls_tokens.shape));
  }
  const int frames = cls_tokens.shape[0];
  const int d = cls_tokens.shape[1];
  Tensor seq = concat({cls_tokens, reshape(cc, {1, d})}, 0);
  Tensor out = trm_forward(seq, trm, heads, /*causal=*/true);
  Tensor adapted = slice(out, 0, 0, frames);
  Tensor hat_cc = reshape(slice(out, 0, frames, 1), {d});
  return {adapted, hat_cc};
}

Tensor calibration_weights(const Tensor& hat_cc, const Tensor& hat_cls_i, const Tensor& fc1_w, const Tensor& fc1_b,
                           const Tensor& fc2_w, const Tensor& fc2_b) {
  if (hat_cc.rank() != 1 || hat_cls_i.rank() != 1 || hat_cc.shape[0] != hat_cls_i.shape[0]) {
    throw std::invalid_argument("calibration_weights: two d' vectors required, got " + shape_str(hat_cc.shape) +
                                " and " + shape_str(hat_cls_i.shape));
  }
  const int d = hat_cc.shape[0];
  Tensor alpha = reshape(concat({hat_cc, hat_cls_i}, 0), {1, 2 * d});
  Tensor hidden = relu(add_rows(matmul(alpha, fc1_w), fc1_b));
  Tensor out = add_rows(matmul(hidden, fc2_w), fc2_b);
  return reshape(out, {d});
}

Tensor calibrate_upsample(const Tensor& w_up, const Tensor& alpha) {
  if (w_up.rank() != 2 || alpha.rank() != 1 || alpha.shape[0] != w_up.shape[0]) {
    throw std::invalid_argument("calibrate_upsample: alpha length " + shape_str(alpha.shape) +
                                " must match row count of " + shape_str(w_up.shape));
  }
  return scale_rows(w_up, alpha);
}

std::vector<Tensor> video_branch_forward(const std::vector<Tensor>& frames_ffn_out, const VideoBranchParams& p,
                                         double s, int trm_heads) {
  if (frames_ffn_out.empty()) throw std::invalid_argument("video_branch_forward: at least one frame required");
  const int frames = static_cast<int>(frames_ffn_out.size());
  const int d_prime = p.w_down.shape[1];

  // Shared downsample of every token of every frame, then the per-frame
  // [CLS] rows form the temporal sequence.
  std::vector<Tensor> down;
  std::vector<Tensor> cls_rows;
  down.reserve(static_cast<std::size_t>(frames));
  cls_rows.reserve(static_cast<std::size_t>(frames));
  for (const Tensor& f : frames_ffn_out) {
    Tensor d = matmul(f, p.w_down);
    cls_rows.push_back(slice(d, 0, 0, 1));
    down.push_back(d);
  }
  Tensor cls_mat = frames == 1 ? cls_rows[0] : concat(cls_rows, 0);
  auto [adapted, hat_cc] = temporal_cls_adapt(cls_mat, p.cc, p.trm, trm_heads);

  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    Tensor hat_cls_row = slice(adapted, 0, i, 1);
    Tensor hat_cls = reshape(hat_cls_row, {d_prime});
    Tensor alpha = calibration_weights(hat_cc, hat_cls, p.fc1_w, p.fc1_b, p.fc2_w, p.fc2_b);
    Tensor w_cal = calibrate_upsample(p.w_up, alpha);
    const int n_patches = frames_ffn_out[static_cast<std::size_t>(i)].shape[0] - 1;
    Tensor patches = slice(down[static_cast<std::size_t>(i)], 0, 1, n_patches);
    Tensor cls_out = scale(matmul(hat_cls_row, p.w_up), s);
    Tensor patch_out = scale(matmul(patches, w_cal), s);
    out.push_back(concat({cls_out, patch_out}, 0));
  }
  return out;
}

Tensor adaptmlp_forward(const Tensor& x, const AdaptMlpParams& p, double s) {
  return scale(matmul(relu(matmul(x, p.w_down)), p.w_up), s);
}

}  // namespace mva
