// Straight-line reference implementations used as independent oracles in the
// tests. Everything here works on flat row-major double vectors with plain
// loops and no graph machinery. Accumulation orders deliberately mirror the
// production kernels so exact-match assertions are meaningful.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mva/encoder.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline const Vec& weights(const mva::ModelState& s, const std::string& path) { return *s.param(path).data; }

inline Vec mm(const Vec& a, int m, int k, const Vec& b, int n) {
  Vec out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += a[static_cast<std::size_t>(i) * k + kk] * b[static_cast<std::size_t>(kk) * n + j];
      out[static_cast<std::size_t>(i) * n + j] = acc;
    }
  return out;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec add_rows(const Vec& a, int rows, int cols, const Vec& b) {
  Vec out(a.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] = a[static_cast<std::size_t>(r) * cols + c] + b[static_cast<std::size_t>(c)];
  return out;
}

inline Vec scale(const Vec& a, double c) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
  return out;
}

inline Vec relu(const Vec& a) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

inline Vec gelu(const Vec& a) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * a[i] * (1.0 + std::erf(a[i] * 0.7071067811865475244));
  return out;
}

inline Vec softmax_rows(const Vec& a, int rows, int cols) {
  Vec out(a.size());
  for (int r = 0; r < rows; ++r) {
    const double* x = a.data() + static_cast<std::size_t>(r) * cols;
    double* y = out.data() + static_cast<std::size_t>(r) * cols;
    double mx = x[0];
    for (int c = 1; c < cols; ++c) mx = x[c] > mx ? x[c] : mx;
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < cols; ++c) y[c] *= inv;
  }
  return out;
}

inline Vec layer_norm(const Vec& x, int rows, int cols, const Vec& g, const Vec& b, double eps = 1e-5) {
  Vec out(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data() + static_cast<std::size_t>(r) * cols;
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = xr[c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c) {
      out[static_cast<std::size_t>(r) * cols + c] = g[static_cast<std::size_t>(c)] * ((xr[c] - mu) * inv) + b[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

inline Vec l2n_rows(const Vec& a, int rows, int cols) {
  Vec out(a.size());
  for (int r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (int c = 0; c < cols; ++c) sq += a[static_cast<std::size_t>(r) * cols + c] * a[static_cast<std::size_t>(r) * cols + c];
    const double inv = 1.0 / std::sqrt(sq);
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] = a[static_cast<std::size_t>(r) * cols + c] * inv;
  }
  return out;
}

inline double cross_entropy(const Vec& logits, int rows, int cols, const std::vector<int>& targets) {
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const double* x = logits.data() + static_cast<std::size_t>(r) * cols;
    double mx = x[0];
    for (int c = 1; c < cols; ++c) mx = x[c] > mx ? x[c] : mx;
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) sum += std::exp(x[c] - mx);
    total += mx + std::log(sum) - x[targets[static_cast<std::size_t>(r)]];
  }
  return total / rows;
}

inline Vec kron(const Vec& a, int m, int n, const Vec& b, int p, int q) {
  Vec out(static_cast<std::size_t>(m) * p * n * q, 0.0);
  const int out_cols = n * q;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int aa = 0; aa < p; ++aa)
        for (int bb = 0; bb < q; ++bb)
          out[static_cast<std::size_t>(i * p + aa) * out_cols + (j * q + bb)] =
              a[static_cast<std::size_t>(i) * n + j] * b[static_cast<std::size_t>(aa) * q + bb];
  return out;
}

inline Vec slice_cols(const Vec& a, int rows, int cols, int start, int len) {
  Vec out(static_cast<std::size_t>(rows) * len);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < len; ++c) out[static_cast<std::size_t>(r) * len + c] = a[static_cast<std::size_t>(r) * cols + start + c];
  return out;
}

inline Vec transpose(const Vec& a, int rows, int cols) {
  Vec out(a.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c) * rows + r] = a[static_cast<std::size_t>(r) * cols + c];
  return out;
}

struct AttnWeights {
  Vec wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Multi-head self-attention matching the production kernel: per-head slices,
/// scores scaled then optionally masked, softmax, context, concat, output
/// projection.
inline Vec attention(const Vec& x, int m, int d, const AttnWeights& w, int heads, const Vec* mask) {
  const int hd = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Vec q = add_rows(mm(x, m, d, w.wq, d), m, d, w.bq);
  Vec k = add_rows(mm(x, m, d, w.wk, d), m, d, w.bk);
  Vec v = add_rows(mm(x, m, d, w.wv, d), m, d, w.bv);
  Vec ctx(static_cast<std::size_t>(m) * d);
  for (int h = 0; h < heads; ++h) {
    Vec qh = slice_cols(q, m, d, h * hd, hd);
    Vec kh = slice_cols(k, m, d, h * hd, hd);
    Vec vh = slice_cols(v, m, d, h * hd, hd);
    Vec scores = scale(mm(qh, m, hd, transpose(kh, m, hd), m), att_scale);
    if (mask) scores = add(scores, *mask);
    Vec attn = softmax_rows(scores, m, m);
    Vec c = mm(attn, m, m, vh, hd);
    for (int r = 0; r < m; ++r)
      for (int cc = 0; cc < hd; ++cc) ctx[static_cast<std::size_t>(r) * d + h * hd + cc] = c[static_cast<std::size_t>(r) * hd + cc];
  }
  return add_rows(mm(ctx, m, d, w.wo, d), m, d, w.bo);
}

struct TrmWeights {
  Vec ln1_g, ln1_b;
  AttnWeights attn;
  Vec ln2_g, ln2_b;
  Vec w1, b1, w2, b2;
};

inline TrmWeights gather_trm(const mva::ModelState& s, const std::string& prefix) {
  TrmWeights w;
  w.ln1_g = weights(s, prefix + "ln1.g");
  w.ln1_b = weights(s, prefix + "ln1.b");
  w.attn = AttnWeights{weights(s, prefix + "attn.wq"), weights(s, prefix + "attn.bq"), weights(s, prefix + "attn.wk"),
                       weights(s, prefix + "attn.bk"), weights(s, prefix + "attn.wv"), weights(s, prefix + "attn.bv"),
                       weights(s, prefix + "attn.wo"), weights(s, prefix + "attn.bo")};
  w.ln2_g = weights(s, prefix + "ln2.g");
  w.ln2_b = weights(s, prefix + "ln2.b");
  w.w1 = weights(s, prefix + "ffn.w1");
  w.b1 = weights(s, prefix + "ffn.b1");
  w.w2 = weights(s, prefix + "ffn.w2");
  w.b2 = weights(s, prefix + "ffn.b2");
  return w;
}

inline Vec trm(const Vec& tokens, int m, int d, const TrmWeights& w, int heads, int ffn_mult, bool causal = false) {
  Vec mask;
  if (causal) {
    mask.assign(static_cast<std::size_t>(m) * m, 0.0);
    for (int q = 0; q < m; ++q)
      for (int k = q + 1; k < m; ++k) mask[static_cast<std::size_t>(q) * m + k] = -1e30;
  }
  Vec h = add(tokens, attention(layer_norm(tokens, m, d, w.ln1_g, w.ln1_b), m, d, w.attn, heads, causal ? &mask : nullptr));
  Vec n2 = layer_norm(h, m, d, w.ln2_g, w.ln2_b);
  Vec f = add_rows(mm(gelu(add_rows(mm(n2, m, d, w.w1, ffn_mult * d), m, ffn_mult * d, w.b1)), m, ffn_mult * d, w.w2, d),
                   m, d, w.b2);
  return add(h, f);
}

/// Calibration MLP: FC2(ReLU(FC1(concat(cc, cls)))).
inline Vec calibration(const Vec& hat_cc, const Vec& hat_cls, int d_prime, int hidden, const Vec& fc1_w,
                       const Vec& fc1_b, const Vec& fc2_w, const Vec& fc2_b) {
  Vec alpha(static_cast<std::size_t>(2) * d_prime);
  for (int c = 0; c < d_prime; ++c) {
    alpha[static_cast<std::size_t>(c)] = hat_cc[static_cast<std::size_t>(c)];
    alpha[static_cast<std::size_t>(d_prime + c)] = hat_cls[static_cast<std::size_t>(c)];
  }
  Vec h = relu(add_rows(mm(alpha, 1, 2 * d_prime, fc1_w, hidden), 1, hidden, fc1_b));
  return add_rows(mm(h, 1, hidden, fc2_w, d_prime), 1, d_prime, fc2_b);
}

struct VideoBranchWeights {
  Vec w_down, w_up, cc, fc1_w, fc1_b, fc2_w, fc2_b;
  TrmWeights trm;
};

/// Full video branch: shared downsample, temporal adaptation of the [CLS]
/// sequence via the appended global token, per-frame calibrated upsampling.
inline std::vector<Vec> video_branch(const std::vector<Vec>& frames, int tokens_per_frame, int d, int d_prime,
                                     int hidden, const VideoBranchWeights& w, double s, int heads, int ffn_mult) {
  const int n_frames = static_cast<int>(frames.size());
  std::vector<Vec> down;
  Vec cls_seq(static_cast<std::size_t>(n_frames + 1) * d_prime);
  for (int i = 0; i < n_frames; ++i) {
    down.push_back(mm(frames[static_cast<std::size_t>(i)], tokens_per_frame, d, w.w_down, d_prime));
    for (int c = 0; c < d_prime; ++c) cls_seq[static_cast<std::size_t>(i) * d_prime + c] = down.back()[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < d_prime; ++c) cls_seq[static_cast<std::size_t>(n_frames) * d_prime + c] = w.cc[static_cast<std::size_t>(c)];
  Vec adapted = trm(cls_seq, n_frames + 1, d_prime, w.trm, heads, ffn_mult, /*causal=*/true);
  Vec hat_cc(adapted.begin() + static_cast<std::ptrdiff_t>(n_frames) * d_prime,
             adapted.begin() + static_cast<std::ptrdiff_t>(n_frames + 1) * d_prime);

  std::vector<Vec> out;
  for (int i = 0; i < n_frames; ++i) {
    Vec hat_cls(adapted.begin() + static_cast<std::ptrdiff_t>(i) * d_prime,
                adapted.begin() + static_cast<std::ptrdiff_t>(i + 1) * d_prime);
    Vec alpha = calibration(hat_cc, hat_cls, d_prime, hidden, w.fc1_w, w.fc1_b, w.fc2_w, w.fc2_b);
    Vec w_cal(w.w_up.size());
    for (int r = 0; r < d_prime; ++r)
      for (int c = 0; c < d; ++c)
        w_cal[static_cast<std::size_t>(r) * d + c] = alpha[static_cast<std::size_t>(r)] * w.w_up[static_cast<std::size_t>(r) * d + c];
    Vec cls_out = scale(mm(hat_cls, 1, d_prime, w.w_up, d), s);
    Vec patches(down[static_cast<std::size_t>(i)].begin() + d_prime, down[static_cast<std::size_t>(i)].end());
    Vec patch_out = scale(mm(patches, tokens_per_frame - 1, d_prime, w_cal, d), s);
    Vec o(static_cast<std::size_t>(tokens_per_frame) * d);
    for (int c = 0; c < d; ++c) o[static_cast<std::size_t>(c)] = cls_out[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < patch_out.size(); ++j) o[static_cast<std::size_t>(d) + j] = patch_out[j];
    out.push_back(std::move(o));
  }
  return out;
}

inline VideoBranchWeights gather_video_branch(const mva::ModelState& s, int block) {
  const std::string vp = "adapter.video.blk" + std::to_string(block) + ".";
  VideoBranchWeights w;
  const bool cmi = s.adapter.kind == mva::AdapterKind::Mv && s.adapter.cmi_enabled &&
                   std::find(s.adapter.cmi_layers.begin(), s.adapter.cmi_layers.end(), block) != s.adapter.cmi_layers.end();
  if (cmi) {
    const std::string cp = "cmi.blk" + std::to_string(block) + ".";
    w.w_down = kron(weights(s, cp + "m_c"), s.adapter.cmi_rows, s.adapter.cmi_cols, weights(s, cp + "m_d_v"),
                    s.enc.d_v / s.adapter.cmi_rows, s.adapter.bottleneck / s.adapter.cmi_cols);
  } else {
    w.w_down = weights(s, vp + "w_down");
  }
  w.w_up = weights(s, vp + "w_up");
  w.cc = weights(s, vp + "cc");
  w.fc1_w = weights(s, vp + "fc1.w");
  w.fc1_b = weights(s, vp + "fc1.b");
  w.fc2_w = weights(s, vp + "fc2.w");
  w.fc2_b = weights(s, vp + "fc2.b");
  w.trm = gather_trm(s, vp + "trm.");
  return w;
}

/// Straight-line re-implementation of the whole vision tower. Returns the
/// |v| x d_v matrix of final [CLS] rows.
inline Vec encode_frames(const mva::ModelState& s, const std::vector<Vec>& raw_frames, bool adapters_enabled) {
  const mva::EncoderConfig& e = s.enc;
  const int tokens = e.patches + 1;
  const int n_frames = static_cast<int>(raw_frames.size());
  const Vec& cls = weights(s, "vision.cls");
  const Vec& pos = weights(s, "vision.pos");
  const Vec& patch_proj = weights(s, "vision.patch_proj");

  std::vector<Vec> x;
  for (const Vec& f : raw_frames) {
    Vec projected = mm(f, e.patches, e.patch_dim, patch_proj, e.d_v);
    Vec t(static_cast<std::size_t>(tokens) * e.d_v);
    for (int c = 0; c < e.d_v; ++c) t[static_cast<std::size_t>(c)] = cls[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < projected.size(); ++j) t[static_cast<std::size_t>(e.d_v) + j] = projected[j];
    x.push_back(add(t, pos));
  }

  for (int l = 0; l < e.layers; ++l) {
    const std::string prefix = "vision.blk" + std::to_string(l) + ".";
    TrmWeights bw = gather_trm(s, prefix);
    std::vector<Vec> h(static_cast<std::size_t>(n_frames)), n2(static_cast<std::size_t>(n_frames)),
        f(static_cast<std::size_t>(n_frames));
    for (int i = 0; i < n_frames; ++i) {
      h[static_cast<std::size_t>(i)] =
          add(x[static_cast<std::size_t>(i)],
              attention(layer_norm(x[static_cast<std::size_t>(i)], tokens, e.d_v, bw.ln1_g, bw.ln1_b), tokens, e.d_v,
                        bw.attn, e.heads, nullptr));
      n2[static_cast<std::size_t>(i)] = layer_norm(h[static_cast<std::size_t>(i)], tokens, e.d_v, bw.ln2_g, bw.ln2_b);
      f[static_cast<std::size_t>(i)] =
          add_rows(mm(gelu(add_rows(mm(n2[static_cast<std::size_t>(i)], tokens, e.d_v, bw.w1, e.ffn_mult * e.d_v),
                                    tokens, e.ffn_mult * e.d_v, bw.b1)),
                      tokens, e.ffn_mult * e.d_v, bw.w2, e.d_v),
                   tokens, e.d_v, bw.b2);
    }
    const bool equipped = adapters_enabled && s.adapter.kind != mva::AdapterKind::None &&
                          std::find(s.adapter.blocks.begin(), s.adapter.blocks.end(), l) != s.adapter.blocks.end();
    std::vector<Vec> branch;
    if (equipped) {
      if (s.adapter.kind == mva::AdapterKind::Mv) {
        branch = video_branch(f, tokens, e.d_v, s.adapter.bottleneck, s.adapter.bottleneck / s.adapter.shrinkage,
                              gather_video_branch(s, l), s.adapter.scale, s.adapter.trm_heads, s.adapter.trm_ffn_mult);
      } else {
        const std::string vp = "adapter.video.blk" + std::to_string(l) + ".";
        const Vec& wd = weights(s, vp + "w_down");
        const Vec& wu = weights(s, vp + "w_up");
        for (int i = 0; i < n_frames; ++i) {
          const Vec& input = s.adapter.kind == mva::AdapterKind::AdaptMlpParallel ? n2[static_cast<std::size_t>(i)]
                                                                                  : f[static_cast<std::size_t>(i)];
          branch.push_back(scale(
              mm(relu(mm(input, tokens, e.d_v, wd, s.adapter.bottleneck)), tokens, s.adapter.bottleneck, wu, e.d_v),
              s.adapter.scale));
        }
      }
    }
    for (int i = 0; i < n_frames; ++i) {
      Vec y = branch.empty() ? f[static_cast<std::size_t>(i)]
                             : add(f[static_cast<std::size_t>(i)], branch[static_cast<std::size_t>(i)]);
      x[static_cast<std::size_t>(i)] = add(h[static_cast<std::size_t>(i)], y);
    }
  }

  Vec out(static_cast<std::size_t>(n_frames) * e.d_v);
  for (int i = 0; i < n_frames; ++i)
    for (int c = 0; c < e.d_v; ++c) out[static_cast<std::size_t>(i) * e.d_v + c] = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  return out;
}

/// Straight-line re-implementation of the text tower: returns the terminal
/// position's d_t feature.
inline Vec encode_text(const mva::ModelState& s, const std::vector<int>& tokens, bool adapter_enabled) {
  const mva::EncoderConfig& e = s.enc;
  std::vector<int> padded = tokens;
  padded.resize(static_cast<std::size_t>(e.max_text_len), mva::kPadTokenId);
  const int m = e.max_text_len;

  Vec mask(static_cast<std::size_t>(m) * m, 0.0);
  for (int kcol = 0; kcol < m; ++kcol) {
    if (padded[static_cast<std::size_t>(kcol)] == mva::kPadTokenId) {
      for (int q = 0; q < m; ++q) mask[static_cast<std::size_t>(q) * m + kcol] = -1e30;
    }
  }

  const Vec& emb = weights(s, "text.tok_emb");
  Vec x(static_cast<std::size_t>(m) * e.d_t);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < e.d_t; ++c)
      x[static_cast<std::size_t>(r) * e.d_t + c] = emb[static_cast<std::size_t>(padded[static_cast<std::size_t>(r)]) * e.d_t + c];
  x = add(x, weights(s, "text.pos"));

  for (int l = 0; l < e.layers; ++l) {
    const std::string prefix = "text.blk" + std::to_string(l) + ".";
    TrmWeights bw = gather_trm(s, prefix);
    Vec h = add(x, attention(layer_norm(x, m, e.d_t, bw.ln1_g, bw.ln1_b), m, e.d_t, bw.attn, e.heads, &mask));
    Vec n2 = layer_norm(h, m, e.d_t, bw.ln2_g, bw.ln2_b);
    Vec f = add_rows(mm(gelu(add_rows(mm(n2, m, e.d_t, bw.w1, e.ffn_mult * e.d_t), m, e.ffn_mult * e.d_t, bw.b1)), m,
                        e.ffn_mult * e.d_t, bw.w2, e.d_t),
                     m, e.d_t, bw.b2);
    Vec y = f;
    const bool equipped = adapter_enabled && s.adapter.kind != mva::AdapterKind::None &&
                          std::find(s.adapter.blocks.begin(), s.adapter.blocks.end(), l) != s.adapter.blocks.end();
    if (equipped) {
      const std::string tp = "adapter.text.blk" + std::to_string(l) + ".";
      const int dp = s.adapter.bottleneck;
      if (s.adapter.kind == mva::AdapterKind::Mv) {
        const bool cmi = s.adapter.cmi_enabled &&
                         std::find(s.adapter.cmi_layers.begin(), s.adapter.cmi_layers.end(), l) != s.adapter.cmi_layers.end();
        Vec wd;
        if (cmi) {
          const std::string cp = "cmi.blk" + std::to_string(l) + ".";
          wd = kron(weights(s, cp + "m_c"), s.adapter.cmi_rows, s.adapter.cmi_cols, weights(s, cp + "m_d_t"),
                    e.d_t / s.adapter.cmi_rows, dp / s.adapter.cmi_cols);
        } else {
          wd = weights(s, tp + "w_down");
        }
        Vec branch = scale(mm(trm(mm(f, m, e.d_t, wd, dp), m, dp, gather_trm(s, tp + "trm."), s.adapter.trm_heads,
                                  s.adapter.trm_ffn_mult),
                              m, dp, weights(s, tp + "w_up"), e.d_t),
                           s.adapter.scale);
        y = add(f, branch);
      } else {
        const Vec& input = s.adapter.kind == mva::AdapterKind::AdaptMlpParallel ? n2 : f;
        Vec branch = scale(mm(relu(mm(input, m, e.d_t, weights(s, tp + "w_down"), dp)), m, dp,
                              weights(s, tp + "w_up"), e.d_t),
                           s.adapter.scale);
        y = add(f, branch);
      }
    }
    x = add(h, y);
  }
  Vec out(static_cast<std::size_t>(e.d_t));
  for (int c = 0; c < e.d_t; ++c) out[static_cast<std::size_t>(c)] = x[static_cast<std::size_t>(m - 1) * e.d_t + c];
  return out;
}

}  // namespace oracle
