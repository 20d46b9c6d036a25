#include "mva/ops.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace mva {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_finite(const Tensor& t, const char* op) {
  const double* p = t.ptr();
  const std::int64_t n = t.size();
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw std::invalid_argument(std::string(op) + ": non-finite input at flat index " + std::to_string(i));
    }
  }
}

/// Records a node when any input is tracked; otherwise leaves `out` untracked.
template <typename Fn>
void record(const char* op, Tensor& out, std::initializer_list<const Tensor*> inputs, Fn make_backward) {
  GradGraph* g = GradGraph::active();
  if (!g) return;
  std::vector<std::int64_t> ids;
  ids.reserve(inputs.size());
  bool tracked = false;
  for (const Tensor* t : inputs) {
    ids.push_back(g->input_id(*t));
    tracked = tracked || ids.back() >= 0;
  }
  if (!tracked) return;
  std::int64_t id = g->add_node(op, out.size(), make_backward(ids));
  g->tag_output(out, id);
}

std::int64_t outer_extent(const std::vector<int>& shape, int axis) {
  std::int64_t n = 1;
  for (int i = 0; i < axis; ++i) n *= shape[static_cast<std::size_t>(i)];
  return n;
}

std::int64_t inner_extent(const std::vector<int>& shape, int axis) {
  std::int64_t n = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul: rank-2 operands required, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
  require(a.shape[1] == b.shape[0],
          "matmul: inner dimensions differ, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  {
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    double* pc = out.ptr();
    for (int i = 0; i < m; ++i) {
      const double* ai = pa + static_cast<std::int64_t>(i) * k;
      double* ci = pc + static_cast<std::int64_t>(i) * n;
      for (int kk = 0; kk < k; ++kk) {
        const double aik = ai[kk];
        const double* bk = pb + static_cast<std::int64_t>(kk) * n;
        for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
      }
    }
  }
  record("matmul", out, {&a, &b}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, a, b, m, k, n](GradGraph& g, const std::vector<double>& up) {
      if (ids[0] >= 0) {
        std::vector<double> da(static_cast<std::size_t>(m) * k, 0.0);
        const double* pb = b.ptr();
        for (int i = 0; i < m; ++i) {
          const double* gi = up.data() + static_cast<std::int64_t>(i) * n;
          double* di = da.data() + static_cast<std::int64_t>(i) * k;
          for (int kk = 0; kk < k; ++kk) {
            const double* bk = pb + static_cast<std::int64_t>(kk) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += gi[j] * bk[j];
            di[kk] = acc;
          }
        }
        g.accumulate(ids[0], da);
      }
      if (ids[1] >= 0) {
        std::vector<double> db(static_cast<std::size_t>(k) * n, 0.0);
        const double* pa = a.ptr();
        for (int i = 0; i < m; ++i) {
          const double* ai = pa + static_cast<std::int64_t>(i) * k;
          const double* gi = up.data() + static_cast<std::int64_t>(i) * n;
          for (int kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            double* dk = db.data() + static_cast<std::int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) dk[j] += aik * gi[j];
          }
        }
        g.accumulate(ids[1], db);
      }
    };
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: rank-2 operand required, got " + shape_str(a.shape));
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::zeros({n, m});
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[static_cast<std::int64_t>(j) * m + i] = pa[static_cast<std::int64_t>(i) * n + j];
  record("transpose", out, {&a}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, m, n](GradGraph& g, const std::vector<double>& up) {
      std::vector<double> da(static_cast<std::size_t>(m) * n);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) da[static_cast<std::size_t>(i) * n + j] = up[static_cast<std::size_t>(j) * m + i];
      g.accumulate(ids[0], da);
    };
  });
  return out;
}

namespace {

Tensor binary_same_shape(const char* op, const Tensor& a, const Tensor& b, double bsign, bool elementwise_mul) {
  require(a.shape == b.shape,
          std::string(op) + ": shape mismatch, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  const std::int64_t n = out.size();
  if (elementwise_mul) {
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  } else {
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + bsign * pb[i];
  }
  record(op, out, {&a, &b}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, a, b, bsign, elementwise_mul](GradGraph& g, const std::vector<double>& up) {
      const std::int64_t sz = static_cast<std::int64_t>(up.size());
      if (ids[0] >= 0) {
        if (elementwise_mul) {
          std::vector<double> da(up.size());
          const double* pb2 = b.ptr();
          for (std::int64_t i = 0; i < sz; ++i) da[static_cast<std::size_t>(i)] = up[static_cast<std::size_t>(i)] * pb2[i];
          g.accumulate(ids[0], da);
        } else {
          g.accumulate(ids[0], up);
        }
      }
      if (ids[1] >= 0) {
        std::vector<double> db(up.size());
        if (elementwise_mul) {
          const double* pa2 = a.ptr();
          for (std::int64_t i = 0; i < sz; ++i) db[static_cast<std::size_t>(i)] = up[static_cast<std::size_t>(i)] * pa2[i];
        } else {
          for (std::int64_t i = 0; i < sz; ++i) db[static_cast<std::size_t>(i)] = bsign * up[static_cast<std::size_t>(i)];
        }
        g.accumulate(ids[1], db);
      }
    };
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_same_shape("add", a, b, 1.0, false); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_same_shape("sub", a, b, -1.0, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_same_shape("mul", a, b, 1.0, true); }

Tensor add_rows(const Tensor& a, const Tensor& b) {
  require(a.rank() >= 1 && b.rank() == 1 && a.cols() == b.shape[0],
          "add_rows: expected [..xC] plus [C], got " + shape_str(a.shape) + " and " + shape_str(b.shape));
  const std::int64_t rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) po[r * cols + c] = pa[r * cols + c] + pb[c];
  record("add_rows", out, {&a, &b}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, rows, cols](GradGraph& g, const std::vector<double>& up) {
      if (ids[0] >= 0) g.accumulate(ids[0], up);
      if (ids[1] >= 0) {
        std::vector<double> db(static_cast<std::size_t>(cols), 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c) db[static_cast<std::size_t>(c)] += up[static_cast<std::size_t>(r * cols + c)];
        g.accumulate(ids[1], db);
      }
    };
  });
  return out;
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  require(a.rank() == 2 && s.rank() == 1 && a.shape[0] == s.shape[0],
          "scale_rows: expected [RxC] with [R], got " + shape_str(a.shape) + " and " + shape_str(s.shape));
  const int rows = a.shape[0], cols = a.shape[1];
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  const double* ps = s.ptr();
  double* po = out.ptr();
  for (int r = 0; r < rows; ++r) {
    const double sr = ps[r];
    for (int c = 0; c < cols; ++c) po[static_cast<std::int64_t>(r) * cols + c] = sr * pa[static_cast<std::int64_t>(r) * cols + c];
  }
  record("scale_rows", out, {&a, &s}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, a, s, rows, cols](GradGraph& g, const std::vector<double>& up) {
      if (ids[0] >= 0) {
        std::vector<double> da(up.size());
        const double* ps2 = s.ptr();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            da[static_cast<std::size_t>(r) * cols + c] = ps2[r] * up[static_cast<std::size_t>(r) * cols + c];
        g.accumulate(ids[0], da);
      }
      if (ids[1] >= 0) {
        std::vector<double> ds(static_cast<std::size_t>(rows), 0.0);
        const double* pa2 = a.ptr();
        for (int r = 0; r < rows; ++r) {
          double acc = 0.0;
          for (int c = 0; c < cols; ++c)
            acc += up[static_cast<std::size_t>(r) * cols + c] * pa2[static_cast<std::int64_t>(r) * cols + c];
          ds[static_cast<std::size_t>(r)] = acc;
        }
        g.accumulate(ids[1], ds);
      }
    };
  });
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = c * pa[i];
  record("scale", out, {&a}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, c](GradGraph& g, const std::vector<double>& up) {
      std::vector<double> da(up.size());
      for (std::size_t i = 0; i < up.size(); ++i) da[i] = c * up[i];
      g.accumulate(ids[0], da);
    };
  });
  return out;
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  require(s.size() == 1, "scale_by: scalar multiplier required, got " + shape_str(s.shape));
  const double c = (*s.data)[0];
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = c * pa[i];
  record("scale_by", out, {&a, &s}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, a, c](GradGraph& g, const std::vector<double>& up) {
      if (ids[0] >= 0) {
        std::vector<double> da(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) da[i] = c * up[i];
        g.accumulate(ids[0], da);
      }
      if (ids[1] >= 0) {
        double acc = 0.0;
        const double* pa2 = a.ptr();
        for (std::size_t i = 0; i < up.size(); ++i) acc += up[i] * pa2[i];
        g.accumulate(ids[1], {acc});
      }
    };
  });
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: at least one part required");
  const int rank = parts[0].rank();
  require(axis >= 0 && axis < rank, "concat: axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  std::vector<int> out_shape = parts[0].shape;
  int total_axis = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == rank, "concat: rank mismatch, " + shape_str(parts[0].shape) + " vs " + shape_str(p.shape));
    for (int d = 0; d < rank; ++d) {
      if (d != axis) {
        require(p.shape[static_cast<std::size_t>(d)] == out_shape[static_cast<std::size_t>(d)],
                "concat: shape mismatch off axis, " + shape_str(parts[0].shape) + " vs " + shape_str(p.shape));
      }
    }
    total_axis += p.shape[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = total_axis;
  Tensor out = Tensor::zeros(out_shape);

  const std::int64_t outer = outer_extent(out_shape, axis);
  const std::int64_t inner = inner_extent(out_shape, axis);
  double* po = out.ptr();
  std::int64_t axis_off = 0;
  std::vector<std::int64_t> offsets;  // axis offset per part, saved for backward
  for (const Tensor& p : parts) {
    offsets.push_back(axis_off);
    const std::int64_t pa = p.shape[static_cast<std::size_t>(axis)];
    const double* pp = p.ptr();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::memcpy(po + (o * total_axis + axis_off) * inner, pp + o * pa * inner,
                  static_cast<std::size_t>(pa * inner) * sizeof(double));
    }
    axis_off += pa;
  }

  GradGraph* g = GradGraph::active();
  if (g) {
    std::vector<std::int64_t> ids;
    bool tracked = false;
    for (const Tensor& p : parts) {
      ids.push_back(g->input_id(p));
      tracked = tracked || ids.back() >= 0;
    }
    if (tracked) {
      std::vector<std::int64_t> axis_sizes;
      for (const Tensor& p : parts) axis_sizes.push_back(p.shape[static_cast<std::size_t>(axis)]);
      std::int64_t id = g->add_node(
          "concat", out.size(),
          [ids, offsets, axis_sizes, outer, inner, total_axis](GradGraph& gg, const std::vector<double>& up) {
            for (std::size_t pi = 0; pi < ids.size(); ++pi) {
              if (ids[pi] < 0) continue;
              const std::int64_t pa = axis_sizes[pi];
              std::vector<double> dp(static_cast<std::size_t>(outer * pa * inner));
              for (std::int64_t o = 0; o < outer; ++o) {
                std::memcpy(dp.data() + o * pa * inner, up.data() + (o * total_axis + offsets[pi]) * inner,
                            static_cast<std::size_t>(pa * inner) * sizeof(double));
              }
              gg.accumulate(ids[pi], dp);
            }
          });
      g->tag_output(out, id);
    }
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  require(axis >= 0 && axis < a.rank(),
          "slice: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape));
  const int extent = a.shape[static_cast<std::size_t>(axis)];
  require(start >= 0 && len > 0 && start + len <= extent,
          "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) + ") out of bounds for " +
              shape_str(a.shape) + " on axis " + std::to_string(axis));
  std::vector<int> out_shape = a.shape;
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor out = Tensor::zeros(out_shape);
  const std::int64_t outer = outer_extent(a.shape, axis);
  const std::int64_t inner = inner_extent(a.shape, axis);
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::memcpy(po + o * len * inner, pa + (o * extent + start) * inner,
                static_cast<std::size_t>(len * inner) * sizeof(double));
  }
  record("slice", out, {&a}, [&](const std::vector<std::int64_t>& ids) {
    const std::int64_t a_size = a.size();
    return [ids, outer, inner, extent, start, len, a_size](GradGraph& g, const std::vector<double>& up) {
      std::vector<double> da(static_cast<std::size_t>(a_size), 0.0);
      for (std::int64_t o = 0; o < outer; ++o) {
        std::memcpy(da.data() + (o * extent + start) * inner, up.data() + o * len * inner,
                    static_cast<std::size_t>(len * inner) * sizeof(double));
      }
      g.accumulate(ids[0], da);
    };
  });
  return out;
}

Tensor mean(const Tensor& a, int axis) {
  require(axis >= 0 && axis < a.rank(),
          "mean: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape));
  const std::int64_t outer = outer_extent(a.shape, axis);
  const std::int64_t inner = inner_extent(a.shape, axis);
  const int extent = a.shape[static_cast<std::size_t>(axis)];
  std::vector<int> out_shape;
  for (int d = 0; d < a.rank(); ++d)
    if (d != axis) out_shape.push_back(a.shape[static_cast<std::size_t>(d)]);
  Tensor out = Tensor::zeros(out_shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const double inv = 1.0 / extent;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (int j = 0; j < extent; ++j) acc += pa[(o * extent + j) * inner + i];
      po[o * inner + i] = acc * inv;
    }
  }
  record("mean", out, {&a}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, outer, inner, extent, inv](GradGraph& g, const std::vector<double>& up) {
      std::vector<double> da(static_cast<std::size_t>(outer * extent * inner));
      for (std::int64_t o = 0; o < outer; ++o)
        for (int j = 0; j < extent; ++j)
          for (std::int64_t i = 0; i < inner; ++i)
            da[static_cast<std::size_t>((o * extent + j) * inner + i)] = up[static_cast<std::size_t>(o * inner + i)] * inv;
      g.accumulate(ids[0], da);
    };
  });
  return out;
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  require(shape_size(new_shape) == a.size(),
          "reshape: element count mismatch, " + shape_str(a.shape) + " -> " + shape_str(new_shape));
  Tensor out;
  out.shape = std::move(new_shape);
  out.data = a.data;  // view: same buffer
  out.requires_grad = a.requires_grad;
  record("reshape", out, {&a}, [&](const std::vector<std::int64_t>& ids) {
    return [ids](GradGraph& g, const std::vector<double>& up) { g.accumulate(ids[0], up); };
  });
  return out;
}

namespace {

template <typename FwdFn, typename DerivFn>
Tensor unary_elementwise(const char* op, const Tensor& a, FwdFn f, DerivFn df) {
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  record(op, out, {&a}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, a, df](GradGraph& g, const std::vector<double>& up) {
      std::vector<double> da(up.size());
      const double* pa2 = a.ptr();
      for (std::size_t i = 0; i < up.size(); ++i) da[i] = up[i] * df(pa2[i]);
      g.accumulate(ids[0], da);
    };
  });
  return out;
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_elementwise(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor softmax(const Tensor& a) {
  require(a.rank() >= 1, "softmax: rank >= 1 required, got " + shape_str(a.shape));
  require_finite(a, "softmax");
  const std::int64_t rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(a.shape);
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = pa + r * cols;
    double* y = po + r * cols;
    double mx = x[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = x[c] > mx ? x[c] : mx;
    double sum = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    const double inv = 1.0 / sum;
    for (std::int64_t c = 0; c < cols; ++c) y[c] *= inv;
  }
  record("softmax", out, {&a}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, out, rows, cols](GradGraph& g, const std::vector<double>& up) {
      std::vector<double> da(up.size());
      const double* y = out.ptr();
      for (std::int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) dot += up[static_cast<std::size_t>(r * cols + c)] * y[r * cols + c];
        for (std::int64_t c = 0; c < cols; ++c)
          da[static_cast<std::size_t>(r * cols + c)] = y[r * cols + c] * (up[static_cast<std::size_t>(r * cols + c)] - dot);
      }
      g.accumulate(ids[0], da);
    };
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require(x.rank() >= 1, "layer_norm: rank >= 1 required, got " + shape_str(x.shape));
  const std::int64_t cols = x.cols();
  require(gamma.rank() == 1 && gamma.shape[0] == cols && beta.rank() == 1 && beta.shape[0] == cols,
          "layer_norm: gamma/beta must be [" + std::to_string(cols) + "], got " + shape_str(gamma.shape) + " and " +
              shape_str(beta.shape));
  require_finite(x, "layer_norm");
  const std::int64_t rows = x.rows();
  Tensor out = Tensor::zeros(x.shape);
  // Saved normalized activations and inverse stddevs for backward.
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.size()));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  const double* px = x.ptr();
  const double* pg = gamma.ptr();
  const double* pb = beta.ptr();
  double* po = out.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = px + r * cols;
    double mu = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      const double d = xr[c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    if (!std::isfinite(var)) {
      throw std::invalid_argument("layer_norm: variance overflow in row " + std::to_string(r));
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = inv;
    for (std::int64_t c = 0; c < cols; ++c) {
      const double h = (xr[c] - mu) * inv;
      (*xhat)[static_cast<std::size_t>(r * cols + c)] = h;
      po[r * cols + c] = pg[c] * h + pb[c];
    }
  }
  record("layer_norm", out, {&x, &gamma, &beta}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, gamma, xhat, inv_std, rows, cols](GradGraph& g, const std::vector<double>& up) {
      const double* pg2 = gamma.ptr();
      if (ids[0] >= 0) {
        std::vector<double> dx(up.size());
        for (std::int64_t r = 0; r < rows; ++r) {
          const double inv = (*inv_std)[static_cast<std::size_t>(r)];
          double mean_h = 0.0, mean_hx = 0.0;
          for (std::int64_t c = 0; c < cols; ++c) {
            const double h = up[static_cast<std::size_t>(r * cols + c)] * pg2[c];
            mean_h += h;
            mean_hx += h * (*xhat)[static_cast<std::size_t>(r * cols + c)];
          }
          mean_h /= static_cast<double>(cols);
          mean_hx /= static_cast<double>(cols);
          for (std::int64_t c = 0; c < cols; ++c) {
            const double h = up[static_cast<std::size_t>(r * cols + c)] * pg2[c];
            dx[static_cast<std::size_t>(r * cols + c)] =
                inv * (h - mean_h - (*xhat)[static_cast<std::size_t>(r * cols + c)] * mean_hx);
          }
        }
        g.accumulate(ids[0], dx);
      }
      if (ids[1] >= 0) {
        std::vector<double> dg(static_cast<std::size_t>(cols), 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c)
            dg[static_cast<std::size_t>(c)] +=
                up[static_cast<std::size_t>(r * cols + c)] * (*xhat)[static_cast<std::size_t>(r * cols + c)];
        g.accumulate(ids[1], dg);
      }
      if (ids[2] >= 0) {
        std::vector<double> db(static_cast<std::size_t>(cols), 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c) db[static_cast<std::size_t>(c)] += up[static_cast<std::size_t>(r * cols + c)];
        g.accumulate(ids[2], db);
      }
    };
  });
  return out;
}

Tensor l2_normalize(const Tensor& a) {
  require(a.rank() >= 1, "l2_normalize: rank >= 1 required, got " + shape_str(a.shape));
  require_finite(a, "l2_normalize");
  const std::int64_t rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(a.shape);
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  const double* pa = a.ptr();
  double* po = out.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) sq += pa[r * cols + c] * pa[r * cols + c];
    const double n = std::sqrt(sq);
    if (n == 0.0) throw std::invalid_argument("l2_normalize: zero-norm row " + std::to_string(r));
    if (!std::isfinite(n)) throw std::invalid_argument("l2_normalize: norm overflow in row " + std::to_string(r));
    (*norms)[static_cast<std::size_t>(r)] = n;
    const double inv = 1.0 / n;
    for (std::int64_t c = 0; c < cols; ++c) po[r * cols + c] = pa[r * cols + c] * inv;
  }
  record("l2_normalize", out, {&a}, [&](const std::vector<std::int64_t>& ids) {
    return [ids, out, norms, rows, cols](GradGraph& g, const std::vector<double>& up) {
      std::vector<double> da(up.size());
      const double* y = out.ptr();
      for (std::int64_t r = 0; r < rows; ++r) {
        const double inv = 1.0 / (*norms)[static_cast<std::size_t>(r)];
        double dot = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) dot += up[static_cast<std::size_t>(r * cols + c)] * y[r * cols + c];
        for (std::int64_t c = 0; c < cols; ++c)
          da[static_cast<std::size_t>(r * cols + c)] = inv * (up[static_cast<std::size_t>(r * cols + c)] - y[r * cols + c] * dot);
      }
      g.accumulate(ids[0], da);
    };
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  require(logits.rank() == 2, "cross_entropy: rank-2 logits required, got " + shape_str(logits.shape));
  const int rows = logits.shape[0], cols = logits.shape[1];
  require(static_cast<int>(targets.size()) == rows,
          "cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
  for (int t : targets) {
    require(t >= 0 && t < cols, "cross_entropy: target " + std::to_string(t) + " out of range [0," + std::to_string(cols) + ")");
  }
  require_finite(logits, "cross_entropy");
  const double* px = logits.ptr();
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(logits.size()));
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const double* xr = px + static_cast<std::int64_t>(r) * cols;
    double mx = xr[0];
    for (int c = 1; c < cols; ++c) mx = xr[c] > mx ? xr[c] : mx;
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double e = std::exp(xr[c] - mx);
      (*probs)[static_cast<std::size_t>(r) * cols + c] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < cols; ++c) (*probs)[static_cast<std::size_t>(r) * cols + c] *= inv;
    total += mx + std::log(sum) - xr[targets[static_cast<std::size_t>(r)]];
  }
  Tensor out = Tensor::scalar(total / rows);
  record("cross_entropy", out, {&logits}, [&](const std::vector<std::int64_t>& ids) {
    auto tgt = targets;
    return [ids, probs, tgt, rows, cols](GradGraph& g, const std::vector<double>& up) {
      const double u = up[0] / rows;
      std::vector<double> dx(probs->size());
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          double v = (*probs)[static_cast<std::size_t>(r) * cols + c];
          if (c == tgt[static_cast<std::size_t>(r)]) v -= 1.0;
          dx[static_cast<std::size_t>(r) * cols + c] = u * v;
        }
      }
      g.accumulate(ids[0], dx);
    };
  });
  return out;
}

Tensor rows_select(const Tensor& table, const std::vector<int>& ids) {
  require(table.rank() == 2, "rows_select: rank-2 table required, got " + shape_str(table.shape));
  const int v = table.shape[0], d = table.shape[1];
  for (int id : ids) {
    require(id >= 0 && id < v, "rows_select: id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
  }
  const int m = static_cast<int>(ids.size());
  Tensor out = Tensor::zeros({m, d});
  const double* pt = table.ptr();
  double* po = out.ptr();
  for (int r = 0; r < m; ++r)
    std::memcpy(po + static_cast<std::int64_t>(r) * d, pt + static_cast<std::int64_t>(ids[static_cast<std::size_t>(r)]) * d,
                static_cast<std::size_t>(d) * sizeof(double));
  record("rows_select", out, {&table}, [&](const std::vector<std::int64_t>& nids) {
    auto sel = ids;
    const std::int64_t tsize = table.size();
    return [nids, sel, d, tsize](GradGraph& g, const std::vector<double>& up) {
      std::vector<double> dt(static_cast<std::size_t>(tsize), 0.0);
      for (std::size_t r = 0; r < sel.size(); ++r)
        for (int c = 0; c < d; ++c)
          dt[static_cast<std::size_t>(sel[r]) * d + c] += up[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
      g.accumulate(nids[0], dt);
    };
  });
  return out;
}

}  // namespace mva
