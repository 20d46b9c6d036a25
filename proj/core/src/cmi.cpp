#include "mva/cmi.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace mva {

Tensor kron(const Tensor& lhs, const Tensor& rhs) {
  if (lhs.rank() != 2 || rhs.rank() != 2) {
    throw std::invalid_argument("kron: rank-2 operands required, got " + shape_str(lhs.shape) + " and " +
                                shape_str(rhs.shape));
  }
  const int m = lhs.shape[0], n = lhs.shape[1];
  const int p = rhs.shape[0], q = rhs.shape[1];
  Tensor out = Tensor::zeros({m * p, n * q});
  const double* pl = lhs.ptr();
  const double* pr = rhs.ptr();
  double* po = out.ptr();
  const std::int64_t out_cols = static_cast<std::int64_t>(n) * q;
  for (int i = 0; i < m; ++i) {
    for (int a = 0; a < p; ++a) {
      double* row = po + (static_cast<std::int64_t>(i) * p + a) * out_cols;
      for (int j = 0; j < n; ++j) {
        const double lij = pl[static_cast<std::int64_t>(i) * n + j];
        for (int b = 0; b < q; ++b) row[static_cast<std::int64_t>(j) * q + b] = lij * pr[static_cast<std::int64_t>(a) * q + b];
      }
    }
  }

  GradGraph* g = GradGraph::active();
  if (g) {
    const std::int64_t il = g->input_id(lhs);
    const std::int64_t ir = g->input_id(rhs);
    if (il >= 0 || ir >= 0) {
      std::int64_t id = g->add_node("kron", out.size(), [il, ir, lhs, rhs, m, n, p, q, out_cols](
                                                            GradGraph& gg, const std::vector<double>& up) {
        if (il >= 0) {
          std::vector<double> dl(static_cast<std::size_t>(m) * n, 0.0);
          const double* pr2 = rhs.ptr();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              double acc = 0.0;
              for (int a = 0; a < p; ++a)
                for (int b = 0; b < q; ++b)
                  acc += up[static_cast<std::size_t>((static_cast<std::int64_t>(i) * p + a) * out_cols +
                                                     static_cast<std::int64_t>(j) * q + b)] *
                         pr2[static_cast<std::int64_t>(a) * q + b];
              dl[static_cast<std::size_t>(i) * n + j] = acc;
            }
          gg.accumulate(il, dl);
        }
        if (ir >= 0) {
          std::vector<double> dr(static_cast<std::size_t>(p) * q, 0.0);
          const double* pl2 = lhs.ptr();
          for (int a = 0; a < p; ++a)
            for (int b = 0; b < q; ++b) {
              double acc = 0.0;
              for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                  acc += up[static_cast<std::size_t>((static_cast<std::int64_t>(i) * p + a) * out_cols +
                                                     static_cast<std::int64_t>(j) * q + b)] *
                         pl2[static_cast<std::int64_t>(i) * n + j];
              dr[static_cast<std::size_t>(a) * q + b] = acc;
            }
          gg.accumulate(ir, dr);
        }
      });
      g->tag_output(out, id);
    }
  }
  return out;
}

Tensor materialize_down(const CmiSpace& space, Modality modality) {
  const Tensor& factor = modality == Modality::Vision ? space.vision_factor : space.text_factor;
  if (factor.size() == 0 || factor.rank() != 2) {
    throw std::invalid_argument(std::string("materialize_down: no factor matrix for ") +
                                (modality == Modality::Vision ? "vision" : "text") + " modality");
  }
  return kron(space.shared, factor);
}

CmiSavings cmi_param_savings(int d, int d_prime, int m, int n) {
  if (d <= 0 || d_prime <= 0 || m <= 0 || n <= 0) {
    throw std::invalid_argument("cmi_param_savings: dimensions must be positive");
  }
  if (d % m != 0) {
    throw std::invalid_argument("cmi_param_savings: m=" + std::to_string(m) + " does not divide d=" + std::to_string(d));
  }
  if (d_prime % n != 0) {
    throw std::invalid_argument("cmi_param_savings: n=" + std::to_string(n) +
                                " does not divide d'=" + std::to_string(d_prime));
  }
  CmiSavings s;
  s.dense = static_cast<std::int64_t>(d) * d_prime;
  s.factored_per_modality = static_cast<std::int64_t>(d / m) * (d_prime / n);
  s.shared = static_cast<std::int64_t>(m) * n;
  return s;
}

}  // namespace mva
