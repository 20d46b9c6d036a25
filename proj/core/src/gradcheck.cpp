#include "mva/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace mva {

double finite_diff_check(const std::function<double()>& loss_fn,
                         const std::vector<std::pair<std::string, Tensor>>& params,
                         const std::unordered_map<std::string, Tensor>& analytic, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  const double probe1 = loss_fn();
  const double probe2 = loss_fn();
  if (!(probe1 == probe2)) {
    throw std::invalid_argument("finite_diff_check: loss_fn is not deterministic (" + std::to_string(probe1) +
                                " vs " + std::to_string(probe2) + ")");
  }

  double max_rel_err = 0.0;
  for (const auto& [name, param] : params) {
    const Tensor* grad = nullptr;
    auto it = analytic.find(name);
    if (it != analytic.end()) grad = &it->second;

    double* p = param.data->data();
    const std::int64_t n = param.size();
    for (std::int64_t i = 0; i < n; ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double f_plus = loss_fn();
      p[i] = saved - eps;
      const double f_minus = loss_fn();
      p[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double analytic_v = grad ? grad->ptr()[i] : 0.0;
      const double denom = std::abs(analytic_v) + std::abs(numeric);
      const double rel = std::abs(analytic_v - numeric) / (denom > 1e-12 ? denom : 1e-12);
      if (rel > max_rel_err) max_rel_err = rel;
    }
  }
  return max_rel_err;
}

}  // namespace mva
