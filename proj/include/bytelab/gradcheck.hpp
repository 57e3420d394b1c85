#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "bytelab/model.hpp"
#include "bytelab/tensor.hpp"

namespace bytelab {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t coords_checked = 0;
  bool nonfinite_seen = false;
};

// Central finite differences against reverse-mode gradients, 64-bit only.
// Error per coordinate is |ad - fd| / max(1, |ad|, |fd|): relative for large
// gradients, absolute below unit scale where FD cancellation noise dominates
// any ratio.
//
// f evaluates the scalar loss from a param store; grads receives the analytic
// gradient for each parameter (same shapes).
inline GradCheckReport grad_check(
    const std::function<double(const ParamStore<double>&)>& f,
    ParamStore<double> params,
    const std::map<std::string, Tensor<double>>& grads,
    double eps = 1e-5) {
  GradCheckReport rep;
  for (auto& [name, t] : params.params) {
    const Tensor<double>& g = grads.at(name);
    for (int64_t i = 0; i < t.size(); ++i) {
      double saved = t.v[i];
      t.v[i] = saved + eps;
      double fp = f(params);
      t.v[i] = saved - eps;
      double fm = f(params);
      t.v[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        rep.nonfinite_seen = true;
        continue;
      }
      double fd = (fp - fm) / (2.0 * eps);
      double ad = g.v[i];
      double err = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      ++rep.coords_checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_param = name;
        rep.worst_index = i;
        rep.worst_analytic = ad;
        rep.worst_numeric = fd;
      }
    }
  }
  return rep;
}

}  // namespace bytelab
