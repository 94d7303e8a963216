#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ltbr/tensor.hpp"

namespace ltbr {

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
  double autodiff_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Compares the taped gradient of `f` at `x` against central finite
// differences, coordinate by coordinate. `f` must map a tensor of x's shape to
// a 1-element tensor and be deterministic. Relative error uses
// |ad - fd| / max(1, |ad|, |fd|).
inline GradCheckReport finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                               const Tensor& x, double step = 1e-5,
                                               double tol = 1e-4) {
  if (!(step > 0.0)) fail(Err::InvalidArgument, "finite difference step must be positive");
  Tensor autograd;
  {
    Tape tape;
    Tensor xw = x;
    tape.watch(xw);
    Tensor y = f(xw);
    GradientMap g = tape.backward(y);
    autograd = g.grad(xw);
  }
  std::vector<double> base(x.data().begin(), x.data().end());
  GradCheckReport rep;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> hi = base, lo = base;
    hi[i] += step;
    lo[i] -= step;
    double fhi = f(Tensor(x.shape(), std::move(hi))).item();
    double flo = f(Tensor(x.shape(), std::move(lo))).item();
    double fd = (fhi - flo) / (2.0 * step);
    double ad = autograd.at(i);
    double denom = std::max({1.0, std::fabs(ad), std::fabs(fd)});
    double rel = std::fabs(ad - fd) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_coord = i;
      rep.autodiff_at_worst = ad;
      rep.numeric_at_worst = fd;
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace ltbr
