#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aligncap/tensor.hpp"

namespace aligncap {

/// Thrown when the function under test does not reproduce its own value.
class GradCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the reverse-mode gradient of scalar `f(x)` with central
/// differences of step `h` and returns the worst coordinate.
///
/// `f` must be deterministic: any randomness (dropout, sampling) has to be
/// replayed from a fixed seed on every call. The check evaluates `f` twice
/// at the unperturbed point and throws GradCheckError if the values differ.
GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                  double h = 1e-5);

enum class DiffMethod {
  Central,  // single central difference with step h
  Ridders,  // central differences from h downwards, Richardson-extrapolated
};

/// Multi-tensor variant used for whole-model checks: `loss` closes over the
/// tensors, which are perturbed in place. One report per tensor, in order.
/// `corrupt` (test hook) is added to every analytic gradient coordinate.
std::vector<GradCheckReport> finite_diff_check_many(const std::function<Tensor()>& loss,
                                                    std::span<Tensor> tensors, double h = 1e-5,
                                                    double corrupt = 0.0,
                                                    DiffMethod method = DiffMethod::Central);

}  // namespace aligncap
