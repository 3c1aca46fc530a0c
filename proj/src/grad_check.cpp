#include "aligncap/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace aligncap {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double central_difference(const std::function<double(double)>& g, double h) {
  const double up = g(h);
  const double down = g(-h);
  // A difference at the rounding resolution of f carries no slope signal.
  const double resolution =
      8.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(up), std::abs(down));
  return std::abs(up - down) <= resolution ? 0.0 : (up - down) / (2.0 * h);
}

// Ridders' polynomial extrapolation of central differences with shrinking
// steps h, h/1.4, ...; returns the tableau entry with the smallest error
// estimate and stops once the estimates start growing.
double ridders_difference(const std::function<double(double)>& g, double h) {
  constexpr std::size_t kTab = 10;
  constexpr double kCon = 1.4, kCon2 = kCon * kCon, kSafe = 2.0;
  double a[kTab][kTab];
  double hh = h;
  a[0][0] = (g(hh) - g(-hh)) / (2.0 * hh);
  double best = a[0][0];
  double err = std::numeric_limits<double>::max();
  for (std::size_t i = 1; i < kTab; ++i) {
    hh /= kCon;
    a[0][i] = (g(hh) - g(-hh)) / (2.0 * hh);
    double fac = kCon2;
    for (std::size_t j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kCon2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

}  // namespace

std::vector<GradCheckReport> finite_diff_check_many(const std::function<Tensor()>& loss,
                                                    std::span<Tensor> tensors, double h,
                                                    double corrupt, DiffMethod method) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");
  for (Tensor& t : tensors) {
    if (!t.requires_grad()) {
      throw std::invalid_argument("finite_diff_check: tensor does not require grad");
    }
    t.zero_grad();
  }
  const Tensor base = loss();
  base.backward();
  const double again = loss().item();
  if (again != base.item()) {
    throw GradCheckError(fmt::format(
        "finite_diff_check: function is not deterministic ({} vs {})", base.item(), again));
  }

  std::vector<GradCheckReport> reports;
  reports.reserve(tensors.size());
  for (Tensor& t : tensors) {
    GradCheckReport report;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      const auto shifted = [&](double d) {
        values[i] = saved + d;
        const double v = loss().item();
        values[i] = saved;
        return v;
      };
      const double numeric = method == DiffMethod::Ridders ? ridders_difference(shifted, h)
                                                           : central_difference(shifted, h);
      const double a = analytic[i] + corrupt;
      const double err = relative_error(a, numeric);
      if (i == 0 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
    reports.push_back(report);
  }
  return reports;
}

GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                  double h) {
  Tensor tensors[] = {x};
  return finite_diff_check_many([&] { return f(x); }, tensors, h).front();
}

}  // namespace aligncap
