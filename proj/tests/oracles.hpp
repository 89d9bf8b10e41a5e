#pragma once

// Reference implementations used only by tests. They are written
// independently of the library code (different precision, different
// formulation) so that agreement means something.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace oracle {

/// Product-moment r accumulated in long double, two passes.
inline long double pearson_r(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double dx = x[i] - mx;
    const long double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Student-t density.
inline long double t_density(long double x, long double nu) {
  const long double log_c = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5L * std::log(nu * M_PIl);
  return std::exp(log_c - (nu + 1) / 2 * std::log1p(x * x / nu));
}

namespace detail {

template <typename F>
long double simpson(F& f, long double a, long double b, long double fa, long double fm, long double fb,
                    long double whole, long double eps, int depth) {
  const long double m = (a + b) / 2;
  const long double lm = (a + m) / 2;
  const long double rm = (m + b) / 2;
  const long double flm = f(lm);
  const long double frm = f(rm);
  const long double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const long double right = (b - m) / 6 * (fm + 4 * frm + fb);
  const long double diff = left + right - whole;
  if (depth <= 0 || std::fabs(diff) <= 15 * eps) return left + right + diff / 15;
  return simpson(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature on [a, b].
template <typename F>
long double integrate(F f, long double a, long double b, long double eps = 1e-15L) {
  const long double fa = f(a);
  const long double fb = f(b);
  const long double fm = f((a + b) / 2);
  const long double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  return detail::simpson(f, a, b, fa, fm, fb, whole, eps, 60);
}

/// Two-tailed p by integrating the t density. Near zero this is
/// 1 - 2 * integral over [0, |t|]; further out the tail itself is integrated
/// after substituting x = 1/u, which maps it onto the finite range [0, 1/|t|].
inline long double t_two_tailed_p(long double t, long double nu) {
  const long double a = std::fabs(t);
  if (a <= 1) {
    return 1 - 2 * integrate([nu](long double x) { return t_density(x, nu); }, 0, a);
  }
  const long double log_c = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5L * std::log(nu * M_PIl);
  // f(1/u) / u^2 = c * nu^((nu+1)/2) * u^(nu-1) * (1 + nu u^2)^(-(nu+1)/2)
  auto tail = [nu, log_c](long double u) -> long double {
    if (u == 0) return nu == 1 ? std::exp(log_c) : 0;
    return std::exp(log_c + (nu + 1) / 2 * std::log(nu) + (nu - 1) * std::log(u) -
                    (nu + 1) / 2 * std::log1p(nu * u * u));
  };
  return 2 * integrate(tail, 0, 1 / a);
}

/// Fleiss's kappa from an explicit list of rater labels per item, counting
/// agreeing rater pairs one by one.
inline long double fleiss_kappa(const std::vector<std::vector<int>>& labels, int n_categories) {
  const std::size_t items = labels.size();
  long double p_bar = 0;
  std::vector<long double> share(n_categories, 0);
  long double total_ratings = 0;
  for (const auto& item : labels) {
    int agreeing_pairs = 0;
    int pairs = 0;
    for (std::size_t a = 0; a < item.size(); ++a) {
      for (std::size_t b = a + 1; b < item.size(); ++b) {
        ++pairs;
        agreeing_pairs += item[a] == item[b];
      }
      share[item[a]] += 1;
      total_ratings += 1;
    }
    p_bar += static_cast<long double>(agreeing_pairs) / pairs;
  }
  p_bar /= items;
  long double p_e = 0;
  for (long double s : share) p_e += (s / total_ratings) * (s / total_ratings);
  return (p_bar - p_e) / (1 - p_e);
}

/// Majority answer of three (index into the category list), or `mixed` when all differ.
inline int majority_of_three(std::array<int, 3> answers, int mixed) {
  for (int candidate : answers) {
    if (std::count(answers.begin(), answers.end(), candidate) >= 2) return candidate;
  }
  return mixed;
}

}  // namespace oracle
