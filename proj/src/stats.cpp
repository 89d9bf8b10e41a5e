#include "nullguard/stats.hpp"

#include "nullguard/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace nullguard {

std::string_view to_string(StatMethod m) noexcept {
  return m == StatMethod::pearson ? "pearson" : "fleiss_kappa";
}

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(Errc::invalid_argument, "incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(Errc::invalid_argument, "incomplete beta needs x in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, double dof) {
  if (!(dof > 0.0)) throw Error(Errc::invalid_argument, "t distribution needs positive degrees of freedom");
  if (std::isinf(t)) return 0.0;
  if (std::isnan(t)) throw Error(Errc::invalid_argument, "t statistic is NaN");
  return regularized_incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

StatResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(Errc::dimension_mismatch, fmt::format("pearson: series lengths differ ({} vs {})", x.size(), y.size()));
  }
  const std::size_t n = x.size();
  if (n < 3) throw Error(Errc::invalid_argument, fmt::format("pearson: need at least 3 observations, got {}", n));
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(Errc::degenerate_series, "degenerate series");
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);

  StatResult out;
  out.value = r;
  out.n = n;
  out.method = StatMethod::pearson;
  const double dof = static_cast<double>(n - 2);
  if (std::fabs(r) == 1.0) {
    out.p_value = 0.0;
  } else {
    const double t = r * std::sqrt(dof / (1.0 - r * r));
    out.p_value = student_t_two_tailed_p(t, dof);
  }
  return out;
}

StatResult fleiss_kappa(const CountTable& table, int raters) {
  if (raters < 2) throw Error(Errc::invalid_argument, "fleiss_kappa: need at least 2 raters");
  if (table.size() < 2) throw Error(Errc::invalid_argument, "fleiss_kappa: need at least 2 items");
  const std::size_t k = table.front().size();
  if (k == 0) throw Error(Errc::invalid_argument, "fleiss_kappa: no categories");
  std::vector<double> column(k, 0.0);
  double p_bar = 0.0;
  const double r = raters;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& row = table[i];
    if (row.size() != k) throw Error(Errc::dimension_mismatch, fmt::format("fleiss_kappa: row {} has {} categories, expected {}", i, row.size(), k));
    long sum = 0;
    double agree = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j] < 0) throw Error(Errc::invalid_argument, fmt::format("fleiss_kappa: negative count in row {}", i));
      sum += row[j];
      agree += static_cast<double>(row[j]) * (row[j] - 1);
      column[j] += row[j];
    }
    if (sum != raters) {
      throw Error(Errc::invalid_argument, fmt::format("fleiss_kappa: row {} sums to {}, expected {}", i, sum, raters));
    }
    p_bar += agree / (r * (r - 1.0));
  }
  const double n = static_cast<double>(table.size());
  p_bar /= n;
  double p_e = 0.0;
  for (double c : column) {
    const double pj = c / (n * r);
    p_e += pj * pj;
  }
  StatResult out;
  out.n = table.size();
  out.method = StatMethod::fleiss_kappa;
  // Everyone used one category: chance agreement is total, and so is observed agreement.
  out.value = p_e == 1.0 ? 1.0 : (p_bar - p_e) / (1.0 - p_e);
  return out;
}

namespace {

double igr_code(Igr igr) { return igr == Igr::in ? 1.0 : -1.0; }

StatResult labelled_pearson(std::vector<double>& x, std::vector<double>& y, const char* what) {
  if (x.size() < 3) {
    throw Error(Errc::invalid_argument, fmt::format("{}: need at least 3 labelled records, got {}", what, x.size()));
  }
  return pearson(x, y);
}

}  // namespace

StatResult affect_igr_correlation(std::span<const TweetRecord> records) {
  std::vector<double> x;
  std::vector<double> y;
  for (const TweetRecord& r : records) {
    if (r.affect == Affect::unknown || r.igr == Igr::unknown) continue;
    x.push_back(static_cast<double>(static_cast<int>(r.affect)));
    y.push_back(igr_code(r.igr));
  }
  return labelled_pearson(x, y, "affect-IGR correlation");
}

StatResult specificity_igr_correlation(std::span<const TweetRecord> records) {
  std::vector<double> x;
  std::vector<double> y;
  for (const TweetRecord& r : records) {
    if (!r.specificity || r.igr == Igr::unknown) continue;
    x.push_back(*r.specificity);
    y.push_back(igr_code(r.igr));
  }
  return labelled_pearson(x, y, "specificity-IGR correlation");
}

StatResult extremes_correlation(std::span<const TweetRecord> records) {
  std::vector<double> x;
  std::vector<double> y;
  for (const TweetRecord& r : records) {
    if (!r.specificity || r.igr == Igr::unknown) continue;
    const SpecificityBin bin = binarize_specificity(*r.specificity);
    if (bin == SpecificityBin::excluded) continue;
    x.push_back(bin == SpecificityBin::high ? 1.0 : -1.0);
    y.push_back(igr_code(r.igr));
  }
  return labelled_pearson(x, y, "extremes correlation");
}

CountTable feeling_table(std::span<const AnnotationRecord> annotations) {
  CountTable table;
  table.reserve(annotations.size());
  for (const AnnotationRecord& a : annotations) {
    std::vector<int> row(4, 0);
    for (Feeling f : a.feeling) ++row[static_cast<std::size_t>(f)];
    table.push_back(std::move(row));
  }
  return table;
}

CountTable judgment_table(std::span<const AnnotationRecord> annotations) {
  CountTable table;
  table.reserve(annotations.size());
  for (const AnnotationRecord& a : annotations) {
    std::vector<int> row(4, 0);
    for (Judgment j : a.judgment) ++row[static_cast<std::size_t>(j)];
    table.push_back(std::move(row));
  }
  return table;
}

}  // namespace nullguard
