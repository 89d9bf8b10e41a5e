#pragma once

#include "nullguard/corpus.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace nullguard {

enum class StatMethod { pearson, fleiss_kappa };

std::string_view to_string(StatMethod m) noexcept;

struct StatResult {
  double value = 0.0;
  /// Two-tailed; only for Pearson.
  std::optional<double> p_value;
  std::size_t n = 0;
  StatMethod method = StatMethod::pearson;
};

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_tailed_p(double t, double dof);

/// Product-moment correlation with a two-tailed t-test p-value. Needs equal
/// lengths >= 3 and nonzero variance in both series.
StatResult pearson(std::span<const double> x, std::span<const double> y);

/// Items x categories count table; every row must sum to `raters`.
using CountTable = std::vector<std::vector<int>>;

StatResult fleiss_kappa(const CountTable& table, int raters = 3);

/// Pearson between ±1-coded affect and IN=+1/OUT=-1, over records with both labels.
StatResult affect_igr_correlation(std::span<const TweetRecord> records);

/// Pearson between the raw specificity score and the IGR code.
StatResult specificity_igr_correlation(std::span<const TweetRecord> records);

/// HIGH/LOW tweets only, coded +1/-1, against the IGR code.
StatResult extremes_correlation(std::span<const TweetRecord> records);

/// Count tables for the feeling and judgment questions (four categories each).
CountTable feeling_table(std::span<const AnnotationRecord> annotations);
CountTable judgment_table(std::span<const AnnotationRecord> annotations);

}  // namespace nullguard
