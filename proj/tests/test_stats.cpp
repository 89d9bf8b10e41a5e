#include "nullguard/error.hpp"
#include "nullguard/rng.hpp"
#include "nullguard/stats.hpp"
#include "nullguard/synthgen.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace nullguard;

namespace {

std::vector<double> gaussian_series(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

TweetRecord labelled(std::uint64_t id, Igr igr, Affect affect, std::optional<float> specificity) {
  TweetRecord r;
  r.tweet_id = id;
  r.igr = igr;
  r.affect = affect;
  r.specificity = specificity;
  r.embeddings = Embeddings::Zero(1, 1);
  return r;
}

}  // namespace

TEST_CASE("pearson examples") {
  const std::vector<double> x{1, 2, 3};
  CHECK(pearson(x, std::vector<double>{2, 4, 6}).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(x, std::vector<double>{6, 4, 2}).value == doctest::Approx(-1.0).epsilon(1e-15));
  const auto r = pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4});
  CHECK(r.value == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(r.n == 4);
  CHECK(r.method == StatMethod::pearson);
  REQUIRE(r.p_value.has_value());
  // t = 0.8 * sqrt(2 / 0.36) with 2 degrees of freedom.
  CHECK(*r.p_value == doctest::Approx(static_cast<double>(oracle::t_two_tailed_p(0.8L * std::sqrt(2.0L / 0.36L), 2)))
                          .epsilon(1e-10));
  CHECK(*pearson(x, std::vector<double>{2, 4, 6}).p_value == 0.0);
}

TEST_CASE("pearson errors") {
  const std::vector<double> x{1, 2, 3};
  CHECK_THROWS_WITH_AS(pearson(x, std::vector<double>{5, 5, 5}), "degenerate series", Error);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{2, 1}), Error);
}

TEST_CASE("property: pearson against the long-double oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + rng.below(200);
    const double rho = 2 * rng.uniform() - 1;
    std::vector<double> x = gaussian_series(rng, n), y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * rng.normal();
    const auto r = pearson(x, y);
    const long double expected = oracle::pearson_r(x, y);
    CHECK(std::abs(r.value - static_cast<double>(expected)) < 1e-12);
    const long double t = expected * std::sqrt((n - 2) / (1 - expected * expected));
    CHECK(std::abs(*r.p_value - static_cast<double>(oracle::t_two_tailed_p(t, n - 2))) < 1e-10);
    CHECK(*r.p_value >= 0.0);
    CHECK(*r.p_value <= 1.0);
  }
}

TEST_CASE("property: pearson self-correlation and affine invariance") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.below(100);
    const auto x = gaussian_series(rng, n);
    const auto y = gaussian_series(rng, n);
    CHECK(pearson(x, x).value == doctest::Approx(1.0).epsilon(1e-12));
    // The offset is kept comparable to the scaled spread: a shift much larger
    // than the data loses digits when a * x + b is stored, whatever r does.
    const double a = std::exp(14 * rng.uniform() - 7);
    const double b = 10 * a * rng.normal();
    std::vector<double> ax(n);
    for (std::size_t i = 0; i < n; ++i) ax[i] = a * x[i] + b;
    CHECK(std::abs(pearson(ax, y).value - pearson(x, y).value) < 1e-12);
    // A negative scale flips the sign only.
    for (double& v : ax) v = -v;
    CHECK(std::abs(pearson(ax, y).value + pearson(x, y).value) < 1e-12);
  }
}

TEST_CASE("student t p-values") {
  CHECK(student_t_two_tailed_p(0.0, 5) == doctest::Approx(1.0));
  // Cauchy: P(|T| > 1) = 1/2.
  CHECK(student_t_two_tailed_p(1.0, 1) == doctest::Approx(0.5).epsilon(1e-14));
  // Two degrees of freedom have a closed form: 1 - |t| / sqrt(t^2 + 2).
  for (double t : {0.1, 0.7, 2.0, 9.0, 40.0}) {
    CHECK(student_t_two_tailed_p(t, 2) == doctest::Approx(1 - t / std::sqrt(t * t + 2)).epsilon(1e-12));
    CHECK(student_t_two_tailed_p(-t, 2) == student_t_two_tailed_p(t, 2));
  }
  for (double dof : {3.0, 10.0, 50.0, 3031.0}) {
    for (double t : {0.05, 0.5, 1.5, 3.0, 6.0}) {
      CHECK(std::abs(student_t_two_tailed_p(t, dof) - static_cast<double>(oracle::t_two_tailed_p(t, dof))) < 1e-10);
    }
  }
}

TEST_CASE("incomplete beta") {
  CHECK(regularized_incomplete_beta(2, 3, 0) == 0.0);
  CHECK(regularized_incomplete_beta(2, 3, 1) == 1.0);
  // I_x(1, b) = 1 - (1 - x)^b and I_x(a, 1) = x^a.
  for (double x : {0.1, 0.5, 0.93}) {
    CHECK(regularized_incomplete_beta(1, 4.5, x) == doctest::Approx(1 - std::pow(1 - x, 4.5)).epsilon(1e-13));
    CHECK(regularized_incomplete_beta(2.5, 1, x) == doctest::Approx(std::pow(x, 2.5)).epsilon(1e-13));
    CHECK(regularized_incomplete_beta(3, 7, x) + regularized_incomplete_beta(7, 3, 1 - x) ==
          doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("fleiss kappa examples") {
  SUBCASE("perfect agreement") {
    const CountTable t{{3, 0, 0}, {0, 3, 0}, {0, 0, 3}, {3, 0, 0}};
    const auto k = fleiss_kappa(t);
    CHECK(k.value == 1.0);
    CHECK(k.method == StatMethod::fleiss_kappa);
    CHECK_FALSE(k.p_value.has_value());
    CHECK(k.n == 4);
  }
  SUBCASE("two categories split 2/1 with even marginals") {
    const CountTable t{{2, 1}, {1, 2}, {2, 1}, {1, 2}};
    const std::vector<std::vector<int>> labels{{0, 0, 1}, {0, 1, 1}, {0, 0, 1}, {0, 1, 1}};
    const double expected = static_cast<double>(oracle::fleiss_kappa(labels, 2));
    CHECK(fleiss_kappa(t).value == doctest::Approx(expected).epsilon(1e-14));
    // P-bar = 1/3, P-e = 1/2.
    CHECK(expected == doctest::Approx(-1.0 / 3.0));
  }
  SUBCASE("chance agreement gives zero") {
    // Marginals 1/2 each so P-e = 1/2; agreement 1 on two items, 0 on two items with 2 raters.
    const CountTable t{{2, 0}, {0, 2}, {1, 1}, {1, 1}};
    CHECK(std::abs(fleiss_kappa(t, 2).value) < 1e-15);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(fleiss_kappa(CountTable{{3, 0}}), Error);
    CHECK_THROWS_AS(fleiss_kappa(CountTable{{3, 0}, {1, 1}}), Error);
    CHECK_THROWS_AS(fleiss_kappa(CountTable{{4, -1}, {1, 2}}), Error);
  }
}

TEST_CASE("property: kappa matches the pair-counting oracle and ignores column order") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int categories = 2 + static_cast<int>(rng.below(4));
    const std::size_t items = 2 + rng.below(60);
    std::vector<std::vector<int>> labels(items, std::vector<int>(3));
    CountTable table(items, std::vector<int>(categories, 0));
    for (std::size_t i = 0; i < items; ++i) {
      for (int& l : labels[i]) {
        // Skewed answers so agreement is above chance on average.
        l = rng.uniform() < 0.5 ? static_cast<int>(i % categories) : static_cast<int>(rng.below(categories));
        ++table[i][l];
      }
    }
    bool constant = true;
    for (const auto& item : labels) {
      for (int l : item) constant = constant && l == labels[0][0];
    }
    if (constant) continue;
    const double k = fleiss_kappa(table).value;
    CHECK(std::abs(k - static_cast<double>(oracle::fleiss_kappa(labels, categories))) < 1e-12);
    CHECK(k <= 1.0);
    CountTable permuted = table;
    for (auto& row : permuted) std::reverse(row.begin(), row.end());
    CHECK(std::abs(fleiss_kappa(permuted).value - k) < 1e-14);
  }
}

TEST_CASE("annotation tables") {
  std::vector<AnnotationRecord> anns(2);
  anns[0].feeling = {Feeling::warmly, Feeling::warmly, Feeling::mixed};
  anns[0].judgment = {Judgment::approval, Judgment::neutral, Judgment::neutral};
  anns[1].feeling = {Feeling::coldly, Feeling::neutral, Feeling::coldly};
  anns[1].judgment = {Judgment::disapproval, Judgment::disapproval, Judgment::disapproval};
  const auto f = feeling_table(anns);
  REQUIRE(f.size() == 2);
  CHECK(f[0] == std::vector<int>{2, 0, 0, 1});
  CHECK(f[1] == std::vector<int>{0, 2, 1, 0});
  const auto j = judgment_table(anns);
  CHECK(j[1] == std::vector<int>{0, 3, 0, 0});
}

TEST_CASE("record correlations use the documented codes") {
  std::vector<TweetRecord> rs{
      labelled(1, Igr::in, Affect::positive, 4.5f),  labelled(2, Igr::in, Affect::positive, 2.0f),
      labelled(3, Igr::out, Affect::negative, 4.8f), labelled(4, Igr::out, Affect::positive, 1.5f),
      labelled(5, Igr::in, Affect::negative, 3.5f),  labelled(6, Igr::unknown, Affect::positive, 4.2f),
  };
  // Affect against IGR over tweets 1-5.
  const std::vector<double> a{1, 1, -1, 1, -1}, g{1, 1, -1, -1, 1};
  const auto ra = affect_igr_correlation(rs);
  CHECK(ra.n == 5);
  CHECK(ra.value == doctest::Approx(static_cast<double>(oracle::pearson_r(a, g))).epsilon(1e-14));
  // Extremes drop tweet 5 (3.5) and tweet 6 (no IGR).
  const std::vector<double> s{1, -1, 1, -1}, gi{1, 1, -1, -1};
  const auto re = extremes_correlation(rs);
  CHECK(re.n == 4);
  CHECK(re.value == doctest::Approx(static_cast<double>(oracle::pearson_r(s, gi))).epsilon(1e-14));
  const std::vector<double> raw{4.5, 2.0, 4.8, 1.5, 3.5};
  CHECK(specificity_igr_correlation(rs).value ==
        doctest::Approx(static_cast<double>(oracle::pearson_r(raw, g))).epsilon(1e-6));

  std::vector<TweetRecord> middle{labelled(1, Igr::in, Affect::positive, 3.5f),
                                  labelled(2, Igr::out, Affect::positive, 3.2f),
                                  labelled(3, Igr::in, Affect::negative, 4.0f)};
  CHECK_THROWS_AS(extremes_correlation(middle), Error);
}

TEST_CASE("extremes correlation on generated data") {
  const auto ds = generate(GeneratorSpec{});
  const auto r = extremes_correlation(ds.records);
  CHECK(r.value >= -0.16);
  CHECK(r.value <= -0.10);
  CHECK(*r.p_value < 0.001);
  const auto ra = affect_igr_correlation(ds.records);
  CHECK(std::abs(ra.value - 0.2) <= 0.03);
  CHECK(*ra.p_value < 0.001);
}

TEST_CASE("independent extremes show no correlation") {
  Rng rng(4);
  std::vector<TweetRecord> rs;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const float score = rng.uniform() < 0.5 ? 1.0f + 1.9f * static_cast<float>(rng.uniform())
                                            : 4.1f + 0.9f * static_cast<float>(rng.uniform());
    rs.push_back(labelled(i, rng.uniform() < 0.5 ? Igr::in : Igr::out, Affect::positive, score));
  }
  CHECK(std::abs(extremes_correlation(rs).value) < 0.05);
}
