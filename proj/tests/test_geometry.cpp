#include "nullguard/error.hpp"
#include "nullguard/geometry.hpp"
#include "nullguard/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace nullguard;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vector random_vector(Rng& rng, Eigen::Index d) {
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
  return v;
}

SubspaceBasis random_basis(Rng& rng, Eigen::Index d, std::size_t k) {
  std::vector<Vector> raw;
  for (std::size_t i = 0; i < k; ++i) raw.push_back(random_vector(rng, d));
  return orthonormalize(raw);
}

}  // namespace

TEST_CASE("direction normalizes and rejects zero") {
  const Direction d(vec({3, 4}));
  CHECK(d.vector().norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.vector()[0] == doctest::Approx(0.6));
  CHECK(d.flipped().vector()[1] == doctest::Approx(-0.8));
  CHECK_THROWS_AS(Direction(Vector::Zero(3)), Error);
}

TEST_CASE("subspace basis rejects non-orthogonal vectors") {
  CHECK_THROWS_AS(SubspaceBasis(2, {Direction(vec({1, 0})), Direction(vec({1, 1}))}), Error);
  CHECK_THROWS_AS(SubspaceBasis(3, {Direction(vec({1, 0}))}), Error);
  CHECK(SubspaceBasis(2, {Direction(vec({1, 0})), Direction(vec({0, 1}))}).size() == 2);
}

TEST_CASE("orthonormalize examples") {
  SUBCASE("single axis") {
    const std::vector<Vector> in{vec({1, 0, 0})};
    const auto b = orthonormalize(in);
    REQUIRE(b.size() == 1);
    CHECK((b[0].vector() - vec({1, 0, 0})).norm() < 1e-15);
  }
  SUBCASE("duplicate dropped") {
    const std::vector<Vector> in{vec({1, 0, 0}), vec({1, 0, 0})};
    CHECK(orthonormalize(in).size() == 1);
  }
  SUBCASE("xy plane spanned; both inputs reconstructed by R") {
    const std::vector<Vector> in{vec({1, 1, 0}), vec({1, 0, 0})};
    const auto b = orthonormalize(in);
    REQUIRE(b.size() == 2);
    CHECK(std::abs(b[0].dot(b[1].vector())) < 1e-12);
    const auto pair = projection_pair(b);
    for (const Vector& v : in) CHECK((pair.rowspace * v - v).norm() < 1e-12);
  }
  SUBCASE("degenerate input") {
    const std::vector<Vector> zeros{Vector::Zero(3), Vector::Zero(3)};
    CHECK_THROWS_WITH_AS(orthonormalize(zeros), "degenerate direction set", Error);
    CHECK_THROWS_AS(orthonormalize(std::vector<Vector>{}), Error);
  }
  SUBCASE("dimension mismatch") {
    const std::vector<Vector> mixed{vec({1, 0}), vec({0, 1, 0})};
    CHECK_THROWS_AS(orthonormalize(mixed), Error);
  }
  SUBCASE("nearly dependent vector is dropped, scale does not matter") {
    for (double scale : {1e-6, 1.0, 1e6}) {
      const std::vector<Vector> in{scale * vec({1, 2, 3}), scale * vec({1, 2, 3 + 1e-12})};
      CHECK(orthonormalize(in).size() == 1);
    }
  }
}

TEST_CASE("projection_pair examples") {
  SUBCASE("e1 in R^3") {
    const auto pair = projection_pair(SubspaceBasis(3, {Direction(vec({1, 0, 0}))}));
    Matrix expected = Matrix::Zero(3, 3);
    expected(1, 1) = expected(2, 2) = 1;
    CHECK((pair.nullspace - expected).norm() < 1e-15);
  }
  SUBCASE("full rank erases everything") {
    const auto pair = projection_pair(
        SubspaceBasis(3, {Direction(vec({1, 0, 0})), Direction(vec({0, 1, 0})), Direction(vec({0, 0, 1}))}));
    CHECK(pair.nullspace.norm() < 1e-15);
  }
  SUBCASE("diagonal in R^2") {
    const auto pair = projection_pair(SubspaceBasis(2, {Direction(vec({1, 1}))}));
    Matrix expected(2, 2);
    expected << 0.5, -0.5, -0.5, 0.5;
    CHECK((pair.nullspace - expected).norm() < 1e-15);
  }
  SUBCASE("empty basis is the identity") {
    const auto pair = projection_pair(SubspaceBasis(4));
    CHECK((pair.nullspace - Matrix::Identity(4, 4)).norm() == 0.0);
    CHECK(pair.rowspace.norm() == 0.0);
  }
}

TEST_CASE("decompose examples") {
  const auto pair = projection_pair(SubspaceBasis(2, {Direction(vec({1, 0}))}));
  const auto parts = decompose(vec({3, 4}), pair);
  CHECK((parts.null_part - vec({0, 4})).norm() < 1e-15);
  CHECK((parts.row_part - vec({3, 0})).norm() < 1e-15);
  const auto e2 = decompose(vec({0, 1}), pair);
  CHECK((e2.null_part - vec({0, 1})).norm() < 1e-15);
  CHECK(e2.row_part.norm() < 1e-15);
  const auto e1 = decompose(vec({1, 0}), pair);
  CHECK(e1.null_part.norm() < 1e-15);
  CHECK_THROWS_AS(decompose(vec({1, 2, 3}), pair), Error);
}

TEST_CASE("property: projection invariants on random bases") {
  Rng rng(1234);
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(40));
    const std::size_t k = 1 + rng.below(static_cast<std::size_t>(d));
    const auto basis = random_basis(rng, d, k);
    REQUIRE(basis.size() == k);
    const auto pair = projection_pair(basis);
    const Matrix& p = pair.nullspace;
    const Matrix& r = pair.rowspace;
    CHECK((p - p.transpose()).norm() < 1e-12);
    CHECK((r - r.transpose()).norm() < 1e-12);
    CHECK((p * p - p).norm() < 1e-6);
    CHECK((r * r - r).norm() < 1e-6);
    CHECK((r + p - Matrix::Identity(d, d)).norm() < 1e-6);
    CHECK(std::abs(r.trace() - static_cast<double>(k)) < 1e-6);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) CHECK(std::abs(basis[i].dot(basis[j].vector())) < 1e-8);
    }
    for (int v = 0; v < 20; ++v) {
      const Vector h = random_vector(rng, d) * std::exp(3 * rng.normal());
      const auto parts = decompose(h, pair);
      CHECK((parts.null_part + parts.row_part - h).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, h.norm()));
      for (const Direction& b : basis.directions()) CHECK(std::abs(b.dot(p * h)) < 1e-7 * std::max(1.0, h.norm()));
    }
  }
}

TEST_CASE("property: orthonormalize keeps the span of random inputs") {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 3 + static_cast<Eigen::Index>(rng.below(20));
    const std::size_t k = 1 + rng.below(static_cast<std::size_t>(d) + 4);
    std::vector<Vector> raw;
    for (std::size_t i = 0; i < k; ++i) {
      // Every third vector is a combination of earlier ones.
      if (i >= 2 && i % 3 == 2) {
        raw.push_back(rng.normal() * raw[i - 1] + rng.normal() * raw[i - 2]);
      } else {
        raw.push_back(random_vector(rng, d));
      }
    }
    const auto basis = orthonormalize(raw);
    CHECK(basis.size() <= static_cast<std::size_t>(d));
    const auto pair = projection_pair(basis);
    for (const Vector& v : raw) CHECK((pair.rowspace * v - v).norm() < 1e-8 * std::max(1.0, v.norm()));
    // Rank agrees with an independent decomposition.
    Matrix stacked(static_cast<Eigen::Index>(raw.size()), d);
    for (std::size_t i = 0; i < raw.size(); ++i) stacked.row(static_cast<Eigen::Index>(i)) = raw[i].transpose();
    Eigen::FullPivLU<Matrix> lu(stacked);
    CHECK(basis.size() == static_cast<std::size_t>(lu.rank()));
  }
}

TEST_CASE("rows() stacks basis vectors") {
  const SubspaceBasis b(3, {Direction(vec({0, 1, 0})), Direction(vec({0, 0, 2}))});
  const Matrix rows = b.rows();
  CHECK(rows.rows() == 2);
  CHECK(rows(0, 1) == 1.0);
  CHECK(rows(1, 2) == 1.0);
  CHECK(SubspaceBasis(5).rows().rows() == 0);
}
