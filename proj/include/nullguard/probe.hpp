#pragma once

#include "nullguard/geometry.hpp"

#include <cstdint>
#include <optional>
#include <span>

namespace nullguard {

struct ProbeOptions {
  double lambda = 1e-4;    // L2 strength; step size is 1 / (lambda * t)
  int max_epochs = 50;
  double tolerance = 1e-4; // stop once epoch-to-epoch accuracy moves less than this
};

/// Binary linear classifier sign(w . x + b) over embeddings.
struct LinearProbe {
  /// Weight before normalization, oriented so the +1 class projects higher on average.
  Vector weight;
  /// Unit-norm `weight`; absent when the weight vanished (nothing left to learn).
  std::optional<Direction> direction;
  double bias = 0.0;
  /// Accuracy on the balanced training sample.
  double train_accuracy = 0.0;
  int epochs = 0;

  double score(const Vector& x) const { return weight.dot(x) + bias; }
};

/// Hinge-loss linear SVM trained by seeded stochastic subgradient descent
/// (Pegasos step schedule, iterate averaging). Labels are +1 / -1. The
/// majority class is downsampled to the minority count before training.
/// Throws Errc::degenerate_labels when only one class is present.
LinearProbe train_probe(const Matrix& x, std::span<const int> y, std::uint64_t seed,
                        const ProbeOptions& options = {});

/// Fraction of rows where sign(w . x + b) matches y; a zero score counts as +1.
double evaluate_probe(const LinearProbe& probe, const Matrix& x, std::span<const int> y);

}  // namespace nullguard
