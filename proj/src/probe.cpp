#include "nullguard/probe.hpp"

#include "nullguard/error.hpp"
#include "nullguard/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace nullguard {

namespace {

void check_inputs(const Matrix& x, std::span<const int> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(Errc::dimension_mismatch, "probe inputs: " + std::to_string(x.rows()) + " rows but " +
                                              std::to_string(y.size()) + " labels");
  }
  for (int label : y) {
    if (label != 1 && label != -1) throw Error(Errc::invalid_argument, "probe labels must be +1 or -1");
  }
}

double accuracy_on(const Matrix& x, std::span<const int> y, std::span<const std::size_t> rows,
                   const Vector& w, double b) {
  std::size_t correct = 0;
  for (std::size_t r : rows) {
    const double s = x.row(static_cast<Eigen::Index>(r)).dot(w) + b;
    const int predicted = s >= 0.0 ? 1 : -1;
    if (predicted == y[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace

LinearProbe train_probe(const Matrix& x, std::span<const int> y, std::uint64_t seed,
                        const ProbeOptions& options) {
  check_inputs(x, y);
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] > 0 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw Error(Errc::degenerate_labels, "degenerate labels");

  Rng rng(seed);
  // Downsample the majority class to the minority count.
  auto downsample = [&rng](std::vector<std::size_t>& big, std::size_t keep) {
    std::vector<std::size_t> chosen = rng.sample_indices(big.size(), keep);
    for (std::size_t& c : chosen) c = big[c];
    big = std::move(chosen);
  };
  if (pos.size() > neg.size()) downsample(pos, neg.size());
  if (neg.size() > pos.size()) downsample(neg, pos.size());
  std::vector<std::size_t> rows;
  rows.reserve(pos.size() + neg.size());
  rows.insert(rows.end(), pos.begin(), pos.end());
  rows.insert(rows.end(), neg.begin(), neg.end());

  const Eigen::Index dim = x.cols();
  LinearProbe probe;
  probe.weight = Vector::Zero(dim);

  // Inputs are rescaled to unit mean norm so the unit hinge margin is
  // meaningful whatever the embedding scale.
  double scale = 0.0;
  for (std::size_t r : rows) scale += x.row(static_cast<Eigen::Index>(r)).norm();
  scale /= static_cast<double>(rows.size());
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    probe.train_accuracy = accuracy_on(x, y, rows, probe.weight, 0.0);
    return probe;
  }
  const double inv_scale = 1.0 / scale;

  // w = a * v over the augmented input [x / scale, 1]; `sum` accumulates the
  // iterates for averaging, with `pending` holding the scalar weight of v not
  // yet folded into `sum`.
  Vector v = Vector::Zero(dim + 1);
  Vector sum = Vector::Zero(dim + 1);
  double a = 1.0;
  double pending = 0.0;
  std::uint64_t t = 0;
  auto flush = [&] {
    if (pending != 0.0) sum += pending * v;
    pending = 0.0;
  };

  Vector averaged = Vector::Zero(dim + 1);
  double previous_accuracy = -1.0;
  std::vector<std::size_t> order = rows;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t r : order) {
      ++t;
      const auto row = x.row(static_cast<Eigen::Index>(r));
      const double label = static_cast<double>(y[r]);
      const double margin = label * a * (inv_scale * row.dot(v.head(dim)) + v[dim]);
      const double decay = 1.0 - 1.0 / static_cast<double>(t);
      if (decay == 0.0) {
        flush();
        v.setZero();
        a = 1.0;
      } else {
        a *= decay;
      }
      if (margin < 1.0) {
        flush();
        const double step = label / (options.lambda * static_cast<double>(t) * a);
        v.head(dim).noalias() += (step * inv_scale) * row.transpose();
        v[dim] += step;
      }
      if (a < 1e-9) {
        flush();
        v *= a;
        a = 1.0;
      }
      pending += a;
    }
    flush();
    averaged = sum / static_cast<double>(t);
    const Vector w = averaged.head(dim) * inv_scale;
    const double acc = accuracy_on(x, y, rows, w, averaged[dim]);
    probe.epochs = epoch;
    if (previous_accuracy >= 0.0 && std::abs(acc - previous_accuracy) < options.tolerance) break;
    previous_accuracy = acc;
  }

  probe.weight = averaged.head(dim) * inv_scale;
  probe.bias = averaged[dim];

  double mean_pos = 0.0;
  double mean_neg = 0.0;
  for (std::size_t r : pos) mean_pos += x.row(static_cast<Eigen::Index>(r)).dot(probe.weight);
  for (std::size_t r : neg) mean_neg += x.row(static_cast<Eigen::Index>(r)).dot(probe.weight);
  if (mean_pos / static_cast<double>(pos.size()) < mean_neg / static_cast<double>(neg.size())) {
    probe.weight = -probe.weight;
    probe.bias = -probe.bias;
  }
  if (probe.weight.norm() > 0.0 && std::isfinite(probe.weight.norm())) probe.direction.emplace(probe.weight);
  probe.train_accuracy = accuracy_on(x, y, rows, probe.weight, probe.bias);
  return probe;
}

double evaluate_probe(const LinearProbe& probe, const Matrix& x, std::span<const int> y) {
  check_inputs(x, y);
  if (y.empty()) throw Error(Errc::invalid_argument, "cannot evaluate a probe on empty input");
  if (x.cols() != probe.weight.size()) {
    throw Error(Errc::dimension_mismatch, "probe dimension does not match inputs");
  }
  std::vector<std::size_t> rows(y.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return accuracy_on(x, y, rows, probe.weight, probe.bias);
}

}  // namespace nullguard
