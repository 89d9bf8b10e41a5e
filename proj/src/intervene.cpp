#include "nullguard/intervene.hpp"

#include "nullguard/error.hpp"
#include "nullguard/rng.hpp"

#include <cmath>
#include <string>

namespace nullguard {

std::string_view to_string(Pole p) noexcept { return p == Pole::positive ? "positive" : "negative"; }

std::optional<Pole> parse_pole(std::string_view name) noexcept {
  if (name == "positive") return Pole::positive;
  if (name == "negative") return Pole::negative;
  return std::nullopt;
}

void InterventionConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(Errc::invalid_argument, "alpha must be positive");
  if (!(token_fraction > 0.0 && token_fraction <= 1.0)) {
    throw Error(Errc::invalid_argument, "token fraction must lie in (0, 1]");
  }
}

Intervention::Intervention(InterventionConfig config)
    : config_(std::move(config)), basis_rows_(config_.basis.rows()) {
  config_.validate();
}

Vector Intervention::apply(const Vector& h) const {
  if (h.size() != config_.basis.dim()) {
    throw Error(Errc::dimension_mismatch, "embedding has dimension " + std::to_string(h.size()) +
                                              ", intervention basis expects " +
                                              std::to_string(config_.basis.dim()));
  }
  const double sign = config_.target == Pole::positive ? 1.0 : -1.0;
  const Vector components = basis_rows_ * h;
  Vector rebuilt = components;
  for (Eigen::Index i = 0; i < components.size(); ++i) {
    const double c = components[i];
    const bool aligned = sign * c > 0.0;
    rebuilt[i] = (config_.flip_only && aligned) ? c : config_.alpha * sign * std::abs(c);
  }
  // h - B^T c is the null part; adding B^T c' places the concept part at the pole.
  return h + basis_rows_.transpose() * (rebuilt - components);
}

void Intervention::apply_rows(Embeddings& embeddings, std::span<const std::size_t> rows) const {
  for (std::size_t r : rows) {
    const auto row = static_cast<Eigen::Index>(r);
    const Vector h = embeddings.row(row).transpose().cast<double>();
    embeddings.row(row) = apply(h).transpose().cast<float>();
  }
}

Vector alter_embedding(const Vector& h, const InterventionConfig& config) {
  return Intervention(config).apply(h);
}

std::vector<TweetRecord> intervene_dataset(std::span<const TweetRecord> records, const InterventionConfig& config) {
  const Intervention intervention(config);
  std::vector<TweetRecord> out(records.begin(), records.end());
  for (TweetRecord& r : out) {
    const auto rows = sample_intervention_tokens(r, config.token_fraction, derive_seed(config.seed, r.tweet_id));
    intervention.apply_rows(r.embeddings, rows);
  }
  return out;
}

SubspaceBasis gaussian_basis(Eigen::Index dim, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(Errc::invalid_argument, "a control needs at least one direction");
  if (n > static_cast<std::size_t>(dim)) {
    throw Error(Errc::invalid_argument, "control directions (" + std::to_string(n) + ") exceed dimension (" +
                                            std::to_string(dim) + ")");
  }
  Rng rng(seed);
  std::vector<Vector> raw(n, Vector(dim));
  for (Vector& v : raw) {
    for (Eigen::Index j = 0; j < dim; ++j) v[j] = rng.normal();
  }
  return orthonormalize(raw);
}

std::uint64_t control_direction_seed(std::uint64_t seed) noexcept { return derive_seed(seed, 0xc0); }
std::uint64_t control_token_seed(std::uint64_t seed) noexcept { return derive_seed(seed, 0xc1); }

std::vector<TweetRecord> random_control(std::span<const TweetRecord> records, const ControlConfig& config) {
  if (config.n_directions == 0) throw Error(Errc::invalid_argument, "a control needs at least one direction");
  if (records.empty()) return {};
  InterventionConfig cfg;
  cfg.basis = gaussian_basis(records.front().dim(), config.n_directions, control_direction_seed(config.seed));
  cfg.target = config.target;
  cfg.alpha = config.alpha;
  cfg.token_fraction = config.token_fraction;
  cfg.seed = control_token_seed(config.seed);
  return intervene_dataset(records, cfg);
}

}  // namespace nullguard
