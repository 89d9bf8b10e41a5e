#pragma once

#include "nullguard/corpus.hpp"
#include "nullguard/geometry.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace nullguard {

enum class Pole { positive, negative };

std::string_view to_string(Pole p) noexcept;
std::optional<Pole> parse_pole(std::string_view name) noexcept;

inline constexpr double kDefaultAlpha = 4.0;
inline constexpr double kDefaultTokenFraction = 0.3;

struct InterventionConfig {
  SubspaceBasis basis{0};
  Pole target = Pole::positive;
  double alpha = kDefaultAlpha;
  double token_fraction = kDefaultTokenFraction;
  std::uint64_t seed = 0;
  /// Leave components already on the target side untouched and only rebuild
  /// the misaligned ones.
  bool flip_only = false;

  /// Throws Errc::invalid_argument unless alpha > 0 and 0 < token_fraction <= 1.
  void validate() const;
};

struct ControlConfig {
  std::size_t n_directions = 1;
  double alpha = kDefaultAlpha;
  double token_fraction = kDefaultTokenFraction;
  std::uint64_t seed = 0;
  Pole target = Pole::positive;
};

/// Counterfactual rewrite of one embedding: keep the component outside the
/// concept subspace and rebuild the inside as alpha * s * |h . b_i| * b_i for
/// every basis vector, with s = +1 toward the positive pole, -1 toward the
/// negative one.
class Intervention {
 public:
  explicit Intervention(InterventionConfig config);

  const InterventionConfig& config() const noexcept { return config_; }

  Vector apply(const Vector& h) const;

  /// Rewrites the given rows of a tweet's embedding matrix in place.
  void apply_rows(Embeddings& embeddings, std::span<const std::size_t> rows) const;

 private:
  InterventionConfig config_;
  Matrix basis_rows_;  // k x d
};

Vector alter_embedding(const Vector& h, const InterventionConfig& config);

/// Alters the sample_intervention_tokens subset of every tweet; other tokens
/// are copied bit for bit. The per-tweet sample seed is derived from
/// (config.seed, tweet_id).
std::vector<TweetRecord> intervene_dataset(std::span<const TweetRecord> records, const InterventionConfig& config);

/// `n` i.i.d. standard-gaussian vectors in R^dim, orthonormalized.
SubspaceBasis gaussian_basis(Eigen::Index dim, std::size_t n, std::uint64_t seed);

/// Same intervention driven by a random gaussian basis instead of learned directions.
std::vector<TweetRecord> random_control(std::span<const TweetRecord> records, const ControlConfig& config);

/// Seeds used by random_control for its directions and its token sample.
std::uint64_t control_direction_seed(std::uint64_t seed) noexcept;
std::uint64_t control_token_seed(std::uint64_t seed) noexcept;

}  // namespace nullguard
