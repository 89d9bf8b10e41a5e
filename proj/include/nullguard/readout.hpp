#pragma once

#include "nullguard/corpus.hpp"
#include "nullguard/geometry.hpp"
#include "nullguard/guard.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nullguard {

enum class Pooling { mean, first_token };

std::string_view to_string(Pooling p) noexcept;
std::optional<Pooling> parse_pooling(std::string_view name) noexcept;

/// Linear IGR head over pooled token embeddings; a positive logit means IN.
struct ReadoutModel {
  Pooling pooling = Pooling::mean;
  Vector head_weight;
  double head_bias = 0.0;

  double logit(const TweetRecord& record) const;
  bool predicts_in(const TweetRecord& record) const { return logit(record) >= 0.0; }
};

Vector pool(const TweetRecord& record, Pooling pooling);

struct ReadoutOptions {
  Pooling pooling = Pooling::mean;
  double l2 = 1e-2;
  int max_iterations = 100;
  double tolerance = 1e-10;
};

/// L2-regularized logistic regression fitted by Newton's method (IRLS) on
/// pooled embeddings. Every record needs an IGR label; both classes must occur.
ReadoutModel train_readout(std::span<const TweetRecord> records, const ReadoutOptions& options = {});

/// 100 * (#records predicted IN) / #records; a zero logit counts as IN.
double percent_in_group(std::span<const TweetRecord> records, const ReadoutModel& model);

nlohmann::json to_json(const ReadoutModel& model);
ReadoutModel readout_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Sweeps

enum class Condition { push_positive, push_negative, control_positive, control_negative };
inline constexpr std::array<Condition, 4> kConditions{Condition::push_positive, Condition::push_negative,
                                                      Condition::control_positive, Condition::control_negative};

/// Series name used in the sweep TSV header, e.g. "posaff" or "negspec-control".
std::string series_name(Concept c, Condition condition);

inline const std::vector<std::size_t> kDefaultGrid{8, 16, 24, 32, 40, 48, 56, 64};

struct SweepOptions {
  double alpha = 4.0;
  double token_fraction = 0.3;
  std::vector<std::size_t> grid = kDefaultGrid;
  std::vector<std::uint64_t> seeds{0};
  std::size_t jobs = 1;
};

/// % in-group curves, one value per grid point, for one slice of the test set.
struct SweepCurves {
  double baseline = 0.0;
  std::size_t n_tweets = 0;
  /// Mean over seeds, indexed [condition][grid point].
  std::array<std::vector<double>, 4> mean;
  /// Per-seed values, indexed [condition][seed][grid point].
  std::array<std::vector<std::vector<double>>, 4> per_seed;
};

struct SweepReport {
  Concept kind = Concept::affect;
  std::vector<std::size_t> grid;
  std::vector<std::uint64_t> seeds;
  double alpha = 4.0;
  double token_fraction = 0.3;
  SweepCurves all;
  /// Test tweets with positive / negative affect annotations.
  SweepCurves affect_positive;
  SweepCurves affect_negative;
};

/// For every grid point k and seed: intervenes on the TEST split toward each
/// pole using the first k guard directions, runs matched gaussian controls
/// with k random directions, and records % predicted in-group.
SweepReport run_sweep(std::span<const TweetRecord> dataset, const GuardResult& guard, const ReadoutModel& readout,
                      const SweepOptions& options);

/// Tab-separated table: header `inlp <pos> <neg> <pos>-control <neg>-control`,
/// one row for iteration 0 (baseline) unless the grid already has it, then one
/// row per grid point. Values printed with four decimals.
void write_sweep_tsv(std::ostream& out, Concept c, const std::vector<std::size_t>& grid, const SweepCurves& curves);
std::string sweep_tsv(const SweepReport& report, const SweepCurves& curves);

}  // namespace nullguard
