#pragma once

#include "nullguard/corpus.hpp"
#include "nullguard/geometry.hpp"
#include "nullguard/readout.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>

namespace nullguard {

struct SplitSpec {
  std::size_t n_tweets = 0;
  /// Exact number of affect-positive tweets; defaults to round(share * n_tweets).
  std::optional<std::size_t> n_affect_positive;
};

/// Parameters of a synthetic embedding dataset with planted linear concepts.
///
/// Affect occupies coordinates [0, affect_rank), specificity the next
/// specificity_rank coordinates and, when igr_margin > 0, one more coordinate
/// carries a direct IGR signal (optionally all rotated by a random orthogonal
/// matrix). Concept axis j has noise scale noise * concept_noise_decay^-j and
/// its class means sit margin noise scales either side of zero, so every axis
/// is equally informative on its own but a hinge probe picks them up one at a
/// time.
struct GeneratorSpec {
  std::size_t dim = 64;
  /// Indexed by Split. Defaults reproduce a 3,033-tweet corpus.
  std::array<SplitSpec, 3> splits{SplitSpec{2402, 1813}, SplitSpec{306, 226}, SplitSpec{325, 242}};
  std::size_t min_tokens = 5;
  std::size_t max_tokens = 20;

  std::size_t affect_rank = 4;
  std::size_t specificity_rank = 2;
  double affect_margin = 1.0;
  double specificity_margin = 1.0;
  double noise = 1.0;
  double concept_noise_decay = 1.5;
  double igr_margin = 0.0;
  bool rotate = false;

  double affect_positive_share = 0.752;
  double specificity_mean = 3.49;
  double specificity_sd = 0.54;

  /// Share of tweets labelled IN.
  double igr_in_share = 0.5;
  /// Target Pearson r between ±1-coded affect and IGR over all tweets.
  double affect_igr_r = 0.2;
  /// Target Pearson r between HIGH/LOW-coded specificity and IGR, on the
  /// tweets outside the excluded middle.
  double specificity_igr_r = -0.13;

  int layer = 11;
  std::uint64_t seed = 0;

  /// Throws Errc::invalid_argument on an unusable spec.
  void validate() const;
};

nlohmann::json to_json(const GeneratorSpec& spec);
/// Missing keys keep their defaults.
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);

/// Ground-truth concept subspaces of a spec (oriented: positive pole = label +1 / high specificity).
struct PlantedGeometry {
  SubspaceBasis affect{0};
  SubspaceBasis specificity{0};
  std::optional<Vector> igr_axis;
};

PlantedGeometry planted_geometry(const GeneratorSpec& spec);

/// Mean-pooling head along the planted difference of affect class means
/// (weights margin * sigma_j on the affect axes, zero bias): positive logit
/// for affect-positive tweets. Every probe direction oriented toward the
/// positive class has a non-negative inner product with it in expectation.
/// Needs affect_rank >= 1.
ReadoutModel planted_affect_readout(const GeneratorSpec& spec);

/// Per-tweet P(IN) for the four (affect, specificity code) cells and the
/// middle bin, solved so that both target correlations are met in
/// expectation. Throws Errc::infeasible (with the largest feasible scaling of
/// the targets) when a probability leaves [0, 1].
struct IgrModel {
  double base = 0.5;
  double affect_coef = 0.0;
  double specificity_coef = 0.0;
  double affect_mean = 0.0;
  double extremes_mean = 0.0;

  double probability(int affect, int specificity_code) const noexcept {
    const double spec_term = specificity_code == 0 ? 0.0 : specificity_coef * (specificity_code - extremes_mean);
    return base + affect_coef * (affect - affect_mean) + spec_term;
  }
};

/// Deterministic in spec.seed; labels, scores and embeddings for all splits.
Dataset generate(const GeneratorSpec& spec);

}  // namespace nullguard
