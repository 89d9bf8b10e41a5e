#include "nullguard/synthgen.hpp"

#include "nullguard/error.hpp"
#include "nullguard/intervene.hpp"
#include "nullguard/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace nullguard {

using nlohmann::json;

void GeneratorSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::invalid_argument, "generator spec: " + what); };
  if (dim == 0) fail("dim must be positive");
  const std::size_t used = affect_rank + specificity_rank + (igr_margin > 0.0 ? 1 : 0);
  if (used > dim) fail("concept ranks exceed dim");
  if (min_tokens == 0 || max_tokens < min_tokens) fail("token range must satisfy 1 <= min_tokens <= max_tokens");
  if (!(affect_margin >= 0.0) || !(specificity_margin >= 0.0) || !(igr_margin >= 0.0)) fail("margins must be >= 0");
  if (!(noise > 0.0)) fail("noise must be positive");
  if (!(concept_noise_decay > 0.0)) fail("concept_noise_decay must be positive");
  if (!(affect_positive_share > 0.0 && affect_positive_share < 1.0)) fail("affect_positive_share must be in (0, 1)");
  if (!(igr_in_share > 0.0 && igr_in_share < 1.0)) fail("igr_in_share must be in (0, 1)");
  if (!(affect_igr_r > -1.0 && affect_igr_r < 1.0)) fail("affect_igr_r must be in (-1, 1)");
  if (!(specificity_igr_r > -1.0 && specificity_igr_r < 1.0)) fail("specificity_igr_r must be in (-1, 1)");
  if (!(specificity_mean >= 1.0 && specificity_mean <= 5.0)) fail("specificity_mean must be in [1, 5]");
  if (!(specificity_sd >= 0.0)) fail("specificity_sd must be >= 0");
  for (const SplitSpec& s : splits) {
    if (s.n_affect_positive && *s.n_affect_positive > s.n_tweets) fail("n_affect_positive exceeds n_tweets");
  }
}

json to_json(const GeneratorSpec& spec) {
  json splits = json::object();
  for (Split s : {Split::train, Split::dev, Split::test}) {
    const SplitSpec& ss = spec.splits[static_cast<std::size_t>(s)];
    json entry = {{"n_tweets", ss.n_tweets}};
    if (ss.n_affect_positive) entry["n_affect_positive"] = *ss.n_affect_positive;
    splits[std::string(to_string(s))] = entry;
  }
  return {
      {"dim", spec.dim},
      {"splits", splits},
      {"min_tokens", spec.min_tokens},
      {"max_tokens", spec.max_tokens},
      {"affect_rank", spec.affect_rank},
      {"specificity_rank", spec.specificity_rank},
      {"affect_margin", spec.affect_margin},
      {"specificity_margin", spec.specificity_margin},
      {"noise", spec.noise},
      {"concept_noise_decay", spec.concept_noise_decay},
      {"igr_margin", spec.igr_margin},
      {"rotate", spec.rotate},
      {"affect_positive_share", spec.affect_positive_share},
      {"specificity_mean", spec.specificity_mean},
      {"specificity_sd", spec.specificity_sd},
      {"igr_in_share", spec.igr_in_share},
      {"affect_igr_r", spec.affect_igr_r},
      {"specificity_igr_r", spec.specificity_igr_r},
      {"layer", spec.layer},
      {"seed", spec.seed},
  };
}

GeneratorSpec generator_spec_from_json(const json& j) {
  GeneratorSpec spec;
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  read("dim", spec.dim);
  read("min_tokens", spec.min_tokens);
  read("max_tokens", spec.max_tokens);
  read("affect_rank", spec.affect_rank);
  read("specificity_rank", spec.specificity_rank);
  read("affect_margin", spec.affect_margin);
  read("specificity_margin", spec.specificity_margin);
  read("noise", spec.noise);
  read("concept_noise_decay", spec.concept_noise_decay);
  read("igr_margin", spec.igr_margin);
  read("rotate", spec.rotate);
  read("affect_positive_share", spec.affect_positive_share);
  read("specificity_mean", spec.specificity_mean);
  read("specificity_sd", spec.specificity_sd);
  read("igr_in_share", spec.igr_in_share);
  read("affect_igr_r", spec.affect_igr_r);
  read("specificity_igr_r", spec.specificity_igr_r);
  read("layer", spec.layer);
  read("seed", spec.seed);
  if (j.contains("splits")) {
    for (Split s : {Split::train, Split::dev, Split::test}) {
      const std::string name(to_string(s));
      if (!j.at("splits").contains(name)) continue;
      const json& entry = j.at("splits").at(name);
      SplitSpec& ss = spec.splits[static_cast<std::size_t>(s)];
      ss.n_tweets = entry.at("n_tweets").get<std::size_t>();
      ss.n_affect_positive.reset();
      if (entry.contains("n_affect_positive")) ss.n_affect_positive = entry.at("n_affect_positive").get<std::size_t>();
    }
  }
  return spec;
}

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kRotationStream = 1;
constexpr std::uint64_t kSplitStreamBase = 16;
enum SplitStream : std::uint64_t { kAffectStream = 0, kScoreStream, kIgrStream, kTokenStream };

std::uint64_t split_seed(std::uint64_t seed, Split split, SplitStream purpose) {
  return derive_seed(seed, kSplitStreamBase + 8 * static_cast<std::uint64_t>(split) + purpose);
}

/// Rows are the images of the coordinate axes.
Matrix rotation(const GeneratorSpec& spec) {
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  if (!spec.rotate) return Matrix::Identity(dim, dim);
  return gaussian_basis(dim, spec.dim, derive_seed(spec.seed, kRotationStream)).rows();
}

double axis_scale(const GeneratorSpec& spec, std::size_t j) {
  return spec.noise * std::pow(spec.concept_noise_decay, -static_cast<double>(j));
}

int specificity_code(double score) {
  switch (binarize_specificity(score)) {
    case SpecificityBin::high: return 1;
    case SpecificityBin::low: return -1;
    case SpecificityBin::excluded: return 0;
  }
  return 0;
}

struct CellMoments {
  double n = 0, affect_mean = 0, affect_var = 0;
  double n_ext = 0, ext_affect_mean = 0, ext_spec_mean = 0, ext_spec_var = 0, ext_cov = 0;
};

CellMoments moments(const std::vector<int>& affect, const std::vector<int>& code) {
  CellMoments m;
  m.n = static_cast<double>(affect.size());
  for (int a : affect) m.affect_mean += a;
  m.affect_mean /= m.n;
  for (int a : affect) m.affect_var += (a - m.affect_mean) * (a - m.affect_mean);
  m.affect_var /= m.n;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code[i] == 0) continue;
    m.n_ext += 1;
    m.ext_affect_mean += affect[i];
    m.ext_spec_mean += code[i];
  }
  if (m.n_ext > 0) {
    m.ext_affect_mean /= m.n_ext;
    m.ext_spec_mean /= m.n_ext;
    for (std::size_t i = 0; i < code.size(); ++i) {
      if (code[i] == 0) continue;
      m.ext_spec_var += (code[i] - m.ext_spec_mean) * (code[i] - m.ext_spec_mean);
      m.ext_cov += (affect[i] - m.ext_affect_mean) * (code[i] - m.ext_spec_mean);
    }
    m.ext_spec_var /= m.n_ext;
    m.ext_cov /= m.n_ext;
  }
  return m;
}

IgrModel solve_igr_model(const CellMoments& m, double q, double r_affect, double r_spec) {
  IgrModel model;
  model.base = q;
  model.affect_mean = m.affect_mean;
  model.extremes_mean = m.ext_spec_mean;
  const double sd_affect = std::sqrt(m.affect_var);
  const double sd_spec = std::sqrt(m.ext_spec_var);
  const bool spec_usable = m.n_ext >= 2 && sd_spec > 0.0;
  if (sd_affect == 0.0) {
    if (r_affect != 0.0) throw Error(Errc::infeasible, "affect is constant within a split; its correlation is undefined");
  }
  // Covariance of affect with the extremes-only specificity term, over all tweets.
  const double cross_all = m.n > 0 ? (m.n_ext / m.n) * m.ext_cov : 0.0;
  double q_ext = q;
  for (int iter = 0; iter < 20; ++iter) {
    const double rhs_a = r_affect * std::sqrt(q * (1 - q)) * sd_affect;
    const double rhs_s = spec_usable ? r_spec * std::sqrt(std::max(q_ext * (1 - q_ext), 0.0)) * sd_spec : 0.0;
    // [var_a  cross_all] [ba]   [rhs_a]
    // [cov_e  var_e    ] [bs] = [rhs_s]
    double ba = 0.0;
    double bs = 0.0;
    if (spec_usable && sd_affect > 0.0) {
      const double det = m.affect_var * m.ext_spec_var - cross_all * m.ext_cov;
      ba = (rhs_a * m.ext_spec_var - cross_all * rhs_s) / det;
      bs = (m.affect_var * rhs_s - m.ext_cov * rhs_a) / det;
    } else if (sd_affect > 0.0) {
      ba = rhs_a / m.affect_var;
    } else if (spec_usable) {
      bs = rhs_s / m.ext_spec_var;
    }
    model.affect_coef = ba;
    model.specificity_coef = bs;
    q_ext = q + ba * (m.ext_affect_mean - m.affect_mean);
  }
  return model;
}

bool feasible(const IgrModel& model, const std::vector<int>& affect, const std::vector<int>& code) {
  for (std::size_t i = 0; i < affect.size(); ++i) {
    const double p = model.probability(affect[i], code[i]);
    if (!(p >= 0.0 && p <= 1.0)) return false;
  }
  return true;
}

/// Stratified draw: inside each (affect, code) cell exactly round(n_cell * p_cell)
/// tweets are IN, chosen uniformly.
std::vector<Igr> draw_igr(const IgrModel& model, const std::vector<int>& affect, const std::vector<int>& code,
                          Rng& rng) {
  std::vector<Igr> out(affect.size(), Igr::out);
  for (int a : {-1, 1}) {
    for (int c : {-1, 0, 1}) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < affect.size(); ++i) {
        if (affect[i] == a && code[i] == c) members.push_back(i);
      }
      if (members.empty()) continue;
      const double expected = static_cast<double>(members.size()) * model.probability(a, c);
      const auto n_in = std::min(members.size(), static_cast<std::size_t>(std::llround(expected)));
      for (std::size_t idx : rng.sample_indices(members.size(), n_in)) out[members[idx]] = Igr::in;
    }
  }
  return out;
}

}  // namespace

PlantedGeometry planted_geometry(const GeneratorSpec& spec) {
  spec.validate();
  const Matrix rot = rotation(spec);
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  auto span_rows = [&](std::size_t first, std::size_t count) {
    std::vector<Direction> dirs;
    for (std::size_t j = 0; j < count; ++j) {
      dirs.emplace_back(rot.row(static_cast<Eigen::Index>(first + j)).transpose());
    }
    return SubspaceBasis(dim, std::move(dirs));
  };
  PlantedGeometry g;
  g.affect = span_rows(0, spec.affect_rank);
  g.specificity = span_rows(spec.affect_rank, spec.specificity_rank);
  if (spec.igr_margin > 0.0) {
    g.igr_axis = rot.row(static_cast<Eigen::Index>(spec.affect_rank + spec.specificity_rank)).transpose();
  }
  return g;
}

ReadoutModel planted_affect_readout(const GeneratorSpec& spec) {
  spec.validate();
  if (spec.affect_rank == 0) throw Error(Errc::invalid_argument, "planted readout needs affect_rank >= 1");
  const Matrix rot = rotation(spec);
  ReadoutModel model;
  model.pooling = Pooling::mean;
  model.head_weight = Vector::Zero(static_cast<Eigen::Index>(spec.dim));
  for (std::size_t j = 0; j < spec.affect_rank; ++j) {
    model.head_weight += (spec.affect_margin * axis_scale(spec, j)) * rot.row(static_cast<Eigen::Index>(j)).transpose();
  }
  model.head_bias = 0.0;
  return model;
}

Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  const Matrix rot = rotation(spec);
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  const std::size_t spec_first = spec.affect_rank;
  const std::size_t igr_axis = spec.affect_rank + spec.specificity_rank;

  Dataset dataset;
  dataset.dim = spec.dim;
  std::uint64_t next_id = 1;

  for (Split split : {Split::train, Split::dev, Split::test}) {
    const SplitSpec& ss = spec.splits[static_cast<std::size_t>(split)];
    const std::size_t n = ss.n_tweets;
    if (n == 0) continue;

    // Affect: exact count of positives, random placement.
    const std::size_t n_pos = ss.n_affect_positive.value_or(
        static_cast<std::size_t>(std::llround(spec.affect_positive_share * static_cast<double>(n))));
    std::vector<int> affect(n, -1);
    std::fill(affect.begin(), affect.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
    Rng affect_rng(split_seed(spec.seed, split, kAffectStream));
    affect_rng.shuffle(affect);

    // Specificity: gaussian draws rescaled to the exact requested moments, clipped to [1, 5].
    Rng score_rng(split_seed(spec.seed, split, kScoreStream));
    std::vector<double> raw(n);
    for (double& v : raw) v = score_rng.normal();
    double mean = 0.0;
    for (double v : raw) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : raw) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    std::vector<float> scores(n);
    std::vector<int> code(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = spec.specificity_mean + spec.specificity_sd * (raw[i] - mean) * inv_sd;
      scores[i] = static_cast<float>(std::clamp(s, 1.0, 5.0));
      code[i] = specificity_code(scores[i]);
    }

    // IGR labels hitting both target correlations.
    const CellMoments m = moments(affect, code);
    const IgrModel model = solve_igr_model(m, spec.igr_in_share, spec.affect_igr_r, spec.specificity_igr_r);
    if (!feasible(model, affect, code)) {
      double lo = 0.0;
      double hi = 1.0;
      for (int iter = 0; iter < 60; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const IgrModel trial =
            solve_igr_model(m, spec.igr_in_share, mid * spec.affect_igr_r, mid * spec.specificity_igr_r);
        (feasible(trial, affect, code) ? lo : hi) = mid;
      }
      throw Error(Errc::infeasible,
                  fmt::format("infeasible correlation pair in {} split (affect r={}, specificity r={}): "
                              "IN probabilities leave [0, 1]; feasibility bound: targets scaled by at most {:.4f} "
                              "(affect r={:.4f}, specificity r={:.4f})",
                              to_string(split), spec.affect_igr_r, spec.specificity_igr_r, lo,
                              lo * spec.affect_igr_r, lo * spec.specificity_igr_r));
    }
    Rng igr_rng(split_seed(spec.seed, split, kIgrStream));
    const std::vector<Igr> igr = draw_igr(model, affect, code, igr_rng);

    // Token embeddings.
    Rng token_rng(split_seed(spec.seed, split, kTokenStream));
    const double spec_sd = spec.specificity_sd > 0.0 ? spec.specificity_sd : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      TweetRecord rec;
      rec.tweet_id = next_id++;
      rec.split = split;
      rec.affect = affect[i] > 0 ? Affect::positive : Affect::negative;
      rec.igr = igr[i];
      rec.specificity = scores[i];
      rec.sidecar = {{"layer", spec.layer}};
      const std::size_t n_tokens = spec.min_tokens + token_rng.below(spec.max_tokens - spec.min_tokens + 1);
      const double spec_z = (static_cast<double>(scores[i]) - spec.specificity_mean) / spec_sd;
      const double igr_sign = igr[i] == Igr::in ? 1.0 : -1.0;
      Matrix planted(static_cast<Eigen::Index>(n_tokens), dim);
      for (Eigen::Index t = 0; t < planted.rows(); ++t) {
        for (Eigen::Index c = 0; c < dim; ++c) planted(t, c) = spec.noise * token_rng.normal();
        for (std::size_t j = 0; j < spec.affect_rank; ++j) {
          const double scale = axis_scale(spec, j);
          planted(t, static_cast<Eigen::Index>(j)) = scale * (affect[i] * spec.affect_margin + token_rng.normal());
        }
        for (std::size_t j = 0; j < spec.specificity_rank; ++j) {
          const double scale = axis_scale(spec, j);
          planted(t, static_cast<Eigen::Index>(spec_first + j)) =
              scale * (spec_z * spec.specificity_margin + token_rng.normal());
        }
        if (spec.igr_margin > 0.0) {
          planted(t, static_cast<Eigen::Index>(igr_axis)) =
              spec.noise * (igr_sign * spec.igr_margin + token_rng.normal());
        }
        rec.tokens.push_back("tok" + std::to_string(t));
      }
      // Coordinate axis j maps to row j of the rotation.
      rec.embeddings = (planted * rot).cast<float>();
      dataset.records.push_back(std::move(rec));
    }
  }
  return dataset;
}

}  // namespace nullguard
