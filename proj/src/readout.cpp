#include "nullguard/readout.hpp"

#include "nullguard/error.hpp"
#include "nullguard/intervene.hpp"
#include "nullguard/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <sstream>
#include <thread>

namespace nullguard {

using nlohmann::json;

std::string_view to_string(Pooling p) noexcept { return p == Pooling::mean ? "mean" : "first_token"; }

std::optional<Pooling> parse_pooling(std::string_view name) noexcept {
  if (name == "mean") return Pooling::mean;
  if (name == "first_token" || name == "first-token") return Pooling::first_token;
  return std::nullopt;
}

Vector pool(const TweetRecord& record, Pooling pooling) {
  if (record.n_tokens() == 0) throw Error(Errc::invalid_record, "cannot pool a tweet without tokens");
  if (pooling == Pooling::first_token) return record.embeddings.row(0).transpose().cast<double>();
  return record.embeddings.cast<double>().colwise().mean().transpose();
}

double ReadoutModel::logit(const TweetRecord& record) const {
  if (record.dim() != head_weight.size()) {
    throw Error(Errc::dimension_mismatch, "readout head dimension does not match the tweet embeddings");
  }
  return head_weight.dot(pool(record, pooling)) + head_bias;
}

namespace {

double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

ReadoutModel train_readout(std::span<const TweetRecord> records, const ReadoutOptions& options) {
  if (records.empty()) throw Error(Errc::invalid_argument, "cannot train a readout on an empty split");
  const Eigen::Index dim = records.front().dim();
  const auto n = static_cast<Eigen::Index>(records.size());
  // Augmented design [pooled, 1].
  Matrix z(n, dim + 1);
  Vector target(n);
  std::size_t n_in = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const TweetRecord& r = records[static_cast<std::size_t>(i)];
    if (r.igr == Igr::unknown) {
      throw Error(Errc::missing_label, "tweet " + std::to_string(r.tweet_id) + " has no IGR label");
    }
    if (r.dim() != dim) throw Error(Errc::dimension_mismatch, "records differ in embedding dimension");
    z.row(i).head(dim) = pool(r, options.pooling).transpose();
    z(i, dim) = 1.0;
    target[i] = r.igr == Igr::in ? 1.0 : 0.0;
    n_in += r.igr == Igr::in;
  }
  if (n_in == 0 || n_in == records.size()) throw Error(Errc::degenerate_labels, "degenerate labels");

  Vector ridge = Vector::Constant(dim + 1, options.l2);
  ridge[dim] = 1e-8;  // bias is effectively unpenalized
  auto loss = [&](const Vector& theta) {
    const Vector logits = z * theta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += log1pexp(logits[i]) - target[i] * logits[i];
    return total + 0.5 * theta.cwiseProduct(ridge).dot(theta);
  };

  Vector theta = Vector::Zero(dim + 1);
  double current = loss(theta);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Vector logits = z * theta;
    Vector p(n);
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(logits[i]);
      w[i] = p[i] * (1.0 - p[i]);
    }
    const Vector gradient = z.transpose() * (p - target) + ridge.cwiseProduct(theta);
    Matrix hessian = z.transpose() * w.asDiagonal() * z;
    hessian.diagonal() += ridge;
    const Vector step = hessian.ldlt().solve(gradient);

    double scale = 1.0;
    Vector candidate = theta - step;
    double next = loss(candidate);
    for (int halving = 0; halving < 40 && !(next <= current); ++halving) {
      scale *= 0.5;
      candidate = theta - scale * step;
      next = loss(candidate);
    }
    if (!(next <= current)) break;
    theta = candidate;
    const double moved = (scale * step).cwiseAbs().maxCoeff();
    current = next;
    if (moved < options.tolerance) break;
  }

  ReadoutModel model;
  model.pooling = options.pooling;
  model.head_weight = theta.head(dim);
  model.head_bias = theta[dim];
  return model;
}

double percent_in_group(std::span<const TweetRecord> records, const ReadoutModel& model) {
  if (records.empty()) throw Error(Errc::invalid_argument, "cannot compute % in-group of an empty set");
  std::size_t in = 0;
  for (const TweetRecord& r : records) in += model.predicts_in(r);
  return 100.0 * static_cast<double>(in) / static_cast<double>(records.size());
}

json to_json(const ReadoutModel& model) {
  std::vector<double> weight(model.head_weight.data(), model.head_weight.data() + model.head_weight.size());
  return {{"pooling", to_string(model.pooling)}, {"head_weight", weight}, {"head_bias", model.head_bias}};
}

ReadoutModel readout_from_json(const json& j) {
  ReadoutModel model;
  const auto pooling = parse_pooling(j.at("pooling").get<std::string>());
  if (!pooling) throw Error(Errc::invalid_record, "unknown pooling in readout");
  model.pooling = *pooling;
  const auto weight = j.at("head_weight").get<std::vector<double>>();
  model.head_weight = Eigen::Map<const Vector>(weight.data(), static_cast<Eigen::Index>(weight.size()));
  model.head_bias = j.at("head_bias").get<double>();
  return model;
}

// ---------------------------------------------------------------------------

std::string series_name(Concept c, Condition condition) {
  const std::string stem = c == Concept::affect ? "aff" : "spec";
  switch (condition) {
    case Condition::push_positive: return "pos" + stem;
    case Condition::push_negative: return "neg" + stem;
    case Condition::control_positive: return "pos" + stem + "-control";
    case Condition::control_negative: return "neg" + stem + "-control";
  }
  return stem;
}

namespace {

// Sub-stream tags for sweep seeds.
constexpr std::uint64_t kTokenStream = 0x70;
constexpr std::uint64_t kControlPositiveStream = 0x81;
constexpr std::uint64_t kControlNegativeStream = 0x82;

struct Slices {
  std::vector<std::size_t> affect_positive;
  std::vector<std::size_t> affect_negative;
};

struct PercentTriple {
  double all = 0.0;
  double affect_positive = 0.0;
  double affect_negative = 0.0;
};

double percent_of(const std::vector<char>& in, std::span<const std::size_t> members) {
  if (members.empty()) return 0.0;
  std::size_t count = 0;
  for (std::size_t i : members) count += in[i] != 0;
  return 100.0 * static_cast<double>(count) / static_cast<double>(members.size());
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

PercentTriple measure(std::span<const TweetRecord> tweets, const ReadoutModel& readout, const Slices& slices) {
  std::vector<char> in(tweets.size());
  for (std::size_t i = 0; i < tweets.size(); ++i) in[i] = readout.predicts_in(tweets[i]) ? 1 : 0;
  return {percent_of(in, all_indices(tweets.size())), percent_of(in, slices.affect_positive),
          percent_of(in, slices.affect_negative)};
}

// Sampled tokens of one seed, stacked, with the weight each carries in its
// tweet's pooled embedding (1/n for mean pooling; 1 for token 0 under
// first-token pooling, 0 otherwise).
struct TokenBatch {
  Matrix h;
  std::vector<std::size_t> tweet;
  std::vector<double> weight;
};

TokenBatch sampled_tokens(std::span<const TweetRecord> tweets, Pooling pooling, double fraction,
                          std::uint64_t token_seed) {
  std::vector<std::vector<std::size_t>> rows(tweets.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < tweets.size(); ++i) {
    rows[i] = sample_intervention_tokens(tweets[i], fraction, derive_seed(token_seed, tweets[i].tweet_id));
    total += rows[i].size();
  }
  TokenBatch batch;
  batch.h.resize(static_cast<Eigen::Index>(total), tweets.empty() ? 0 : tweets.front().dim());
  Eigen::Index t = 0;
  for (std::size_t i = 0; i < tweets.size(); ++i) {
    const double n = static_cast<double>(tweets[i].n_tokens());
    for (std::size_t row : rows[i]) {
      batch.h.row(t++) = tweets[i].embeddings.row(static_cast<Eigen::Index>(row)).cast<double>();
      batch.tweet.push_back(i);
      batch.weight.push_back(pooling == Pooling::mean ? 1.0 / n : (row == 0 ? 1.0 : 0.0));
    }
  }
  return batch;
}

/// Logit shift of every tweet after rewriting its sampled tokens inside the
/// first k rows of `basis_rows`, for each k in `grid`. Indexed [grid][tweet].
///
/// Rewriting replaces the component c_i = h . b_i by alpha * s * |c_i|, so a
/// linear head sees sum_i (w . b_i) (alpha s |c_i| - c_i), weighted by the
/// token's share of the pooled embedding; the running sum over i gives every
/// prefix at once.
std::vector<std::vector<double>> logit_shifts(const TokenBatch& batch, std::size_t n_tweets, const Matrix& basis_rows,
                                              const Vector& head, double alpha, double sign,
                                              const std::vector<std::size_t>& grid) {
  const Matrix coeff = batch.h * basis_rows.transpose();  // tokens x K
  const Vector head_coeff = basis_rows * head;            // K
  std::vector<std::vector<double>> shift(grid.size(), std::vector<double>(n_tweets, 0.0));
  for (Eigen::Index t = 0; t < coeff.rows(); ++t) {
    const double w = batch.weight[static_cast<std::size_t>(t)];
    if (w == 0.0) continue;
    const std::size_t tweet = batch.tweet[static_cast<std::size_t>(t)];
    double running = 0.0;
    std::size_t done = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      for (; done < grid[g]; ++done) {
        const double c = coeff(t, static_cast<Eigen::Index>(done));
        running += head_coeff[static_cast<Eigen::Index>(done)] * (alpha * sign * std::abs(c) - c);
      }
      shift[g][tweet] += w * running;
    }
  }
  return shift;
}

PercentTriple classify(const std::vector<double>& baseline_logits, const std::vector<double>& shift,
                       const Slices& slices) {
  std::vector<char> in(baseline_logits.size());
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = baseline_logits[i] + shift[i] >= 0.0 ? 1 : 0;
  return {percent_of(in, all_indices(in.size())), percent_of(in, slices.affect_positive),
          percent_of(in, slices.affect_negative)};
}

void init_curves(SweepCurves& curves, std::size_t n_seeds, std::size_t n_grid) {
  for (auto& per_seed : curves.per_seed) per_seed.assign(n_seeds, std::vector<double>(n_grid, 0.0));
  for (auto& mean : curves.mean) mean.assign(n_grid, 0.0);
}

void finish_means(SweepCurves& curves) {
  for (std::size_t c = 0; c < kConditions.size(); ++c) {
    const auto& per_seed = curves.per_seed[c];
    for (std::size_t g = 0; g < curves.mean[c].size(); ++g) {
      double total = 0.0;
      for (const auto& series : per_seed) total += series[g];
      curves.mean[c][g] = total / static_cast<double>(per_seed.size());
    }
  }
}

}  // namespace

SweepReport run_sweep(std::span<const TweetRecord> dataset, const GuardResult& guard, const ReadoutModel& readout,
                      const SweepOptions& options) {
  const std::vector<TweetRecord> test = select_splits(dataset, {Split::test});
  if (test.empty()) throw Error(Errc::invalid_argument, "dataset has no test split");
  if (options.seeds.empty()) throw Error(Errc::invalid_argument, "sweep needs at least one seed");
  for (std::size_t k : options.grid) {
    if (k > guard.iterations()) {
      throw Error(Errc::invalid_argument, "grid point " + std::to_string(k) + " exceeds the " +
                                              std::to_string(guard.iterations()) + " available guard directions");
    }
  }
  if (!(options.alpha > 0.0)) throw Error(Errc::invalid_argument, "alpha must be positive");
  intervention_token_count(1, options.token_fraction);  // validates the fraction

  SweepReport report;
  report.kind = guard.kind;
  report.grid = options.grid;
  report.seeds = options.seeds;
  report.alpha = options.alpha;
  report.token_fraction = options.token_fraction;

  Slices slices;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i].affect == Affect::positive) slices.affect_positive.push_back(i);
    if (test[i].affect == Affect::negative) slices.affect_negative.push_back(i);
  }
  const PercentTriple baseline = measure(test, readout, slices);
  report.all.baseline = baseline.all;
  report.all.n_tweets = test.size();
  report.affect_positive.baseline = baseline.affect_positive;
  report.affect_positive.n_tweets = slices.affect_positive.size();
  report.affect_negative.baseline = baseline.affect_negative;
  report.affect_negative.n_tweets = slices.affect_negative.size();

  const std::size_t n_grid = options.grid.size();
  const std::size_t n_seeds = options.seeds.size();
  for (SweepCurves* curves : {&report.all, &report.affect_positive, &report.affect_negative}) {
    init_curves(*curves, n_seeds, n_grid);
  }

  const Eigen::Index dim = guard.dim();
  if (readout.head_weight.size() != dim) {
    throw Error(Errc::dimension_mismatch, "readout head dimension does not match the guard");
  }
  // Grid points are evaluated in ascending order so one pass over the
  // directions serves them all; results are written back in grid order.
  std::vector<std::size_t> order(n_grid);
  for (std::size_t g = 0; g < n_grid; ++g) order[g] = g;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return options.grid[a] < options.grid[b]; });
  std::vector<std::size_t> sorted_grid;
  for (std::size_t g : order) sorted_grid.push_back(options.grid[g]);
  const std::size_t max_k = sorted_grid.empty() ? 0 : sorted_grid.back();
  const Matrix guard_rows = guard.basis_prefix(max_k).rows();

  std::vector<double> baseline_logits;
  baseline_logits.reserve(test.size());
  for (const TweetRecord& r : test) baseline_logits.push_back(readout.logit(r));

  // One task per seed. Controls for grid point k use the first k directions of
  // a per-seed gaussian sequence, which are themselves k orthonormalized
  // gaussian directions.
  auto run_task = [&](std::size_t s) {
    const std::uint64_t seed = options.seeds[s];
    std::array<std::vector<std::vector<double>>, 4> shifts;
    if (max_k > 0) {
      const TokenBatch batch =
          sampled_tokens(test, readout.pooling, options.token_fraction, derive_seed(seed, kTokenStream));
      const Matrix control_pos = gaussian_basis(dim, max_k, derive_seed(seed, kControlPositiveStream)).rows();
      const Matrix control_neg = gaussian_basis(dim, max_k, derive_seed(seed, kControlNegativeStream)).rows();
      const Vector& w = readout.head_weight;
      shifts[0] = logit_shifts(batch, test.size(), guard_rows, w, options.alpha, 1.0, sorted_grid);
      shifts[1] = logit_shifts(batch, test.size(), guard_rows, w, options.alpha, -1.0, sorted_grid);
      shifts[2] = logit_shifts(batch, test.size(), control_pos, w, options.alpha, 1.0, sorted_grid);
      shifts[3] = logit_shifts(batch, test.size(), control_neg, w, options.alpha, -1.0, sorted_grid);
    }
    for (std::size_t j = 0; j < n_grid; ++j) {
      const std::size_t g = order[j];
      for (std::size_t c = 0; c < 4; ++c) {
        // k = 0 leaves every token untouched: report the baseline itself.
        const PercentTriple v = options.grid[g] == 0 ? baseline : classify(baseline_logits, shifts[c][j], slices);
        report.all.per_seed[c][s][g] = v.all;
        report.affect_positive.per_seed[c][s][g] = v.affect_positive;
        report.affect_negative.per_seed[c][s][g] = v.affect_negative;
      }
    }
  };

  const std::size_t n_tasks = n_seeds;
  const std::size_t workers = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(n_tasks, 1));
  if (workers == 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t t = next++; t < n_tasks; t = next++) run_task(t);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (SweepCurves* curves : {&report.all, &report.affect_positive, &report.affect_negative}) {
    finish_means(*curves);
  }
  return report;
}

void write_sweep_tsv(std::ostream& out, Concept c, const std::vector<std::size_t>& grid, const SweepCurves& curves) {
  out << "inlp";
  for (Condition condition : kConditions) out << '\t' << series_name(c, condition);
  out << '\n';
  if (std::find(grid.begin(), grid.end(), std::size_t{0}) == grid.end()) {
    out << 0;
    for (std::size_t i = 0; i < kConditions.size(); ++i) out << '\t' << fmt::format("{:.4f}", curves.baseline);
    out << '\n';
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out << grid[g];
    for (std::size_t i = 0; i < kConditions.size(); ++i) out << '\t' << fmt::format("{:.4f}", curves.mean[i][g]);
    out << '\n';
  }
}

std::string sweep_tsv(const SweepReport& report, const SweepCurves& curves) {
  std::ostringstream out;
  write_sweep_tsv(out, report.kind, report.grid, curves);
  return out.str();
}

}  // namespace nullguard
