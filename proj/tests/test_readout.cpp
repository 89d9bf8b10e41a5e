#include "nullguard/error.hpp"
#include "nullguard/guard.hpp"
#include "nullguard/intervene.hpp"
#include "nullguard/readout.hpp"
#include "nullguard/rng.hpp"
#include "nullguard/synthgen.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace nullguard;

namespace {

TweetRecord constant_tweet(std::uint64_t id, std::vector<float> first_row, std::size_t n_tokens = 1) {
  TweetRecord r;
  r.tweet_id = id;
  r.split = Split::test;
  r.embeddings = Embeddings::Zero(static_cast<Eigen::Index>(n_tokens), static_cast<Eigen::Index>(first_row.size()));
  for (std::size_t j = 0; j < first_row.size(); ++j) r.embeddings(0, static_cast<Eigen::Index>(j)) = first_row[j];
  return r;
}

double igr_accuracy(std::span<const TweetRecord> records, const ReadoutModel& model) {
  std::size_t correct = 0;
  for (const auto& r : records) correct += model.predicts_in(r) == (r.igr == Igr::in);
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

GeneratorSpec igr_spec(std::uint64_t seed) {
  GeneratorSpec spec;
  spec.dim = 32;
  spec.igr_margin = 2.0;
  spec.splits = {SplitSpec{1500, std::nullopt}, SplitSpec{0, std::nullopt}, SplitSpec{500, std::nullopt}};
  spec.seed = seed;
  return spec;
}

struct SweepFixture {
  Dataset ds;
  GuardResult guard;
  ReadoutModel readout;
};

const SweepFixture& sweep_fixture() {
  static const SweepFixture fixture = [] {
    GeneratorSpec spec;
    spec.dim = 64;
    spec.affect_rank = 4;
    spec.specificity_rank = 0;
    spec.min_tokens = 15;
    spec.max_tokens = 40;
    spec.splits = {SplitSpec{1500, std::nullopt}, SplitSpec{0, std::nullopt}, SplitSpec{400, std::nullopt}};
    spec.rotate = true;
    spec.seed = 21;
    SweepFixture f;
    f.ds = generate(spec);
    f.guard = run_inlp(select_splits(f.ds.records, {Split::train}), Concept::affect, 16, 4);
    f.readout = planted_affect_readout(spec);
    return f;
  }();
  return fixture;
}

}  // namespace

TEST_CASE("pooling") {
  TweetRecord r;
  r.embeddings.resize(3, 2);
  r.embeddings << 1, 2, 3, 4, 5, 9;
  CHECK((pool(r, Pooling::mean) - Vector(Eigen::Vector2d(3, 5))).norm() < 1e-12);
  CHECK((pool(r, Pooling::first_token) - Vector(Eigen::Vector2d(1, 2))).norm() == 0.0);
  CHECK(parse_pooling("first_token") == Pooling::first_token);
  CHECK(to_string(Pooling::mean) == "mean");
  CHECK_FALSE(parse_pooling("max").has_value());
}

TEST_CASE("percent_in_group fixtures") {
  std::vector<TweetRecord> tweets;
  for (std::uint64_t i = 0; i < 4; ++i) tweets.push_back(constant_tweet(i, {static_cast<float>(i) - 1.5f, 0}));
  ReadoutModel always_in{Pooling::first_token, Vector::Zero(2), 1.0};
  ReadoutModel always_out{Pooling::first_token, Vector::Zero(2), -1.0};
  CHECK(percent_in_group(tweets, always_in) == 100.0);
  CHECK(percent_in_group(tweets, always_out) == 0.0);
  // Logits -1.5, -0.5, 0.5, 1.5: two tweets IN.
  ReadoutModel half{Pooling::first_token, Vector(Eigen::Vector2d(1, 0)), 0.0};
  CHECK(percent_in_group(tweets, half) == 50.0);
  // A zero logit counts as IN.
  ReadoutModel zero{Pooling::first_token, Vector::Zero(2), 0.0};
  CHECK(percent_in_group(tweets, zero) == 100.0);
  CHECK_THROWS_AS(percent_in_group(std::vector<TweetRecord>{}, half), Error);
  ReadoutModel wrong{Pooling::mean, Vector::Zero(3), 0.0};
  CHECK_THROWS_AS(percent_in_group(tweets, wrong), Error);
}

TEST_CASE("readout learns a separable IGR signal") {
  const auto ds = generate(igr_spec(1));
  const auto model = train_readout(select_splits(ds.records, {Split::train}));
  CHECK(igr_accuracy(select_splits(ds.records, {Split::test}), model) >= 0.95);
  CHECK(std::isfinite(model.head_bias));
  CHECK(model.head_weight.allFinite());
  // Training is deterministic.
  const auto again = train_readout(select_splits(ds.records, {Split::train}));
  CHECK(again.head_weight == model.head_weight);
}

TEST_CASE("readout on shuffled labels stays near chance") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto ds = generate(igr_spec(10 + seed));
    // Labels are permuted across the whole dataset, so test labels carry no signal either.
    std::vector<Igr> labels;
    for (const auto& r : ds.records) labels.push_back(r.igr);
    Rng rng(seed);
    rng.shuffle(labels);
    for (std::size_t i = 0; i < labels.size(); ++i) ds.records[i].igr = labels[i];
    const auto model = train_readout(select_splits(ds.records, {Split::train}));
    const double acc = igr_accuracy(select_splits(ds.records, {Split::test}), model);
    CHECK(std::abs(acc - 0.5) <= 0.07);
  }
}

TEST_CASE("readout input errors") {
  CHECK_THROWS_AS(train_readout(std::vector<TweetRecord>{}), Error);
  std::vector<TweetRecord> one_class{constant_tweet(1, {1, 0}), constant_tweet(2, {0, 1})};
  for (auto& r : one_class) r.igr = Igr::in;
  CHECK_THROWS_AS(train_readout(one_class), Error);
  one_class[1].igr = Igr::unknown;
  try {
    train_readout(one_class);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_label);
  }
}

TEST_CASE("readout json round trip") {
  ReadoutModel m{Pooling::first_token, Vector(Eigen::Vector3d(0.1, -2.5, 1e-17)), -0.3};
  const auto back = readout_from_json(to_json(m));
  CHECK(back.pooling == m.pooling);
  CHECK(back.head_weight == m.head_weight);
  CHECK(back.head_bias == m.head_bias);
}

TEST_CASE("series names and TSV layout") {
  CHECK(series_name(Concept::affect, Condition::push_positive) == "posaff");
  CHECK(series_name(Concept::affect, Condition::control_negative) == "negaff-control");
  CHECK(series_name(Concept::specificity, Condition::push_negative) == "negspec");
  CHECK(series_name(Concept::specificity, Condition::control_positive) == "posspec-control");

  SweepCurves curves;
  curves.baseline = 50;
  curves.mean = {std::vector<double>{60, 70}, {40, 30}, {50, 50.5}, {49.25, 50}};
  std::ostringstream out;
  write_sweep_tsv(out, Concept::specificity, {8, 16}, curves);
  CHECK(out.str() ==
        "inlp\tposspec\tnegspec\tposspec-control\tnegspec-control\n"
        "0\t50.0000\t50.0000\t50.0000\t50.0000\n"
        "8\t60.0000\t40.0000\t50.0000\t49.2500\n"
        "16\t70.0000\t30.0000\t50.5000\t50.0000\n");
}

TEST_CASE("sweep: baseline, determinism and worker independence") {
  const auto& f = sweep_fixture();
  SweepOptions options;
  options.grid = {0, 4, 8, 16};
  options.seeds = {1, 2, 3};
  const auto serial = run_sweep(f.ds.records, f.guard, f.readout, options);
  CHECK(serial.all.baseline == percent_in_group(select_splits(f.ds.records, {Split::test}), f.readout));
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(serial.all.mean[c][0] == serial.all.baseline);
    CHECK(serial.affect_positive.mean[c][0] == serial.affect_positive.baseline);
  }
  CHECK(serial.all.n_tweets == 400);
  CHECK(serial.affect_positive.n_tweets + serial.affect_negative.n_tweets == 400);

  options.jobs = 3;
  const auto parallel = run_sweep(f.ds.records, f.guard, f.readout, options);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(parallel.all.per_seed[c] == serial.all.per_seed[c]);
    CHECK(parallel.affect_negative.per_seed[c] == serial.affect_negative.per_seed[c]);
  }
  CHECK(sweep_tsv(parallel, parallel.all) == sweep_tsv(serial, serial.all));

  // Unsorted grids give the same values in the caller's order.
  options.grid = {16, 0, 4};
  const auto shuffled = run_sweep(f.ds.records, f.guard, f.readout, options);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(shuffled.all.mean[c][0] == serial.all.mean[c][3]);
    CHECK(shuffled.all.mean[c][2] == serial.all.mean[c][1]);
  }
}

TEST_CASE("sweep agrees with explicit intervention and readout") {
  const auto& f = sweep_fixture();
  const auto test = select_splits(f.ds.records, {Split::test});
  SweepOptions options;
  options.grid = {2, 8};
  options.seeds = {5};
  const auto report = run_sweep(f.ds.records, f.guard, f.readout, options);
  for (std::size_t g = 0; g < options.grid.size(); ++g) {
    for (Pole pole : {Pole::positive, Pole::negative}) {
      InterventionConfig cfg;
      cfg.basis = f.guard.basis_prefix(options.grid[g]);
      cfg.target = pole;
      cfg.seed = derive_seed(5, 0x70);
      const double explicit_percent = percent_in_group(intervene_dataset(test, cfg), f.readout);
      const std::size_t c = pole == Pole::positive ? 0 : 1;
      // Explicit path rounds altered tokens to float; allow one tweet of disagreement.
      CHECK(std::abs(report.all.mean[c][g] - explicit_percent) <= 100.0 / 400 + 1e-9);
    }
  }
}

TEST_CASE("sweep curve shape on planted geometry") {
  const auto& f = sweep_fixture();
  SweepOptions options;
  options.grid = {0, 2, 4, 8, 12, 16};
  options.seeds = {0, 1, 2, 3, 4};
  const auto report = run_sweep(f.ds.records, f.guard, f.readout, options);
  const auto& push_pos = report.all.mean[0];
  const auto& push_neg = report.all.mean[1];
  for (std::size_t s = 0; s < options.seeds.size(); ++s) {
    for (std::size_t g = 1; g < options.grid.size(); ++g) {
      CHECK(report.all.per_seed[0][s][g] >= report.all.per_seed[0][s][g - 1]);
      CHECK(report.all.per_seed[1][s][g] <= report.all.per_seed[1][s][g - 1]);
    }
  }
  CHECK(push_pos.back() >= 95.0);
  CHECK(push_neg.back() <= 5.0);
  for (std::size_t g = 0; g < options.grid.size(); ++g) {
    CHECK(std::abs(report.all.mean[2][g] - report.all.baseline) <= 5.0);
    CHECK(std::abs(report.all.mean[3][g] - report.all.baseline) <= 5.0);
  }
}

TEST_CASE("sweep errors") {
  const auto& f = sweep_fixture();
  SweepOptions options;
  options.grid = {17};
  CHECK_THROWS_AS(run_sweep(f.ds.records, f.guard, f.readout, options), Error);
  options.grid = {4};
  options.seeds.clear();
  CHECK_THROWS_AS(run_sweep(f.ds.records, f.guard, f.readout, options), Error);
  options.seeds = {0};
  options.alpha = 0;
  CHECK_THROWS_AS(run_sweep(f.ds.records, f.guard, f.readout, options), Error);
  options.alpha = 4;
  CHECK_THROWS_AS(run_sweep(select_splits(f.ds.records, {Split::train}), f.guard, f.readout, options), Error);
  ReadoutModel narrow{Pooling::mean, Vector::Zero(8), 0.0};
  CHECK_THROWS_AS(run_sweep(f.ds.records, f.guard, narrow, options), Error);
}
