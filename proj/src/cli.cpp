#include "nullguard/cli.hpp"

#include "nullguard/corpus.hpp"
#include "nullguard/error.hpp"
#include "nullguard/guard.hpp"
#include "nullguard/intervene.hpp"
#include "nullguard/io.hpp"
#include "nullguard/readout.hpp"
#include "nullguard/stats.hpp"
#include "nullguard/synthgen.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace nullguard::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestFormat = "nullguard.manifest";
constexpr int kManifestVersion = 1;

enum class Kind {
  text,
  input,   // path whose content hash goes into the manifest
  inputs,  // repeated label=path (or bare path) entries, all hashed
  real,
  count,
  flag,
  counts,
  texts,
};

struct OptionDef {
  std::string name;
  Kind kind;
  std::string help;
  json fallback;
};

// Outputs written by a command, in write order.
using Written = std::vector<fs::path>;

struct CommandDef {
  std::string name;
  std::string help;
  std::vector<OptionDef> options;
  void (*exec)(const json& cfg, Written& written, std::ostream& out);
};

// ---------------------------------------------------------------------------
// Config access

[[noreturn]] void bad_config(const std::string& msg) { throw Error(Errc::invalid_argument, msg); }

std::string text(const json& cfg, const char* key) {
  const json& v = cfg.at(key);
  return v.is_null() ? std::string() : v.get<std::string>();
}

std::string required_text(const json& cfg, const char* key) {
  std::string v = text(cfg, key);
  if (v.empty()) bad_config(fmt::format("--{} is required", key));
  return v;
}

double real(const json& cfg, const char* key) { return cfg.at(key).get<double>(); }
std::uint64_t count(const json& cfg, const char* key) { return cfg.at(key).get<std::uint64_t>(); }
bool flag(const json& cfg, const char* key) { return cfg.at(key).get<bool>(); }

std::vector<std::string> texts(const json& cfg, const char* key) {
  return cfg.at(key).get<std::vector<std::string>>();
}

std::uint64_t parse_count(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    if (!s.empty() && s.front() == '-') throw std::invalid_argument(s);
    v = std::stoull(s, &used, 0);
  } catch (const std::exception&) {
    bad_config(fmt::format("{}: expected a non-negative integer, got '{}'", what, s));
  }
  if (used != s.size()) bad_config(fmt::format("{}: expected a non-negative integer, got '{}'", what, s));
  return v;
}

double parse_real(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_config(fmt::format("{}: expected a number, got '{}'", what, s));
  }
  if (used != s.size()) bad_config(fmt::format("{}: expected a number, got '{}'", what, s));
  return v;
}

/// Splits "label=path"; a bare path gets an empty label.
std::pair<std::string, std::string> labelled(const std::string& entry) {
  const auto eq = entry.find('=');
  if (eq == std::string::npos) return {"", entry};
  return {entry.substr(0, eq), entry.substr(eq + 1)};
}

std::vector<Split> splits_of(const json& cfg) {
  std::vector<Split> out;
  for (const std::string& name : texts(cfg, "splits")) {
    const auto s = parse_split(name);
    if (!s) bad_config(fmt::format("unknown split '{}'", name));
    out.push_back(*s);
  }
  if (out.empty()) bad_config("--splits must name at least one split");
  return out;
}

std::vector<TweetRecord> filter_splits(std::vector<TweetRecord> records, const std::vector<Split>& splits) {
  std::erase_if(records, [&](const TweetRecord& r) {
    return std::find(splits.begin(), splits.end(), r.split) == splits.end();
  });
  return records;
}

Concept concept_of(const json& cfg) {
  const std::string name = text(cfg, "concept");
  const auto c = parse_concept(name);
  if (!c) bad_config(fmt::format("unknown concept '{}' (expected affect or specificity)", name));
  return *c;
}

void write_text(const fs::path& path, const std::string& body, Written& written) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, body);
  written.push_back(path);
}

// ---------------------------------------------------------------------------
// Commands

void exec_synth(const json& cfg, Written& written, std::ostream& out) {
  const fs::path out_path = required_text(cfg, "out");
  GeneratorSpec spec;
  if (const std::string file = text(cfg, "spec"); !file.empty()) {
    const auto bytes = read_file(file);
    spec = generator_spec_from_json(json::parse(bytes.begin(), bytes.end()));
  }
  spec.seed = count(cfg, "seed");
  const Dataset dataset = generate(spec);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_dataset(dataset, out_path);
  written.push_back(out_path);
  written.push_back(sidecar_path(out_path));

  const AffectSplitCounts counts = count_affect_by_split(dataset.records);
  out << fmt::format("wrote {} tweets (d={}) to {}\n", dataset.records.size(), dataset.dim, out_path.string());
  for (Split s : {Split::train, Split::dev, Split::test}) {
    const auto i = static_cast<std::size_t>(s);
    out << fmt::format("  {}: {} positive / {} negative affect\n", to_string(s), counts.positive[i],
                       counts.negative[i]);
  }
}

std::string stat_row(const std::string& name, const std::optional<StatResult>& r, StatMethod method) {
  if (!r) return fmt::format("{}\t{}\tNA\tNA\t0\n", name, to_string(method));
  const std::string p = r->p_value ? fmt::format("{:.6e}", *r->p_value) : "NA";
  return fmt::format("{}\t{}\t{:.6f}\t{}\t{}\n", name, to_string(r->method), r->value, p, r->n);
}

void exec_stats(const json& cfg, Written& written, std::ostream& out) {
  const Dataset dataset = load_dataset(required_text(cfg, "dataset"));
  const auto records = filter_splits(dataset.records, splits_of(cfg));

  // A statistic whose labels are absent from this dataset is reported as NA.
  auto attempt = [](auto&& fn) -> std::optional<StatResult> {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() == Errc::degenerate_series) throw;
      return std::nullopt;
    }
  };
  std::string table = "statistic\tmethod\tvalue\tp_value\tn\n";
  table += stat_row("affect-igr", attempt([&] { return affect_igr_correlation(records); }), StatMethod::pearson);
  table += stat_row("specificity-igr", attempt([&] { return specificity_igr_correlation(records); }),
                    StatMethod::pearson);
  table += stat_row("extremes-igr", attempt([&] { return extremes_correlation(records); }), StatMethod::pearson);
  if (const std::string ann = text(cfg, "annotations"); !ann.empty()) {
    const auto annotations = load_annotations(ann);
    table += stat_row("kappa-feeling", fleiss_kappa(feeling_table(annotations)), StatMethod::fleiss_kappa);
    table += stat_row("kappa-judgment", fleiss_kappa(judgment_table(annotations)), StatMethod::fleiss_kappa);
  }
  out << table;
  if (const std::string path = text(cfg, "out"); !path.empty()) write_text(path, table, written);
}

InlpOptions inlp_options(const json& cfg) {
  InlpOptions opt;
  opt.probe.lambda = real(cfg, "lambda");
  opt.probe.max_epochs = static_cast<int>(count(cfg, "max-epochs"));
  opt.probe.tolerance = real(cfg, "tolerance");
  opt.tokens_per_tweet = count(cfg, "tokens-per-tweet");
  opt.resample_tokens = flag(cfg, "resample-tokens");
  return opt;
}

void exec_guard(const json& cfg, Written& written, std::ostream& out) {
  const fs::path prefix = required_text(cfg, "out");
  const Dataset dataset = load_dataset(required_text(cfg, "dataset"));
  const auto records = filter_splits(dataset.records, splits_of(cfg));
  const Concept c = concept_of(cfg);
  const GuardResult guard = run_inlp(records, c, count(cfg, "iters"), count(cfg, "seed"), inlp_options(cfg));
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  save_guard(guard, prefix);
  written.push_back(guard_manifest_path(prefix));
  written.push_back(guard_blob_path(prefix));

  out << fmt::format("{} guard: {} of {} iterations{}\n", to_string(c), guard.iterations(),
                     guard.requested_iterations, guard.exhausted ? " (stopped early)" : "");
  for (std::size_t i = 0; i < guard.per_iteration_accuracy.size(); ++i) {
    out << fmt::format("  iteration {:>3}: probe accuracy {:.4f}\n", i + 1, guard.per_iteration_accuracy[i]);
  }
}

void exec_intervene(const json& cfg, Written& written, std::ostream& out) {
  const fs::path out_path = required_text(cfg, "out");
  Dataset dataset = load_dataset(required_text(cfg, "dataset"));
  const auto records = filter_splits(std::move(dataset.records), splits_of(cfg));
  const auto pole = parse_pole(text(cfg, "pole"));
  if (!pole) bad_config(fmt::format("unknown pole '{}' (expected positive or negative)", text(cfg, "pole")));
  const std::uint64_t seed = count(cfg, "seed");
  const std::size_t n_control = count(cfg, "control");

  json note = {{"pole", to_string(*pole)},
               {"alpha", real(cfg, "alpha")},
               {"token_fraction", real(cfg, "fraction")},
               {"seed", seed}};
  Dataset altered;
  altered.dim = dataset.dim;
  if (n_control > 0) {
    ControlConfig cc;
    cc.n_directions = n_control;
    cc.alpha = real(cfg, "alpha");
    cc.token_fraction = real(cfg, "fraction");
    cc.seed = seed;
    cc.target = *pole;
    altered.records = random_control(records, cc);
    note["control_directions"] = n_control;
  } else {
    const GuardResult guard = load_guard(required_text(cfg, "guard"));
    const std::size_t k = cfg.at("iters").is_null() ? guard.iterations() : count(cfg, "iters");
    if (k > guard.iterations()) {
      bad_config(fmt::format("--iters {} exceeds the guard's {} directions", k, guard.iterations()));
    }
    InterventionConfig ic;
    ic.basis = guard.basis_prefix(k);
    ic.target = *pole;
    ic.alpha = real(cfg, "alpha");
    ic.token_fraction = real(cfg, "fraction");
    ic.seed = seed;
    ic.flip_only = flag(cfg, "flip-only");
    altered.records = intervene_dataset(records, ic);
    note["concept"] = to_string(guard.kind);
    note["iterations"] = k;
    note["flip_only"] = ic.flip_only;
  }
  for (TweetRecord& r : altered.records) r.sidecar["intervention"] = note;
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_dataset(altered, out_path);
  written.push_back(out_path);
  written.push_back(sidecar_path(out_path));
  out << fmt::format("wrote {} intervened tweets to {}\n", altered.records.size(), out_path.string());
}

std::string per_seed_tsv(const SweepReport& report) {
  std::string body = "subset\tseries\tseed\tinlp\tpercent_in_group\n";
  const std::pair<const char*, const SweepCurves*> subsets[] = {
      {"all", &report.all}, {"affect-positive", &report.affect_positive}, {"affect-negative", &report.affect_negative}};
  for (const auto& [name, curves] : subsets) {
    for (std::size_t c = 0; c < kConditions.size(); ++c) {
      const std::string series = series_name(report.kind, kConditions[c]);
      for (std::size_t s = 0; s < report.seeds.size(); ++s) {
        for (std::size_t g = 0; g < report.grid.size(); ++g) {
          body += fmt::format("{}\t{}\t{}\t{}\t{:.4f}\n", name, series, report.seeds[s], report.grid[g],
                              curves->per_seed[c][s][g]);
        }
      }
    }
  }
  return body;
}

void exec_sweep(const json& cfg, Written& written, std::ostream& out) {
  const std::string prefix = required_text(cfg, "out");
  const Dataset dataset = load_dataset(required_text(cfg, "dataset"));
  const GuardResult guard = load_guard(required_text(cfg, "guard"));

  ReadoutModel readout;
  if (const std::string path = text(cfg, "readout"); !path.empty()) {
    const auto bytes = read_file(path);
    readout = readout_from_json(json::parse(bytes.begin(), bytes.end()));
  } else {
    ReadoutOptions ro;
    const auto pooling = parse_pooling(text(cfg, "pooling"));
    if (!pooling) bad_config(fmt::format("unknown pooling '{}' (expected mean or first_token)", text(cfg, "pooling")));
    ro.pooling = *pooling;
    ro.l2 = real(cfg, "l2");
    readout = train_readout(select_splits(dataset.records, {Split::train}), ro);
  }

  SweepOptions opt;
  opt.alpha = real(cfg, "alpha");
  opt.token_fraction = real(cfg, "fraction");
  opt.grid = cfg.at("grid").get<std::vector<std::size_t>>();
  opt.seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
  if (opt.seeds.empty()) {
    const std::uint64_t first = count(cfg, "seed");
    const std::uint64_t n = count(cfg, "n-seeds");
    if (n == 0) bad_config("--n-seeds must be at least 1");
    for (std::uint64_t i = 0; i < n; ++i) opt.seeds.push_back(first + i);
  }
  opt.jobs = count(cfg, "jobs");
  const SweepReport report = run_sweep(dataset.records, guard, readout, opt);

  write_text(prefix + ".tsv", sweep_tsv(report, report.all), written);
  write_text(prefix + ".affect-positive.tsv", sweep_tsv(report, report.affect_positive), written);
  write_text(prefix + ".affect-negative.tsv", sweep_tsv(report, report.affect_negative), written);
  write_text(prefix + ".per-seed.tsv", per_seed_tsv(report), written);
  write_text(prefix + ".readout.json", to_json(readout).dump(2) + "\n", written);

  out << fmt::format("baseline {:.4f}% in-group over {} test tweets; {} seeds x {} grid points\n",
                     report.all.baseline, report.all.n_tweets, report.seeds.size(), report.grid.size());
  out << sweep_tsv(report, report.all);
}

struct SweepTable {
  std::string subset;
  std::vector<std::string> series;
  std::vector<std::size_t> inlp;
  std::vector<std::vector<double>> values;  // [row][series]
};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  const auto bytes = read_file(path);
  std::vector<std::string> lines;
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

SweepTable read_sweep_table(const std::string& label, const fs::path& path) {
  const auto lines = read_lines(path);
  auto fail = [&](const std::string& msg) -> void {
    throw Error(Errc::invalid_record, fmt::format("{}: {}", path.string(), msg));
  };
  if (lines.empty()) fail("empty sweep table");
  SweepTable table;
  table.subset = label;
  auto header = split_tabs(lines.front());
  if (header.size() < 2 || header.front() != "inlp") fail("header must start with 'inlp'");
  table.series.assign(header.begin() + 1, header.end());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_tabs(lines[i]);
    if (cells.size() != header.size()) fail(fmt::format("line {} has {} columns, expected {}", i + 1, cells.size(), header.size()));
    table.inlp.push_back(parse_count(cells[0], path.string()));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_real(cells[c], path.string()));
    table.values.push_back(std::move(row));
  }
  return table;
}

struct PredictionSummary {
  std::string label;
  std::size_t n = 0;
  std::size_t n_in = 0;
};

/// Reads `tweet_id  pred  prob` rows; pred is 1/0 or IN/OUT, an optional header is skipped.
PredictionSummary read_predictions(const std::string& label, const fs::path& path) {
  PredictionSummary s;
  s.label = label;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto cells = split_tabs(lines[i]);
    if (i == 0 && !cells.empty() && cells[0] == "tweet_id") continue;
    if (cells.size() != 3) {
      throw Error(Errc::invalid_record, fmt::format("{}: line {} needs 3 columns (tweet_id pred prob)", path.string(), i + 1));
    }
    parse_count(cells[0], path.string());
    const double prob = parse_real(cells[2], path.string());
    if (!(prob >= 0.0 && prob <= 1.0)) {
      throw Error(Errc::invalid_record, fmt::format("{}: line {} has probability outside [0, 1]", path.string(), i + 1));
    }
    const std::string& pred = cells[1];
    bool in = false;
    if (pred == "1" || pred == "IN" || pred == "in") {
      in = true;
    } else if (!(pred == "0" || pred == "OUT" || pred == "out")) {
      throw Error(Errc::invalid_record, fmt::format("{}: line {} has unknown prediction '{}'", path.string(), i + 1, pred));
    }
    ++s.n;
    s.n_in += in;
  }
  if (s.n == 0) throw Error(Errc::invalid_record, fmt::format("{}: no predictions", path.string()));
  return s;
}

std::string subset_label(const std::string& label, const fs::path& path) {
  if (!label.empty()) return label;
  const std::string name = path.filename().string();
  if (name.find(".affect-positive.") != std::string::npos) return "affect-positive";
  if (name.find(".affect-negative.") != std::string::npos) return "affect-negative";
  return "all";
}

void exec_report(const json& cfg, Written& written, std::ostream& out) {
  const std::string out_path = required_text(cfg, "out");
  std::vector<SweepTable> tables;
  for (const std::string& entry : texts(cfg, "sweep")) {
    const auto [label, path] = labelled(entry);
    tables.push_back(read_sweep_table(subset_label(label, path), path));
  }
  std::vector<PredictionSummary> predictions;
  for (const std::string& entry : texts(cfg, "predictions")) {
    const auto [label, path] = labelled(entry);
    predictions.push_back(read_predictions(label.empty() ? fs::path(path).stem().string() : label, path));
  }
  if (tables.empty() && predictions.empty()) bad_config("report needs at least one --sweep or --predictions input");

  std::string plot = "subset\tseries\tinlp\tpercent_in_group\n";
  std::string summary;
  for (const SweepTable& t : tables) {
    for (std::size_t c = 0; c < t.series.size(); ++c) {
      for (std::size_t r = 0; r < t.inlp.size(); ++r) {
        plot += fmt::format("{}\t{}\t{}\t{:.4f}\n", t.subset, t.series[c], t.inlp[r], t.values[r][c]);
      }
    }
    const auto zero = std::find(t.inlp.begin(), t.inlp.end(), 0);
    const bool has_baseline = zero != t.inlp.end();
    const double base = has_baseline ? t.values[zero - t.inlp.begin()][0] : 0.0;
    summary += fmt::format("[{}] baseline {}\n", t.subset, has_baseline ? fmt::format("{:.4f}", base) : "NA");
    if (t.inlp.empty()) continue;
    const std::size_t last = t.inlp.size() - 1;
    for (std::size_t c = 0; c < t.series.size(); ++c) {
      std::string line = fmt::format("  {}: {:.4f} at inlp {}", t.series[c], t.values[last][c], t.inlp[last]);
      if (has_baseline) {
        double worst = 0.0;
        for (std::size_t r = 0; r < t.inlp.size(); ++r) worst = std::max(worst, std::abs(t.values[r][c] - base));
        line += fmt::format(", max |shift| from baseline {:.4f}", worst);
      }
      summary += line + "\n";
    }
  }
  for (const PredictionSummary& p : predictions) {
    // "series@k" labels place a prediction file on a sweep curve.
    std::string series = p.label;
    std::string inlp = "NA";
    if (const auto at = p.label.rfind('@'); at != std::string::npos) {
      series = p.label.substr(0, at);
      inlp = std::to_string(parse_count(p.label.substr(at + 1), "--predictions label"));
    }
    const double pct = 100.0 * static_cast<double>(p.n_in) / static_cast<double>(p.n);
    plot += fmt::format("predictions\t{}\t{}\t{:.4f}\n", series, inlp, pct);
    summary += fmt::format("[predictions] {}: {:.4f}% in-group over {} tweets\n", p.label, pct, p.n);
  }

  write_text(out_path, plot, written);
  if (const std::string path = text(cfg, "summary"); !path.empty()) write_text(path, summary, written);
  out << summary;
}

// ---------------------------------------------------------------------------
// Command table

std::vector<std::string> all_splits() { return {"train", "dev", "test"}; }

const std::vector<CommandDef>& commands() {
  static const std::vector<CommandDef> table = [] {
    const OptionDef seed{"seed", Kind::count, "Seed (falls back to NULLGUARD_SEED, then 0)", nullptr};
    const OptionDef alpha{"alpha", Kind::real, "Intervention strength", kDefaultAlpha};
    const OptionDef fraction{"fraction", Kind::real, "Share of tokens altered per tweet", kDefaultTokenFraction};
    std::vector<CommandDef> t;
    t.push_back({"synth",
                 "Generate a synthetic dataset with planted concept subspaces",
                 {{"spec", Kind::input, "Generator spec JSON (defaults when omitted)", ""},
                  {"out", Kind::text, "Output dataset (.igpb); sidecar goes to <out>.jsonl", ""},
                  seed},
                 exec_synth});
    t.push_back({"stats",
                 "Correlations between labels and Fleiss's kappa",
                 {{"dataset", Kind::input, "Dataset file", ""},
                  {"annotations", Kind::input, "Raw annotator answers (JSON lines)", ""},
                  {"splits", Kind::texts, "Splits to include", all_splits()},
                  {"out", Kind::text, "Write the table to this TSV as well", ""}},
                 exec_stats});
    t.push_back({"guard",
                 "Learn a concept subspace by iterative nullspace projection",
                 {{"dataset", Kind::input, "Dataset file", ""},
                  {"concept", Kind::text, "affect or specificity", "affect"},
                  {"iters", Kind::count, "Number of probe iterations", 32},
                  {"splits", Kind::texts, "Splits used for training", std::vector<std::string>{"train"}},
                  {"tokens-per-tweet", Kind::count, "Training tokens sampled per tweet", kTrainingTokensPerTweet},
                  {"resample-tokens", Kind::flag, "Draw a fresh token sample every iteration", false},
                  {"lambda", Kind::real, "Probe L2 strength", ProbeOptions{}.lambda},
                  {"max-epochs", Kind::count, "Probe epoch limit", ProbeOptions{}.max_epochs},
                  {"tolerance", Kind::real, "Probe early-stopping tolerance", ProbeOptions{}.tolerance},
                  seed,
                  {"out", Kind::text, "Output prefix (<out>.json, <out>.f64)", ""}},
                 exec_guard});
    t.push_back({"intervene",
                 "Rewrite token embeddings toward one pole of a concept",
                 {{"dataset", Kind::input, "Dataset file", ""},
                  {"guard", Kind::input, "Guard manifest or prefix", ""},
                  {"iters", Kind::count, "Use the first k guard directions (default all)", nullptr},
                  {"pole", Kind::text, "positive or negative", "positive"},
                  alpha,
                  fraction,
                  {"flip-only", Kind::flag, "Only rebuild components on the wrong side", false},
                  {"control", Kind::count, "Use this many random gaussian directions instead of the guard", 0},
                  {"splits", Kind::texts, "Splits to rewrite", all_splits()},
                  seed,
                  {"out", Kind::text, "Output dataset (.igpb)", ""}},
                 exec_intervene});
    t.push_back({"sweep",
                 "Percent in-group on the test split across intervention strengths",
                 {{"dataset", Kind::input, "Dataset file", ""},
                  {"guard", Kind::input, "Guard manifest or prefix", ""},
                  {"readout", Kind::input, "Readout JSON (trained on the train split when omitted)", ""},
                  {"pooling", Kind::text, "Readout pooling: mean or first_token", "mean"},
                  {"l2", Kind::real, "Readout L2 strength", ReadoutOptions{}.l2},
                  alpha,
                  fraction,
                  {"grid", Kind::counts, "Iteration counts to evaluate", kDefaultGrid},
                  {"seeds", Kind::counts, "Explicit seed list", std::vector<std::uint64_t>{}},
                  {"n-seeds", Kind::count, "Seeds seed, seed+1, ... when --seeds is empty", 1},
                  seed,
                  {"jobs", Kind::count, "Worker threads", 1},
                  {"out", Kind::text, "Output prefix", ""}},
                 exec_sweep});
    t.push_back({"report",
                 "Merge sweep tables and prediction files into plot-ready TSV and a summary",
                 {{"sweep", Kind::inputs, "Sweep TSV, optionally subset=path", std::vector<std::string>{}},
                  {"predictions", Kind::inputs, "Predictions TSV (tweet_id pred prob) as label=path",
                   std::vector<std::string>{}},
                  {"out", Kind::text, "Plot-ready TSV", ""},
                  {"summary", Kind::text, "Also write the summary text here", ""}},
                 exec_report});
    return t;
  }();
  return table;
}

const CommandDef& find_command(const std::string& name) {
  for (const CommandDef& c : commands()) {
    if (c.name == name) return c;
  }
  throw Error(Errc::invalid_argument, fmt::format("unknown command '{}'", name));
}

json defaults(const CommandDef& def) {
  json cfg = json::object();
  for (const OptionDef& o : def.options) cfg[o.name] = o.fallback;
  return cfg;
}

/// Overlays a config file onto `cfg`, rejecting keys the command does not know.
void merge_file(json& cfg, const CommandDef& def, const json& file) {
  if (!file.is_object()) bad_config("config file must contain a JSON object");
  for (const auto& [key, value] : file.items()) {
    if (!cfg.contains(key)) bad_config(fmt::format("config key '{}' is not an option of '{}'", key, def.name));
    cfg[key] = value;
  }
}

std::uint64_t env_seed() {
  const char* env = std::getenv("NULLGUARD_SEED");
  if (env == nullptr || *env == '\0') return 0;
  return parse_count(env, "NULLGUARD_SEED");
}

std::vector<fs::path> input_paths(const CommandDef& def, const json& cfg) {
  std::vector<fs::path> paths;
  for (const OptionDef& o : def.options) {
    if (o.kind == Kind::input) {
      if (const std::string p = text(cfg, o.name.c_str()); !p.empty()) paths.emplace_back(p);
    } else if (o.kind == Kind::inputs) {
      for (const std::string& entry : texts(cfg, o.name.c_str())) paths.emplace_back(labelled(entry).second);
    }
  }
  return paths;
}

/// Guard inputs are named by prefix or manifest; the hashed files are the manifest and its blob.
std::vector<fs::path> expand_inputs(const std::string& command, const json& cfg, std::vector<fs::path> paths) {
  std::vector<fs::path> out;
  for (const fs::path& p : paths) {
    const bool is_guard = cfg.contains("guard") && text(cfg, "guard") == p.string();
    if (is_guard) {
      fs::path prefix = p;
      if (prefix.extension() == ".json") prefix.replace_extension();
      out.push_back(guard_manifest_path(prefix));
      out.push_back(guard_blob_path(prefix));
    } else {
      out.push_back(p);
      if (command != "report" && (cfg.contains("dataset") && text(cfg, "dataset") == p.string()) &&
          fs::exists(sidecar_path(p))) {
        out.push_back(sidecar_path(p));
      }
    }
  }
  return out;
}

json hash_map(const std::vector<fs::path>& paths) {
  json m = json::object();
  for (const fs::path& p : paths) m[p.string()] = sha256_file(p);
  return m;
}

bool non_negative(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

void check_types(const CommandDef& def, const json& cfg) {
  for (const OptionDef& o : def.options) {
    const json& v = cfg.at(o.name);
    bool ok = true;
    switch (o.kind) {
      case Kind::text:
      case Kind::input: ok = v.is_string() || v.is_null(); break;
      case Kind::real: ok = v.is_number(); break;
      case Kind::count: ok = non_negative(v) || (v.is_null() && o.fallback.is_null()); break;
      case Kind::flag: ok = v.is_boolean(); break;
      case Kind::counts:
        ok = v.is_array() && std::all_of(v.begin(), v.end(), non_negative);
        break;
      case Kind::texts:
      case Kind::inputs:
        ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
        break;
    }
    if (!ok) bad_config(fmt::format("config value for '{}' has the wrong type: {}", o.name, v.dump()));
  }
}

int fail(std::ostream& err, std::string_view code, const std::string& message) {
  err << json{{"error", code}, {"message", message}}.dump() << "\n";
  return code == "usage" ? 2 : 1;
}

int rerun(const std::string& manifest_file, bool verify, std::ostream& out) {
  const auto bytes = read_file(manifest_file);
  const json manifest = json::parse(bytes.begin(), bytes.end());
  if (manifest.value("format", "") != kManifestFormat) {
    throw Error(Errc::bad_magic, fmt::format("{} is not a nullguard run manifest", manifest_file));
  }
  if (manifest.value("version", 0) != kManifestVersion) {
    throw Error(Errc::version_mismatch, fmt::format("{}: unsupported manifest version", manifest_file));
  }
  for (const auto& [path, digest] : manifest.at("inputs").items()) {
    if (!fs::exists(path) || sha256_file(path) != digest.get<std::string>()) {
      throw Error(Errc::stale_input, fmt::format("input {} no longer matches the manifest", path));
    }
  }
  const json fresh = execute(manifest.at("command").get<std::string>(), manifest.at("config"), out);
  if (verify && fresh.at("outputs") != manifest.at("outputs")) {
    for (const auto& [path, digest] : manifest.at("outputs").items()) {
      if (!fresh.at("outputs").contains(path) || fresh.at("outputs").at(path) != digest) {
        throw Error(Errc::output_mismatch, fmt::format("rerun produced different bytes for {}", path));
      }
    }
    throw Error(Errc::output_mismatch, "rerun produced a different set of outputs");
  }
  return 0;
}

}  // namespace

fs::path manifest_path(const std::string& command, const json& config) {
  find_command(command);
  const std::string out = config.contains("out") && config.at("out").is_string() ? config.at("out").get<std::string>() : "";
  if (out.empty()) return {};
  return out + ".manifest.json";
}

json execute(const std::string& command, const json& config, std::ostream& out) {
  const CommandDef& def = find_command(command);
  json cfg = defaults(def);
  merge_file(cfg, def, config);
  check_types(def, cfg);
  if (cfg.contains("seed") && cfg.at("seed").is_null()) cfg["seed"] = env_seed();

  const std::vector<fs::path> inputs = expand_inputs(command, cfg, input_paths(def, cfg));
  for (const fs::path& p : inputs) {
    if (!fs::exists(p)) throw Error(Errc::io, fmt::format("input {} does not exist", p.string()));
  }
  json manifest = {{"format", kManifestFormat},
                   {"version", kManifestVersion},
                   {"command", command},
                   {"config", cfg},
                   {"inputs", hash_map(inputs)}};
  Written written;
  def.exec(cfg, written, out);
  manifest["outputs"] = hash_map(written);
  if (const fs::path mpath = manifest_path(command, cfg); !mpath.empty()) {
    write_file_atomic(mpath, manifest.dump(2) + "\n");
  }
  return manifest;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept guarding and counterfactual interventions on token embeddings", "nullguard"};
  app.require_subcommand(1);

  struct Bound {
    const CommandDef* def;
    CLI::App* app;
    std::string config_file;
    std::map<std::string, std::vector<std::string>> values;
    std::map<std::string, bool> flags;
    std::map<std::string, CLI::Option*> opts;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const CommandDef& def : commands()) {
    auto b = std::make_unique<Bound>();
    b->def = &def;
    b->app = app.add_subcommand(def.name, def.help);
    b->app->add_option("--config", b->config_file, "JSON config; flags override its values");
    for (const OptionDef& o : def.options) {
      const std::string flag_name = "--" + o.name;
      if (o.kind == Kind::flag) {
        b->opts[o.name] = b->app->add_flag(flag_name, b->flags[o.name], o.help);
        continue;
      }
      CLI::Option* opt = b->app->add_option(flag_name, b->values[o.name], o.help);
      if (o.kind == Kind::counts || o.kind == Kind::texts) {
        opt->delimiter(',');
      } else if (o.kind != Kind::inputs) {
        opt->expected(1);
      }
      b->opts[o.name] = opt;
    }
    bound.push_back(std::move(b));
  }
  std::string manifest_file;
  bool verify = false;
  CLI::App* rerun_app = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rerun_app->add_option("manifest", manifest_file, "Run manifest")->required();
  rerun_app->add_flag("--verify", verify, "Fail unless every output hash matches the manifest");

  std::vector<const char*> argv{"nullguard"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    return fail(err, "usage", e.what());
  }

  try {
    if (rerun_app->parsed()) return rerun(manifest_file, verify, out);
    for (const auto& b : bound) {
      if (!b->app->parsed()) continue;
      const CommandDef& def = *b->def;
      json cfg = json::object();
      if (!b->config_file.empty()) {
        const auto bytes = read_file(b->config_file);
        json file = json::parse(bytes.begin(), bytes.end());
        json scratch = defaults(def);
        merge_file(scratch, def, file);
        cfg = std::move(file);
      }
      for (const OptionDef& o : def.options) {
        if (b->opts.at(o.name)->count() == 0) continue;
        const std::string what = "--" + o.name;
        const auto& vals = b->values[o.name];
        switch (o.kind) {
          case Kind::flag: cfg[o.name] = b->flags[o.name]; break;
          case Kind::text:
          case Kind::input: cfg[o.name] = vals.front(); break;
          case Kind::real: cfg[o.name] = parse_real(vals.front(), what); break;
          case Kind::count: cfg[o.name] = parse_count(vals.front(), what); break;
          case Kind::counts: {
            json list = json::array();
            for (const std::string& v : vals) list.push_back(parse_count(v, what));
            cfg[o.name] = list;
            break;
          }
          case Kind::texts:
          case Kind::inputs: cfg[o.name] = vals; break;
        }
      }
      // The synth seed may also come from the spec file itself.
      if (def.name == "synth" && !cfg.contains("seed") && cfg.contains("spec") && cfg.at("spec").is_string()) {
        const auto bytes = read_file(cfg.at("spec").get<std::string>());
        const json spec = json::parse(bytes.begin(), bytes.end());
        if (spec.contains("seed")) cfg["seed"] = spec.at("seed");
      }
      execute(def.name, cfg, out);
      return 0;
    }
    return fail(err, "usage", "no command given");
  } catch (const Error& e) {
    return fail(err, errc_name(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(err, "invalid_argument", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(err, "io", e.what());
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what());
  }
}

}  // namespace nullguard::cli
