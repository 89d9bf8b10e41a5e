#include "nullguard/guard.hpp"

#include "nullguard/error.hpp"
#include "nullguard/io.hpp"
#include "nullguard/rng.hpp"

#include <bit>
#include <cmath>
#include <iostream>
#include <string>

namespace nullguard {

using nlohmann::json;

std::string_view to_string(Concept c) noexcept {
  return c == Concept::affect ? "affect" : "specificity";
}

std::optional<Concept> parse_concept(std::string_view name) noexcept {
  if (name == "affect") return Concept::affect;
  if (name == "specificity") return Concept::specificity;
  return std::nullopt;
}

std::optional<int> concept_label(const TweetRecord& record, Concept c) {
  if (c == Concept::affect) {
    if (record.affect == Affect::unknown) {
      throw Error(Errc::missing_label, "tweet " + std::to_string(record.tweet_id) + " has no affect label");
    }
    return record.affect == Affect::positive ? 1 : -1;
  }
  if (!record.specificity) {
    throw Error(Errc::missing_label, "tweet " + std::to_string(record.tweet_id) + " has no specificity score");
  }
  switch (binarize_specificity(*record.specificity)) {
    case SpecificityBin::high: return 1;
    case SpecificityBin::low: return -1;
    case SpecificityBin::excluded: return std::nullopt;
  }
  return std::nullopt;
}

TokenSample concept_token_sample(std::span<const TweetRecord> records, Concept c, std::uint64_t seed,
                                 std::size_t tokens_per_tweet) {
  std::vector<std::pair<const TweetRecord*, int>> usable;
  std::size_t n_rows = 0;
  for (const TweetRecord& r : records) {
    if (auto label = concept_label(r, c)) {
      usable.emplace_back(&r, *label);
      n_rows += std::min(tokens_per_tweet, r.n_tokens());
    }
  }
  TokenSample sample;
  const Eigen::Index dim = records.empty() ? 0 : records.front().dim();
  sample.x.resize(static_cast<Eigen::Index>(n_rows), dim);
  sample.y.reserve(n_rows);
  Eigen::Index row = 0;
  for (const auto& [rec, label] : usable) {
    if (rec->dim() != dim) throw Error(Errc::dimension_mismatch, "records differ in embedding dimension");
    for (std::size_t t : sample_training_tokens(*rec, derive_seed(seed, rec->tweet_id), tokens_per_tweet)) {
      sample.x.row(row++) = rec->embeddings.row(static_cast<Eigen::Index>(t)).cast<double>();
      sample.y.push_back(label);
    }
  }
  return sample;
}

SubspaceBasis GuardResult::basis_prefix(std::size_t k) const {
  if (k > directions.size()) {
    throw Error(Errc::invalid_argument, "requested " + std::to_string(k) + " directions but the guard has " +
                                            std::to_string(directions.size()));
  }
  if (k == 0) return SubspaceBasis(dim());
  return orthonormalize(std::span(directions.data(), k));
}

GuardResult run_inlp(std::span<const TweetRecord> records, Concept c, std::size_t n_iters,
                     std::uint64_t seed, const InlpOptions& options) {
  if (records.empty()) throw Error(Errc::invalid_argument, "INLP needs at least one record");
  const Eigen::Index dim = records.front().dim();
  if (n_iters > static_cast<std::size_t>(dim)) {
    throw Error(Errc::iterations_exceed_dimension, "iterations exceed dimension (" + std::to_string(n_iters) +
                                                       " > " + std::to_string(dim) + ")");
  }

  GuardResult result;
  result.kind = c;
  result.seed = seed;
  result.requested_iterations = n_iters;
  result.basis = SubspaceBasis(dim);
  result.pair = ProjectionPair::identity(dim);

  TokenSample sample = concept_token_sample(records, c, derive_seed(seed, 0), options.tokens_per_tweet);
  Matrix projected = sample.x;

  for (std::size_t i = 0; i < n_iters; ++i) {
    if (options.resample_tokens && i > 0) {
      sample = concept_token_sample(records, c, derive_seed(seed, 2 * i), options.tokens_per_tweet);
      projected = sample.x * result.pair.nullspace;
    }
    const LinearProbe probe = train_probe(projected, sample.y, derive_seed(seed, 2 * i + 1), options.probe);
    Vector effective;
    if (probe.direction) effective = result.pair.nullspace * probe.weight;
    if (!probe.direction || effective.norm() < kDependenceThreshold * probe.weight.norm()) {
      result.exhausted = true;
      std::clog << "warning: INLP stopped after " << i << " of " << n_iters
                << " iterations: probe direction vanished under the current projection\n";
      break;
    }
    effective.normalize();
    result.directions.push_back(effective);
    SubspaceBasis next = orthonormalize(result.directions);
    if (next.size() != result.directions.size()) {
      result.directions.pop_back();
      result.exhausted = true;
      std::clog << "warning: INLP stopped after " << i << " of " << n_iters
                << " iterations: new direction is dependent on earlier ones\n";
      break;
    }
    result.per_iteration_accuracy.push_back(probe.train_accuracy);
    const Vector& q = next[next.size() - 1].vector();
    // X P_{k+1} = X P_k - (X P_k q) q^T because q lies in the range of P_k.
    projected -= (projected * q) * q.transpose();
    result.basis = std::move(next);
    result.pair = projection_pair(result.basis);
  }
  return result;
}

std::vector<TweetRecord> guard_dataset(std::span<const TweetRecord> records, const ProjectionPair& pair) {
  std::vector<TweetRecord> out(records.begin(), records.end());
  for (TweetRecord& r : out) {
    if (r.dim() != pair.dim()) {
      throw Error(Errc::dimension_mismatch, "tweet " + std::to_string(r.tweet_id) + " has dimension " +
                                                std::to_string(r.dim()) + ", projection expects " +
                                                std::to_string(pair.dim()));
    }
    // Rows are h^T; h^T P = (P h)^T since P is symmetric.
    const Matrix guarded = r.embeddings.cast<double>() * pair.nullspace;
    r.embeddings = guarded.cast<float>();
  }
  return out;
}

// ---------------------------------------------------------------------------

std::filesystem::path guard_manifest_path(const std::filesystem::path& prefix) {
  std::filesystem::path p = prefix;
  p += ".json";
  return p;
}

std::filesystem::path guard_blob_path(const std::filesystem::path& prefix) {
  std::filesystem::path p = prefix;
  p += ".f64";
  return p;
}

void save_guard(const GuardResult& result, const std::filesystem::path& prefix) {
  const auto dim = static_cast<std::size_t>(result.dim());
  std::vector<std::uint8_t> blob;
  blob.reserve(result.directions.size() * dim * 8);
  for (const Vector& v : result.directions) {
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(v[j]);
      for (int b = 0; b < 8; ++b) blob.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  const std::filesystem::path blob_path = guard_blob_path(prefix);
  json manifest = {
      {"format", "nullguard.guard"},
      {"version", 1},
      {"concept", to_string(result.kind)},
      {"dim", dim},
      {"iterations", result.directions.size()},
      {"requested_iterations", result.requested_iterations},
      {"seed", result.seed},
      {"accuracies", result.per_iteration_accuracy},
      {"exhausted", result.exhausted},
      {"directions", blob_path.filename().string()},
      {"directions_sha256", sha256_hex(blob)},
  };
  write_file_atomic(blob_path, blob);
  write_file_atomic(guard_manifest_path(prefix), manifest.dump(2) + "\n");
}

GuardResult load_guard(const std::filesystem::path& manifest_or_prefix) {
  std::filesystem::path manifest_path = manifest_or_prefix;
  if (manifest_path.extension() != ".json") manifest_path = guard_manifest_path(manifest_or_prefix);
  const std::vector<std::uint8_t> text = read_file(manifest_path);
  json manifest;
  try {
    manifest = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_record, manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "nullguard.guard") {
    throw Error(Errc::bad_magic, manifest_path.string() + " is not a guard manifest");
  }
  if (manifest.value("version", 0) != 1) {
    throw Error(Errc::version_mismatch, manifest_path.string() + ": unsupported guard version");
  }
  GuardResult result;
  const auto kind = parse_concept(manifest.at("concept").get<std::string>());
  if (!kind) throw Error(Errc::invalid_record, "unknown concept in guard manifest");
  result.kind = *kind;
  result.seed = manifest.at("seed").get<std::uint64_t>();
  result.requested_iterations = manifest.at("requested_iterations").get<std::size_t>();
  result.per_iteration_accuracy = manifest.at("accuracies").get<std::vector<double>>();
  result.exhausted = manifest.at("exhausted").get<bool>();
  const auto dim = manifest.at("dim").get<std::size_t>();
  const auto k = manifest.at("iterations").get<std::size_t>();

  const std::filesystem::path blob_path =
      manifest_path.parent_path() / manifest.at("directions").get<std::string>();
  const std::vector<std::uint8_t> blob = read_file(blob_path);
  if (blob.size() != k * dim * 8) {
    throw Error(Errc::truncated, blob_path.string() + ": expected " + std::to_string(k * dim * 8) + " bytes, found " +
                                     std::to_string(blob.size()));
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < k; ++i) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(blob[pos++]) << (8 * b);
      v[static_cast<Eigen::Index>(j)] = std::bit_cast<double>(bits);
    }
    result.directions.push_back(std::move(v));
  }
  result.basis = k == 0 ? SubspaceBasis(static_cast<Eigen::Index>(dim)) : orthonormalize(result.directions);
  result.pair = projection_pair(result.basis);
  return result;
}

}  // namespace nullguard
