#pragma once

#include "nullguard/corpus.hpp"
#include "nullguard/geometry.hpp"
#include "nullguard/probe.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace nullguard {

enum class Concept { affect, specificity };

std::string_view to_string(Concept c) noexcept;
std::optional<Concept> parse_concept(std::string_view name) noexcept;

/// Concept label of a record as +1 / -1, or nothing when the record does not
/// take part in training (specificity in the excluded middle). Throws
/// Errc::missing_label when the record lacks the annotation entirely.
std::optional<int> concept_label(const TweetRecord& record, Concept c);

/// Token-level training matrix: `tokens_per_tweet` sampled tokens per usable
/// tweet, each labelled with its tweet's concept label.
struct TokenSample {
  Matrix x;
  std::vector<int> y;
};

TokenSample concept_token_sample(std::span<const TweetRecord> records, Concept c, std::uint64_t seed,
                                 std::size_t tokens_per_tweet = kTrainingTokensPerTweet);

struct InlpOptions {
  ProbeOptions probe;
  std::size_t tokens_per_tweet = kTrainingTokensPerTweet;
  /// Draw a fresh token sample every iteration instead of reusing one.
  bool resample_tokens = false;
};

/// Output of iterative nullspace projection.
struct GuardResult {
  Concept kind = Concept::affect;
  std::uint64_t seed = 0;
  std::size_t requested_iterations = 0;
  /// One unit direction per completed iteration, in order.
  std::vector<Vector> directions;
  SubspaceBasis basis{0};
  ProjectionPair pair;
  /// Balanced training accuracy of each iteration's probe.
  std::vector<double> per_iteration_accuracy;
  /// True when the loop stopped early because a probe direction vanished.
  bool exhausted = false;

  Eigen::Index dim() const noexcept { return basis.dim(); }
  std::size_t iterations() const noexcept { return directions.size(); }

  /// Orthonormal basis over the first `k` directions (empty basis for k = 0).
  SubspaceBasis basis_prefix(std::size_t k) const;
};

/// Learns `n_iters` probes, each on the token embeddings projected onto the
/// intersection of the previous probes' nullspaces.
GuardResult run_inlp(std::span<const TweetRecord> records, Concept c, std::size_t n_iters,
                     std::uint64_t seed, const InlpOptions& options = {});

/// Copies of `records` with every token embedding replaced by P h.
std::vector<TweetRecord> guard_dataset(std::span<const TweetRecord> records, const ProjectionPair& pair);

/// Writes `<prefix>.json` (manifest) and `<prefix>.f64` (k x d little-endian doubles).
void save_guard(const GuardResult& result, const std::filesystem::path& prefix);

/// Reads a guard from its manifest path or prefix; rebuilds basis and pair from the directions.
GuardResult load_guard(const std::filesystem::path& manifest_or_prefix);

std::filesystem::path guard_manifest_path(const std::filesystem::path& prefix);
std::filesystem::path guard_blob_path(const std::filesystem::path& prefix);

}  // namespace nullguard
