#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nullguard {

enum class Split : std::uint8_t { train = 0, dev = 1, test = 2 };
enum class Igr : std::uint8_t { in = 0, out = 1, unknown = 255 };
enum class Affect : std::int8_t { negative = -1, unknown = 0, positive = 1 };
enum class SpecificityBin { high, low, excluded };

std::string_view to_string(Split split) noexcept;
std::optional<Split> parse_split(std::string_view name) noexcept;

/// Token embeddings of one tweet, one row per token.
using Embeddings = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TweetRecord {
  std::uint64_t tweet_id = 0;
  /// Either empty (no sidecar) or one entry per embedding row.
  std::vector<std::string> tokens;
  Embeddings embeddings;
  Igr igr = Igr::unknown;
  Affect affect = Affect::unknown;
  /// In [1, 5] when present.
  std::optional<float> specificity;
  Split split = Split::train;
  /// Extra per-tweet sidecar fields (layer index, intervention settings, exporter flags).
  nlohmann::json sidecar = nlohmann::json::object();

  std::size_t n_tokens() const noexcept { return static_cast<std::size_t>(embeddings.rows()); }
  Eigen::Index dim() const noexcept { return embeddings.cols(); }

  friend bool operator==(const TweetRecord&, const TweetRecord&);
};

struct Dataset {
  std::size_t dim = 0;
  std::vector<TweetRecord> records;
};

/// Records of `dataset` whose split is in `splits`, preserving order.
std::vector<TweetRecord> select_splits(std::span<const TweetRecord> records,
                                       std::initializer_list<Split> splits);

// ---------------------------------------------------------------------------
// Annotation aggregation

enum class Feeling { warmly, coldly, neutral, mixed };
enum class Judgment { approval, disapproval, neutral, mixed };

std::optional<Feeling> parse_feeling(std::string_view s) noexcept;
std::optional<Judgment> parse_judgment(std::string_view s) noexcept;

/// Three annotators' answers to the two affect questions for one tweet.
struct AnnotationRecord {
  std::uint64_t tweet_id = 0;
  std::array<Feeling, 3> feeling{};
  std::array<Judgment, 3> judgment{};
};

/// Answer given by at least two of three annotators, otherwise `mixed`.
Feeling majority(const std::array<Feeling, 3>& answers) noexcept;
Judgment majority(const std::array<Judgment, 3>& answers) noexcept;

/// +1 iff the aggregated feeling is `warmly` or the aggregated judgment is
/// `approval`; -1 otherwise.
Affect derive_affect(const AnnotationRecord& annotation) noexcept;

/// Reads a JSON-lines annotation file: {"tweet_id":..,"feeling":[3 strings],"judgment":[3 strings]}.
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Specificity

/// HIGH iff score > 4, LOW iff score < 3, EXCLUDED otherwise. Throws outside [1, 5].
SpecificityBin binarize_specificity(double score);

// ---------------------------------------------------------------------------
// Token sampling

inline constexpr std::size_t kTrainingTokensPerTweet = 3;

/// min(count, n_tokens) distinct token indices, sorted, deterministic in `seed`.
std::vector<std::size_t> sample_training_tokens(const TweetRecord& record, std::uint64_t seed,
                                                std::size_t count = kTrainingTokensPerTweet);

/// Number of tokens altered for a tweet: max(1, round-half-up(fraction * n_tokens)).
std::size_t intervention_token_count(std::size_t n_tokens, double fraction);

std::vector<std::size_t> sample_intervention_tokens(const TweetRecord& record, double fraction,
                                                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Split statistics

/// Positive / negative affect counts per split, indexed by Split.
struct AffectSplitCounts {
  std::array<std::size_t, 3> positive{};
  std::array<std::size_t, 3> negative{};

  friend bool operator==(const AffectSplitCounts&, const AffectSplitCounts&) = default;
};

AffectSplitCounts count_affect_by_split(std::span<const TweetRecord> records);

nlohmann::json to_json(const AffectSplitCounts& counts);
AffectSplitCounts affect_split_counts_from_json(const nlohmann::json& j);

/// Human-readable mismatches between observed and declared counts; empty when they agree.
std::vector<std::string> verify_split_counts(std::span<const TweetRecord> records,
                                             const AffectSplitCounts& declared);

// ---------------------------------------------------------------------------
// IGPB dataset files
//
// Little-endian layout:
//   "IGPB" | u32 version=1 | u32 d | u32 n_tweets
//   per tweet: u64 tweet_id | u8 split | u8 igr | i8 affect | f32 specificity (NaN = unknown)
//              | u32 n_tokens | n_tokens*d f32 row-major
// Token strings and extra fields live in the JSON-lines sidecar `<path>.jsonl`.

inline constexpr std::array<char, 4> kDatasetMagic{'I', 'G', 'P', 'B'};
inline constexpr std::uint32_t kDatasetVersion = 1;

std::filesystem::path sidecar_path(const std::filesystem::path& dataset);

/// Encodes only the binary payload.
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);

/// Decodes the binary payload; throws Error with bad_magic / version_mismatch /
/// truncated / invalid_record.
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

/// Writes the binary file and its sidecar atomically (temp file + rename).
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Reads the binary file and, when present, the sidecar.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace nullguard
