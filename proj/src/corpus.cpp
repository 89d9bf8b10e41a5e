#include "nullguard/corpus.hpp"

#include "nullguard/error.hpp"
#include "nullguard/io.hpp"
#include "nullguard/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace nullguard {

using nlohmann::json;

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "unknown";
}

std::optional<Split> parse_split(std::string_view name) noexcept {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  return std::nullopt;
}

bool operator==(const TweetRecord& a, const TweetRecord& b) {
  if (a.tweet_id != b.tweet_id || a.tokens != b.tokens || a.igr != b.igr || a.affect != b.affect ||
      a.split != b.split || a.sidecar != b.sidecar) {
    return false;
  }
  if (a.specificity.has_value() != b.specificity.has_value()) return false;
  if (a.specificity && std::bit_cast<std::uint32_t>(*a.specificity) != std::bit_cast<std::uint32_t>(*b.specificity)) {
    return false;
  }
  if (a.embeddings.rows() != b.embeddings.rows() || a.embeddings.cols() != b.embeddings.cols()) return false;
  return std::memcmp(a.embeddings.data(), b.embeddings.data(),
                     sizeof(float) * static_cast<std::size_t>(a.embeddings.size())) == 0;
}

std::vector<TweetRecord> select_splits(std::span<const TweetRecord> records,
                                       std::initializer_list<Split> splits) {
  std::vector<TweetRecord> out;
  for (const TweetRecord& r : records) {
    for (Split s : splits) {
      if (r.split == s) {
        out.push_back(r);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::optional<Feeling> parse_feeling(std::string_view s) noexcept {
  if (s == "warmly") return Feeling::warmly;
  if (s == "coldly") return Feeling::coldly;
  if (s == "neutral") return Feeling::neutral;
  if (s == "mixed") return Feeling::mixed;
  return std::nullopt;
}

std::optional<Judgment> parse_judgment(std::string_view s) noexcept {
  if (s == "approval") return Judgment::approval;
  if (s == "disapproval") return Judgment::disapproval;
  if (s == "neutral") return Judgment::neutral;
  if (s == "mixed") return Judgment::mixed;
  return std::nullopt;
}

namespace {

template <typename Answer>
Answer majority_of(const std::array<Answer, 3>& a) noexcept {
  if (a[0] == a[1] || a[0] == a[2]) return a[0];
  if (a[1] == a[2]) return a[1];
  return Answer::mixed;  // 1/1/1 split
}

}  // namespace

Feeling majority(const std::array<Feeling, 3>& answers) noexcept { return majority_of(answers); }
Judgment majority(const std::array<Judgment, 3>& answers) noexcept { return majority_of(answers); }

Affect derive_affect(const AnnotationRecord& annotation) noexcept {
  const bool warm = majority(annotation.feeling) == Feeling::warmly;
  const bool approving = majority(annotation.judgment) == Judgment::approval;
  return (warm || approving) ? Affect::positive : Affect::negative;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::invalid_record, where + ": " + e.what());
    }
    AnnotationRecord rec;
    rec.tweet_id = j.at("tweet_id").get<std::uint64_t>();
    const auto& feeling = j.at("feeling");
    const auto& judgment = j.at("judgment");
    if (feeling.size() != 3 || judgment.size() != 3) {
      throw Error(Errc::invalid_record, where + ": exactly 3 answers per question are required");
    }
    for (std::size_t i = 0; i < 3; ++i) {
      auto f = parse_feeling(feeling[i].get<std::string>());
      auto g = parse_judgment(judgment[i].get<std::string>());
      if (!f || !g) throw Error(Errc::invalid_record, where + ": unknown answer");
      rec.feeling[i] = *f;
      rec.judgment[i] = *g;
    }
    out.push_back(rec);
  }
  return out;
}

// ---------------------------------------------------------------------------

SpecificityBin binarize_specificity(double score) {
  if (!(score >= 1.0 && score <= 5.0)) {
    throw Error(Errc::invalid_argument, "specificity score " + std::to_string(score) + " outside [1, 5]");
  }
  if (score > 4.0) return SpecificityBin::high;
  if (score < 3.0) return SpecificityBin::low;
  return SpecificityBin::excluded;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> sample_training_tokens(const TweetRecord& record, std::uint64_t seed,
                                                std::size_t count) {
  Rng rng(seed);
  return rng.sample_indices(record.n_tokens(), count);
}

std::size_t intervention_token_count(std::size_t n_tokens, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(Errc::invalid_argument, "token fraction must lie in (0, 1]");
  }
  // Small slack so products like 0.3 * 5 that should be exactly .5 round up.
  const double scaled = fraction * static_cast<double>(n_tokens);
  auto count = static_cast<std::size_t>(std::floor(scaled + 0.5 + 1e-9));
  count = std::max<std::size_t>(count, 1);
  return std::min(count, n_tokens);
}

std::vector<std::size_t> sample_intervention_tokens(const TweetRecord& record, double fraction,
                                                    std::uint64_t seed) {
  const std::size_t count = intervention_token_count(record.n_tokens(), fraction);
  Rng rng(seed);
  return rng.sample_indices(record.n_tokens(), count);
}

// ---------------------------------------------------------------------------

AffectSplitCounts count_affect_by_split(std::span<const TweetRecord> records) {
  AffectSplitCounts counts;
  for (const TweetRecord& r : records) {
    const auto s = static_cast<std::size_t>(r.split);
    if (r.affect == Affect::positive) ++counts.positive[s];
    if (r.affect == Affect::negative) ++counts.negative[s];
  }
  return counts;
}

json to_json(const AffectSplitCounts& counts) {
  json j = json::object();
  for (Split s : {Split::train, Split::dev, Split::test}) {
    const auto i = static_cast<std::size_t>(s);
    j[std::string(to_string(s))] = {{"positive", counts.positive[i]}, {"negative", counts.negative[i]}};
  }
  return j;
}

AffectSplitCounts affect_split_counts_from_json(const json& j) {
  AffectSplitCounts counts;
  for (Split s : {Split::train, Split::dev, Split::test}) {
    const auto i = static_cast<std::size_t>(s);
    const auto& entry = j.at(std::string(to_string(s)));
    counts.positive[i] = entry.at("positive").get<std::size_t>();
    counts.negative[i] = entry.at("negative").get<std::size_t>();
  }
  return counts;
}

std::vector<std::string> verify_split_counts(std::span<const TweetRecord> records,
                                             const AffectSplitCounts& declared) {
  const AffectSplitCounts observed = count_affect_by_split(records);
  std::vector<std::string> problems;
  for (Split s : {Split::train, Split::dev, Split::test}) {
    const auto i = static_cast<std::size_t>(s);
    if (observed.positive[i] != declared.positive[i]) {
      problems.push_back(std::string(to_string(s)) + " positive: declared " + std::to_string(declared.positive[i]) +
                         ", observed " + std::to_string(observed.positive[i]));
    }
    if (observed.negative[i] != declared.negative[i]) {
      problems.push_back(std::string(to_string(s)) + " negative: declared " + std::to_string(declared.negative[i]) +
                         ", observed " + std::to_string(observed.negative[i]));
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kRecordHeaderBytes = 8 + 1 + 1 + 1 + 4 + 4;

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

 private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const noexcept { return in_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw Error(Errc::truncated, std::string("truncated payload reading ") + what);
  }
  std::uint8_t u8() {
    need(1, "byte");
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

constexpr float kUnknownSpecificity = std::bit_cast<float>(0x7fc00000u);

void validate_record(const TweetRecord& r, std::size_t dim, std::size_t index) {
  const std::string where = "record " + std::to_string(index) + " (tweet " + std::to_string(r.tweet_id) + ")";
  if (r.n_tokens() == 0) throw Error(Errc::invalid_record, where + ": no tokens");
  if (static_cast<std::size_t>(r.dim()) != dim) {
    throw Error(Errc::dimension_mismatch, where + ": embedding dimension " + std::to_string(r.dim()) +
                                              " differs from dataset dimension " + std::to_string(dim));
  }
  if (r.specificity && !(*r.specificity >= 1.0f && *r.specificity <= 5.0f)) {
    throw Error(Errc::invalid_record, where + ": specificity outside [1, 5]");
  }
  if (!r.tokens.empty() && r.tokens.size() != r.n_tokens()) {
    throw Error(Errc::invalid_record, where + ": token list does not match embedding rows");
  }
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& dataset) {
  std::filesystem::path p = dataset;
  p += ".jsonl";
  return p;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  std::size_t total = kHeaderBytes;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    validate_record(dataset.records[i], dataset.dim, i);
    total += kRecordHeaderBytes + 4 * static_cast<std::size_t>(dataset.records[i].embeddings.size());
  }
  if (dataset.dim > std::numeric_limits<std::uint32_t>::max() ||
      dataset.records.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(Errc::invalid_argument, "dataset too large for the IGPB format");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(total);
  bytes.insert(bytes.end(), kDatasetMagic.begin(), kDatasetMagic.end());
  ByteWriter w(bytes);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(dataset.dim));
  w.u32(static_cast<std::uint32_t>(dataset.records.size()));
  for (const TweetRecord& r : dataset.records) {
    w.u64(r.tweet_id);
    w.u8(static_cast<std::uint8_t>(r.split));
    w.u8(static_cast<std::uint8_t>(r.igr));
    w.u8(static_cast<std::uint8_t>(static_cast<std::int8_t>(r.affect)));
    w.f32(r.specificity ? *r.specificity : kUnknownSpecificity);
    w.u32(static_cast<std::uint32_t>(r.n_tokens()));
    const float* data = r.embeddings.data();
    for (Eigen::Index i = 0; i < r.embeddings.size(); ++i) w.f32(data[i]);
  }
  return bytes;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  const std::size_t seen = std::min(bytes.size(), kDatasetMagic.size());
  if (std::memcmp(bytes.data(), kDatasetMagic.data(), seen) != 0) {
    throw Error(Errc::bad_magic, "bad magic: not an IGPB dataset");
  }
  // A matching prefix shorter than the magic is a cut-off file.
  if (seen < kDatasetMagic.size()) throw Error(Errc::truncated, "truncated payload reading magic");
  ByteReader r(bytes.subspan(kDatasetMagic.size()));
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw Error(Errc::version_mismatch, "version mismatch: file has version " + std::to_string(version) +
                                            ", expected " + std::to_string(kDatasetVersion));
  }
  Dataset out;
  out.dim = r.u32();
  const std::uint32_t n_tweets = r.u32();
  if (n_tweets > 0 && out.dim == 0) throw Error(Errc::invalid_record, "zero embedding dimension");
  // Each record needs at least its fixed header, so this bounds the reservation.
  if (static_cast<std::uint64_t>(n_tweets) * kRecordHeaderBytes > r.remaining()) {
    throw Error(Errc::truncated, "truncated payload: fewer bytes than declared tweets");
  }
  out.records.reserve(n_tweets);
  for (std::uint32_t t = 0; t < n_tweets; ++t) {
    TweetRecord rec;
    rec.tweet_id = r.u64();
    const std::uint8_t split = r.u8();
    const std::uint8_t igr = r.u8();
    const auto affect = static_cast<std::int8_t>(r.u8());
    const float spec = r.f32();
    const std::uint32_t n_tokens = r.u32();
    const std::string where = "record " + std::to_string(t);
    if (split > 2) throw Error(Errc::invalid_record, where + ": bad split code");
    if (igr != 0 && igr != 1 && igr != 255) throw Error(Errc::invalid_record, where + ": bad igr code");
    if (affect != 1 && affect != -1 && affect != 0) throw Error(Errc::invalid_record, where + ": bad affect code");
    rec.split = static_cast<Split>(split);
    rec.igr = static_cast<Igr>(igr);
    rec.affect = static_cast<Affect>(affect);
    if (!std::isnan(spec)) rec.specificity = spec;
    const std::uint64_t n_values = static_cast<std::uint64_t>(n_tokens) * out.dim;
    r.need(4 * n_values, "embeddings");
    rec.embeddings.resize(n_tokens, static_cast<Eigen::Index>(out.dim));
    float* data = rec.embeddings.data();
    for (std::uint64_t i = 0; i < n_values; ++i) data[i] = r.f32();
    validate_record(rec, out.dim, t);
    out.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw Error(Errc::invalid_record, "trailing bytes after last record");
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_dataset(dataset);
  std::string sidecar;
  for (const TweetRecord& r : dataset.records) {
    json line = r.sidecar.is_object() ? r.sidecar : json::object();
    line["tweet_id"] = r.tweet_id;
    line["tokens"] = r.tokens;
    sidecar += line.dump();
    sidecar += '\n';
  }
  write_file_atomic(sidecar_path(path), sidecar);
  write_file_atomic(path, bytes);
}

Dataset load_dataset(const std::filesystem::path& path) {
  Dataset dataset = decode_dataset(read_file(path));
  const std::filesystem::path side = sidecar_path(path);
  if (!std::filesystem::exists(side)) return dataset;

  std::unordered_map<std::uint64_t, json> lines;
  std::ifstream in(side);
  if (!in) throw Error(Errc::io, "cannot open " + side.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::invalid_record, side.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("tweet_id")) {
      throw Error(Errc::invalid_record, side.string() + ":" + std::to_string(line_no) + ": missing tweet_id");
    }
    const auto id = j.at("tweet_id").get<std::uint64_t>();
    lines.insert_or_assign(id, std::move(j));
  }
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    TweetRecord& rec = dataset.records[i];
    auto it = lines.find(rec.tweet_id);
    if (it == lines.end()) continue;
    json j = it->second;
    if (j.contains("tokens")) rec.tokens = j.at("tokens").get<std::vector<std::string>>();
    j.erase("tokens");
    j.erase("tweet_id");
    rec.sidecar = std::move(j);
    validate_record(rec, dataset.dim, i);
  }
  return dataset;
}

}  // namespace nullguard
