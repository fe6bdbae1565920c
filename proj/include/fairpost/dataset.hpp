#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace fairpost {

enum class SplitTag { train, dev, test };

std::string to_string(SplitTag tag);
SplitTag parse_split_tag(const std::string& s);

struct SampleRecord {
  std::string id;
  std::optional<std::array<double, 2>> logits;
  std::optional<double> score;  // probability of the positive (toxic) class
  int label = 0;
  std::map<std::string, int> groups;
  std::optional<std::map<std::string, int>> subgroups;
  std::optional<SplitTag> split;

  bool operator==(const SampleRecord&) const = default;
};

// Returns an empty string when the record satisfies its invariants,
// otherwise a description of the first violation.
std::string record_violation(const SampleRecord& r);

// How a record without an annotation for an attribute is counted.
enum class MissingMembership { complement, exclude };

// Membership value used for records dropped under MissingMembership::exclude.
inline constexpr int kExcluded = -1;

/// Immutable ordered collection of scored samples plus the registry of
/// group attribute names. Construction validates every record.
class ScoredDataset {
 public:
  ScoredDataset() = default;
  ScoredDataset(std::vector<SampleRecord> records,
                std::vector<std::string> attributes);

  const std::vector<SampleRecord>& records() const { return records_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const SampleRecord& operator[](std::size_t i) const { return records_[i]; }

  bool has_attribute(const std::string& name) const;
  std::vector<std::string> subgroup_names() const;

  std::vector<int> labels() const;
  // Throws DataError naming the first record without a score.
  std::vector<double> scores() const;
  // 0/1 per record; kExcluded for unannotated records under `exclude`.
  // Throws InvalidArgument for an unregistered attribute.
  std::vector<int> membership(const std::string& attribute,
                              MissingMembership policy =
                                  MissingMembership::complement) const;
  std::vector<int> subgroup_membership(const std::string& name) const;

  // Copy with the score field replaced, all other fields untouched.
  ScoredDataset with_scores(std::span<const double> scores) const;
  // Records at `indices`, in the given order.
  ScoredDataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const ScoredDataset&) const = default;

 private:
  std::vector<SampleRecord> records_;
  std::vector<std::string> attributes_;
};

enum class FileFormat { jsonl, csv };

FileFormat parse_file_format(const std::string& name);
// From the file extension (.jsonl/.json -> jsonl, .csv -> csv).
FileFormat format_for_path(const std::filesystem::path& path);

ScoredDataset read_jsonl(std::istream& in, const std::string& source = "<stream>");
ScoredDataset read_csv(std::istream& in, const std::string& source = "<stream>");
ScoredDataset load(const std::filesystem::path& path, FileFormat format);
ScoredDataset load(const std::filesystem::path& path);

// Canonical serializations: fixed key/column order, shortest round-trip
// number formatting.
std::string to_jsonl(const ScoredDataset& ds);
// One CSV line into cells; double quotes escape commas and quotes.
std::vector<std::string> split_csv_line(const std::string& line);
std::string to_csv(const ScoredDataset& ds);
void save(const ScoredDataset& ds, const std::filesystem::path& path,
          FileFormat format);
void save(const ScoredDataset& ds, const std::filesystem::path& path);

nlohmann::ordered_json record_to_json(const SampleRecord& r);

// Deterministic partition. The first part receives round_half_up(fraction*n)
// records; both parts keep file order.
std::pair<ScoredDataset, ScoredDataset> split(const ScoredDataset& ds,
                                              double fraction,
                                              std::uint64_t seed);

// Nested subsamples: result[i] is a subset of result[j] for i < j.
std::vector<ScoredDataset> subsample_nested(const ScoredDataset& ds,
                                            std::span<const double> fractions,
                                            std::uint64_t seed);

struct BetaShape {
  double alpha = 1.0;
  double beta = 1.0;
};

struct SubgroupSpec {
  std::string name;
  double rate = 0.5;  // probability a sensitive-group member is tagged
};

struct SyntheticConfig {
  std::size_t n = 10000;
  double positive_rate = 0.08;
  // Jigsaw train split: 50748 of 1443899 samples mention religion.
  double group_rate = 50748.0 / 1443899.0;
  std::string attribute = "religion";
  BetaShape negative_shape{0.6, 6.0};
  BetaShape positive_shape{6.0, 0.6};
  // (delta_tpr, delta_fpr) added to the sensitive group at threshold 0.5.
  std::array<double, 2> group_bias{0.0, 0.0};
  std::vector<SubgroupSpec> subgroups;
  bool emit_logits = true;
  std::uint64_t seed = 0;

  void validate() const;
};

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticConfig& cfg);

ScoredDataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace fairpost
