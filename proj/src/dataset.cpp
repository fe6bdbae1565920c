#include "fairpost/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "fairpost/error.hpp"
#include "fairpost/numeric.hpp"

namespace fairpost {

namespace {

std::string located(const std::string& source, std::size_t line,
                    const std::string& what) {
  return source + ":" + std::to_string(line) + ": " + what;
}

bool is_binary(int v) { return v == 0 || v == 1; }

std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}


std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

int json_binary(const nlohmann::json& v, const std::string& field) {
  if (!v.is_number_integer()) throw DataError("field '" + field + "': expected integer 0 or 1");
  const auto x = v.get<std::int64_t>();
  if (x != 0 && x != 1) {
    throw DataError("field '" + field + "': value " + std::to_string(x) +
                    " is not in {0,1}");
  }
  return static_cast<int>(x);
}

std::map<std::string, int> json_membership(const nlohmann::json& v,
                                           const std::string& field) {
  if (!v.is_object()) throw DataError("field '" + field + "': expected an object");
  std::map<std::string, int> out;
  for (const auto& [k, val] : v.items()) {
    out[k] = json_binary(val, field + "." + k);
  }
  return out;
}

SampleRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("expected a JSON object");
  SampleRecord r;
  if (!j.contains("id") || !j["id"].is_string()) {
    throw DataError("field 'id': missing or not a string");
  }
  r.id = j["id"].get<std::string>();
  if (auto it = j.find("logits"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() ||
        !(*it)[1].is_number()) {
      throw DataError("field 'logits': expected an array of 2 numbers");
    }
    r.logits = std::array<double, 2>{(*it)[0].get<double>(), (*it)[1].get<double>()};
  }
  if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw DataError("field 'score': expected a number");
    r.score = it->get<double>();
  }
  if (!j.contains("label")) throw DataError("field 'label': missing");
  r.label = json_binary(j["label"], "label");
  if (auto it = j.find("groups"); it != j.end() && !it->is_null()) {
    r.groups = json_membership(*it, "groups");
  }
  if (auto it = j.find("subgroups"); it != j.end() && !it->is_null()) {
    r.subgroups = json_membership(*it, "subgroups");
  }
  if (auto it = j.find("split"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError("field 'split': expected a string");
    r.split = parse_split_tag(it->get<std::string>());
  }
  return r;
}

}  // namespace

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::dev: return "dev";
    case SplitTag::test: return "test";
  }
  return "train";
}

SplitTag parse_split_tag(const std::string& s) {
  if (s == "train") return SplitTag::train;
  if (s == "dev") return SplitTag::dev;
  if (s == "test") return SplitTag::test;
  throw DataError("field 'split': unknown tag '" + s + "'");
}

std::string record_violation(const SampleRecord& r) {
  if (!r.logits && !r.score) return "record has neither 'logits' nor 'score'";
  if (r.score && !(*r.score >= 0.0 && *r.score <= 1.0)) {
    return "field 'score': value " + format_double(*r.score) + " outside [0,1]";
  }
  if (r.logits && (!std::isfinite((*r.logits)[0]) || !std::isfinite((*r.logits)[1]))) {
    return "field 'logits': non-finite value";
  }
  if (!is_binary(r.label)) return "field 'label': value not in {0,1}";
  for (const auto& [k, v] : r.groups) {
    if (!is_binary(v)) return "field 'groups." + k + "': value not in {0,1}";
  }
  if (r.subgroups) {
    for (const auto& [k, v] : *r.subgroups) {
      if (!is_binary(v)) return "field 'subgroups." + k + "': value not in {0,1}";
    }
  }
  return {};
}

ScoredDataset::ScoredDataset(std::vector<SampleRecord> records,
                             std::vector<std::string> attributes)
    : records_(std::move(records)), attributes_(std::move(attributes)) {
  std::unordered_set<std::string> registry(attributes_.begin(), attributes_.end());
  if (registry.size() != attributes_.size()) {
    throw DataError("duplicate attribute name in registry");
  }
  std::unordered_set<std::string> ids;
  ids.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (auto msg = record_violation(r); !msg.empty()) {
      throw DataError("record " + std::to_string(i) + " ('" + r.id + "'): " + msg);
    }
    if (!ids.insert(r.id).second) throw DataError("duplicate record id '" + r.id + "'");
    for (const auto& [k, v] : r.groups) {
      if (!registry.count(k)) {
        throw DataError("record '" + r.id + "': group '" + k +
                        "' is not a registered attribute");
      }
    }
  }
}

bool ScoredDataset::has_attribute(const std::string& name) const {
  return std::find(attributes_.begin(), attributes_.end(), name) != attributes_.end();
}

std::vector<std::string> ScoredDataset::subgroup_names() const {
  std::set<std::string> names;
  for (const auto& r : records_) {
    if (!r.subgroups) continue;
    for (const auto& [k, v] : *r.subgroups) names.insert(k);
  }
  return {names.begin(), names.end()};
}

std::vector<int> ScoredDataset::labels() const {
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.label);
  return out;
}

std::vector<double> ScoredDataset::scores() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) {
    if (!r.score) throw DataError("record '" + r.id + "' has no score");
    out.push_back(*r.score);
  }
  return out;
}

std::vector<int> ScoredDataset::membership(const std::string& attribute,
                                           MissingMembership policy) const {
  if (!has_attribute(attribute)) {
    throw InvalidArgument("attribute '" + attribute + "' is not registered");
  }
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto& r : records_) {
    auto it = r.groups.find(attribute);
    if (it != r.groups.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(policy == MissingMembership::complement ? 0 : kExcluded);
    }
  }
  return out;
}

std::vector<int> ScoredDataset::subgroup_membership(const std::string& name) const {
  std::vector<int> out;
  out.reserve(records_.size());
  bool seen = false;
  for (const auto& r : records_) {
    int v = 0;
    if (r.subgroups) {
      if (auto it = r.subgroups->find(name); it != r.subgroups->end()) {
        v = it->second;
        seen = true;
      }
    }
    out.push_back(v);
  }
  if (!seen) throw InvalidArgument("subgroup '" + name + "' does not occur in the dataset");
  return out;
}

ScoredDataset ScoredDataset::with_scores(std::span<const double> scores) const {
  if (scores.size() != records_.size()) {
    throw InvalidArgument("score vector length does not match dataset size");
  }
  auto records = records_;
  for (std::size_t i = 0; i < records.size(); ++i) records[i].score = scores[i];
  return ScoredDataset(std::move(records), attributes_);
}

ScoredDataset ScoredDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<SampleRecord> records;
  records.reserve(indices.size());
  for (auto i : indices) records.push_back(records_.at(i));
  return ScoredDataset(std::move(records), attributes_);
}

FileFormat parse_file_format(const std::string& name) {
  if (name == "jsonl") return FileFormat::jsonl;
  if (name == "csv") return FileFormat::csv;
  throw InvalidArgument("unknown file format '" + name + "'");
}

FileFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return FileFormat::jsonl;
  if (ext == ".csv") return FileFormat::csv;
  throw InvalidArgument("cannot infer file format from '" + path.string() + "'");
}

ScoredDataset read_jsonl(std::istream& in, const std::string& source) {
  std::vector<SampleRecord> records;
  std::set<std::string> attributes;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SampleRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(located(source, line_no, std::string("invalid JSON: ") + e.what()));
    } catch (const DataError& e) {
      throw DataError(located(source, line_no, e.what()));
    }
    if (auto msg = record_violation(r); !msg.empty()) {
      throw DataError(located(source, line_no, msg));
    }
    if (!ids.insert(r.id).second) {
      throw DataError(located(source, line_no, "duplicate id '" + r.id + "'"));
    }
    for (const auto& [k, v] : r.groups) attributes.insert(k);
    records.push_back(std::move(r));
  }
  return ScoredDataset(std::move(records), {attributes.begin(), attributes.end()});
}

ScoredDataset read_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty CSV file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);

  enum class Kind { id, label, score, logit0, logit1, split, group, subgroup };
  struct Column {
    Kind kind;
    std::string name;
  };
  std::vector<Column> columns;
  std::vector<std::string> attributes;
  std::set<std::string> seen;
  for (const auto& h : header) {
    if (!seen.insert(h).second) throw DataError(source + ":1: duplicate column '" + h + "'");
    if (h == "id") columns.push_back({Kind::id, h});
    else if (h == "label") columns.push_back({Kind::label, h});
    else if (h == "score") columns.push_back({Kind::score, h});
    else if (h == "logit0") columns.push_back({Kind::logit0, h});
    else if (h == "logit1") columns.push_back({Kind::logit1, h});
    else if (h == "split") columns.push_back({Kind::split, h});
    else if (h.rfind("group:", 0) == 0 && h.size() > 6) {
      columns.push_back({Kind::group, h.substr(6)});
      attributes.push_back(h.substr(6));
    } else if (h.rfind("subgroup:", 0) == 0 && h.size() > 9) {
      columns.push_back({Kind::subgroup, h.substr(9)});
    } else {
      throw DataError(source + ":1: unknown column '" + h + "'");
    }
  }
  if (!seen.count("id") || !seen.count("label")) {
    throw DataError(source + ":1: header must contain 'id' and 'label'");
  }

  std::vector<SampleRecord> records;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    try {
      cells = split_csv_line(line);
    } catch (const DataError& e) {
      throw DataError(located(source, line_no, e.what()));
    }
    if (cells.size() != columns.size()) {
      throw DataError(located(source, line_no,
                              "expected " + std::to_string(columns.size()) +
                                  " cells, found " + std::to_string(cells.size())));
    }
    SampleRecord r;
    std::optional<double> l0, l1;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& cell = cells[c];
      const auto& col = columns[c];
      auto fail = [&](const std::string& what) {
        return DataError(located(source, line_no, "field '" + header[c] + "': " + what));
      };
      if (col.kind == Kind::id) {
        r.id = cell;
        continue;
      }
      if (cell.empty()) {
        if (col.kind == Kind::label) throw fail("missing");
        continue;
      }
      switch (col.kind) {
        case Kind::label:
        case Kind::group:
        case Kind::subgroup: {
          auto v = parse_int(cell);
          if (!v || !is_binary(*v)) throw fail("value '" + cell + "' is not in {0,1}");
          if (col.kind == Kind::label) r.label = *v;
          else if (col.kind == Kind::group) r.groups[col.name] = *v;
          else {
            if (!r.subgroups) r.subgroups.emplace();
            (*r.subgroups)[col.name] = *v;
          }
          break;
        }
        case Kind::score:
        case Kind::logit0:
        case Kind::logit1: {
          auto v = parse_double(cell);
          if (!v) throw fail("value '" + cell + "' is not a number");
          if (col.kind == Kind::score) r.score = *v;
          else if (col.kind == Kind::logit0) l0 = *v;
          else l1 = *v;
          break;
        }
        case Kind::split:
          try {
            r.split = parse_split_tag(cell);
          } catch (const DataError& e) {
            throw DataError(located(source, line_no, e.what()));
          }
          break;
        case Kind::id:
          break;
      }
    }
    if (l0.has_value() != l1.has_value()) {
      throw DataError(located(source, line_no, "fields 'logit0'/'logit1': both or neither required"));
    }
    if (l0) r.logits = std::array<double, 2>{*l0, *l1};
    if (auto msg = record_violation(r); !msg.empty()) {
      throw DataError(located(source, line_no, msg));
    }
    if (!ids.insert(r.id).second) {
      throw DataError(located(source, line_no, "duplicate id '" + r.id + "'"));
    }
    records.push_back(std::move(r));
  }
  return ScoredDataset(std::move(records), std::move(attributes));
}

ScoredDataset load(const std::filesystem::path& path, FileFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return format == FileFormat::jsonl ? read_jsonl(in, path.string())
                                     : read_csv(in, path.string());
}

ScoredDataset load(const std::filesystem::path& path) {
  return load(path, format_for_path(path));
}

nlohmann::ordered_json record_to_json(const SampleRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  if (r.logits) j["logits"] = {(*r.logits)[0], (*r.logits)[1]};
  if (r.score) j["score"] = *r.score;
  j["label"] = r.label;
  j["groups"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.groups) j["groups"][k] = v;
  if (r.subgroups) {
    j["subgroups"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : *r.subgroups) j["subgroups"][k] = v;
  }
  if (r.split) j["split"] = to_string(*r.split);
  return j;
}

std::string to_jsonl(const ScoredDataset& ds) {
  std::string out;
  for (const auto& r : ds.records()) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::string to_csv(const ScoredDataset& ds) {
  const auto subgroups = ds.subgroup_names();
  std::ostringstream os;
  os << "id,label,score,logit0,logit1,split";
  for (const auto& a : ds.attributes()) os << ",group:" << a;
  for (const auto& s : subgroups) os << ",subgroup:" << s;
  os << '\n';
  for (const auto& r : ds.records()) {
    os << csv_escape(r.id) << ',' << r.label << ',';
    if (r.score) os << format_double(*r.score);
    os << ',';
    if (r.logits) os << format_double((*r.logits)[0]);
    os << ',';
    if (r.logits) os << format_double((*r.logits)[1]);
    os << ',';
    if (r.split) os << to_string(*r.split);
    for (const auto& a : ds.attributes()) {
      os << ',';
      if (auto it = r.groups.find(a); it != r.groups.end()) os << it->second;
    }
    for (const auto& s : subgroups) {
      os << ',';
      if (r.subgroups) {
        if (auto it = r.subgroups->find(s); it != r.subgroups->end()) os << it->second;
      }
    }
    os << '\n';
  }
  return os.str();
}

void save(const ScoredDataset& ds, const std::filesystem::path& path, FileFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << (format == FileFormat::jsonl ? to_jsonl(ds) : to_csv(ds));
}

void save(const ScoredDataset& ds, const std::filesystem::path& path) {
  save(ds, path, format_for_path(path));
}

std::pair<ScoredDataset, ScoredDataset> split(const ScoredDataset& ds, double fraction,
                                              std::uint64_t seed) {
  if (ds.empty()) throw InvalidArgument("cannot split an empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvalidArgument("split fraction must lie in (0,1)");
  }
  const auto n = ds.size();
  const auto k = std::min(n, round_half_up(fraction * static_cast<double>(n)));
  const auto perm = random_permutation(n, seed);
  std::vector<std::size_t> first(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> second(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {ds.subset(first), ds.subset(second)};
}

std::vector<ScoredDataset> subsample_nested(const ScoredDataset& ds,
                                            std::span<const double> fractions,
                                            std::uint64_t seed) {
  if (fractions.empty()) throw InvalidArgument("no fractions given");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) {
      throw InvalidArgument("fractions must lie in (0,1]");
    }
    if (i > 0 && !(fractions[i] > fractions[i - 1])) {
      throw InvalidArgument("fractions must be strictly ascending");
    }
  }
  const auto n = ds.size();
  const auto perm = random_permutation(n, seed);
  std::vector<ScoredDataset> out;
  out.reserve(fractions.size());
  for (double f : fractions) {
    const auto k = std::min(n, round_half_up(f * static_cast<double>(n)));
    std::vector<std::size_t> idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(idx.begin(), idx.end());
    out.push_back(ds.subset(idx));
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  cells.push_back(std::move(cur));
  return cells;
}

}  // namespace fairpost
