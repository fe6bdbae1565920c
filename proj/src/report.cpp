#include "fairpost/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fairpost/error.hpp"
#include "fairpost/numeric.hpp"

namespace fairpost::report {

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

constexpr const char* kEoPrefix = "eo:";

}  // namespace

std::vector<SubgroupRow> subgroup_report(const ScoredDataset& test,
                                         std::span<const int> baseline_preds,
                                         std::span<const int> mitigated_preds,
                                         const std::string& attribute, std::size_t min_samples,
                                         EoMode mode) {
  if (baseline_preds.size() != test.size() || mitigated_preds.size() != test.size()) {
    throw InvalidArgument("subgroup report: prediction count differs from test size");
  }
  const auto coarse = GroupedLabels::from(test, attribute);
  std::vector<SubgroupRow> rows;
  SubgroupRow top;
  top.name = attribute;
  top.n_test = static_cast<std::size_t>(std::count(coarse.membership.begin(), coarse.membership.end(), 1));
  top.eo_before = equalized_odds(coarse, baseline_preds, mode);
  top.eo_after = equalized_odds(coarse, mitigated_preds, mode);
  rows.push_back(top);

  for (const auto& name : test.subgroup_names()) {  // already name-sorted
    const auto g = GroupedLabels::from_subgroup(test, name);
    std::size_t n = 0;
    bool inside = true;
    for (std::size_t i = 0; i < g.membership.size(); ++i) {
      if (g.membership[i] != 1) continue;
      ++n;
      inside = inside && coarse.membership[i] == 1;
    }
    if (!inside || n < min_samples) continue;
    SubgroupRow row;
    row.name = name;
    row.n_test = n;
    row.eo_before = equalized_odds(g, baseline_preds, mode);
    row.eo_after = equalized_odds(g, mitigated_preds, mode);
    rows.push_back(row);
  }
  if (rows.size() == 1) {
    throw InvalidArgument("no subgroup of '" + attribute + "' has at least " +
                          std::to_string(min_samples) + " test samples");
  }
  return rows;
}

std::string to_csv(const std::vector<SubgroupRow>& rows) {
  std::string out = "name,n_test,eo_before,eo_after\n";
  for (const auto& r : rows) {
    out += csv_cell(r.name) + "," + std::to_string(r.n_test) + "," + format_double(r.eo_before) +
           "," + format_double(r.eo_after) + "\n";
  }
  return out;
}

bool is_degenerate(const RunSummary& r) {
  return r.balanced_accuracy <= kDegenerateBalancedAccuracy;
}

MeanSe mean_se(std::span<const double> xs) {
  if (xs.size() < 2) throw InvalidArgument("standard error needs at least two values");
  // Identical values: report them exactly rather than rounding noise.
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs[0]; })) return {xs[0], 0.0};
  const double k = static_cast<double>(xs.size());
  const double mean = compensated_sum(xs) / k;
  CompensatedSum ss;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss.value() / (k - 1.0)) / std::sqrt(k)};
}

std::vector<SeedCell> seed_summary(const std::vector<RunSummary>& runs) {
  std::map<std::pair<std::string, double>, std::vector<const RunSummary*>> cells;
  for (const auto& r : runs) cells[{r.model, r.fraction}].push_back(&r);
  if (cells.empty()) throw InvalidArgument("seed summary: no runs");

  std::vector<SeedCell> out;
  for (const auto& [key, members] : cells) {
    SeedCell c;
    c.model = key.first;
    c.fraction = key.second;
    c.runs = members.size();
    std::vector<const RunSummary*> used;
    for (const auto* r : members) {
      if (!is_degenerate(*r)) used.push_back(r);
    }
    c.excluded = members.size() - used.size();
    const std::string cell_name = "'" + c.model + "' at fraction " + format_double(c.fraction);
    if (used.size() < 2) {
      throw InvalidArgument("seed summary: cell " + cell_name + " has " +
                            std::to_string(used.size()) + " usable runs (" +
                            std::to_string(c.excluded) + " degenerate); need 2");
    }
    std::vector<double> acc, bacc;
    std::map<std::string, std::vector<double>> eo;
    for (const auto* r : used) {
      acc.push_back(r->accuracy);
      bacc.push_back(r->balanced_accuracy);
      for (const auto& [attr, v] : r->eo) eo[attr].push_back(v);
    }
    c.accuracy = mean_se(acc);
    c.balanced_accuracy = mean_se(bacc);
    for (const auto& [attr, vs] : eo) {
      if (vs.size() < 2) {
        throw InvalidArgument("seed summary: cell " + cell_name + " has EO for '" + attr +
                              "' in fewer than two usable runs");
      }
      c.eo[attr] = mean_se(vs);
      const auto [lo, hi] = std::minmax_element(vs.begin(), vs.end());
      c.eo_spread[attr] = *hi - *lo;
      c.spread_flag = c.spread_flag || *hi - *lo >= kSpreadFlag;
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string to_csv(const std::vector<SeedCell>& cells) {
  std::set<std::string> attrs;
  for (const auto& c : cells) {
    for (const auto& [a, _] : c.eo) attrs.insert(a);
  }
  std::string out =
      "model,fraction,runs,excluded,accuracy_mean,accuracy_se,balanced_accuracy_mean,"
      "balanced_accuracy_se";
  for (const auto& a : attrs) {
    const std::string p = kEoPrefix + a;
    out += "," + csv_cell(p + "_mean") + "," + csv_cell(p + "_se") + "," + csv_cell(p + "_spread");
  }
  out += ",spread_flag\n";
  for (const auto& c : cells) {
    out += csv_cell(c.model) + "," + format_double(c.fraction) + "," + std::to_string(c.runs) + "," +
           std::to_string(c.excluded) + "," + format_double(c.accuracy.mean) + "," +
           format_double(c.accuracy.se) + "," + format_double(c.balanced_accuracy.mean) + "," +
           format_double(c.balanced_accuracy.se);
    for (const auto& a : attrs) {
      const auto it = c.eo.find(a);
      if (it == c.eo.end()) {
        out += ",,,";
      } else {
        out += "," + format_double(it->second.mean) + "," + format_double(it->second.se) + "," +
               format_double(c.eo_spread.at(a));
      }
    }
    out += std::string(",") + (c.spread_flag ? "1" : "0") + "\n";
  }
  return out;
}

double run_field(const RunSummary& r, const std::string& field) {
  if (field == "accuracy") return r.accuracy;
  if (field == "balanced_accuracy") return r.balanced_accuracy;
  if (field == "fraction") return r.fraction;
  if (field == "seed") return static_cast<double>(r.seed);
  if (field.rfind(kEoPrefix, 0) == 0) {
    const auto it = r.eo.find(field.substr(3));
    if (it != r.eo.end()) return it->second;
  } else if (const auto it = r.extra.find(field); it != r.extra.end()) {
    return it->second;
  }
  throw InvalidArgument("run (" + r.model + ", seed " + std::to_string(r.seed) +
                        ") has no field '" + field + "'");
}

CorrelationResult correlation_report(const std::vector<RunSummary>& runs,
                                     const std::string& x_field, const std::string& y_field) {
  if (runs.size() < 3) throw InvalidArgument("correlation needs at least three runs");
  std::vector<double> xs, ys;
  for (const auto& r : runs) {
    xs.push_back(run_field(r, x_field));
    ys.push_back(run_field(r, y_field));
  }
  const auto p = pearson(xs, ys);
  return {x_field, y_field, p.rho, p.p_value, p.n};
}

std::string to_csv(const CorrelationResult& c) {
  return "x_field,y_field,rho,p_value,n\n" + csv_cell(c.x_field) + "," + csv_cell(c.y_field) + "," +
         format_double(c.rho) + "," + format_double(c.p_value) + "," + std::to_string(c.n) + "\n";
}

std::vector<RunSummary> read_runs_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  const auto where = [&](const std::string& what) {
    return source + ":" + std::to_string(lineno) + ": " + what;
  };
  if (!std::getline(in, line)) throw DataError(source + ": empty runs file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  for (const char* need : {"model", "seed", "fraction", "accuracy", "balanced_accuracy"}) {
    if (std::find(header.begin(), header.end(), need) == header.end()) {
      throw DataError(where(std::string("missing column '") + need + "'"));
    }
  }
  std::vector<RunSummary> runs;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(where("expected " + std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size())));
    }
    RunSummary r;
    for (std::size_t k = 0; k < header.size(); ++k) {
      const auto& col = header[k];
      const auto& cell = cells[k];
      if (col == "model") {
        r.model = cell;
        continue;
      }
      if (cell.empty()) {
        if (col == "seed" || col == "fraction" || col == "accuracy" || col == "balanced_accuracy") {
          throw DataError(where("field '" + col + "': empty"));
        }
        continue;
      }
      const auto v = parse_double(cell);
      if (!v) throw DataError(where("field '" + col + "': not a number: '" + cell + "'"));
      if (col == "seed") {
        if (*v != std::floor(*v)) throw DataError(where("field 'seed': not an integer"));
        r.seed = static_cast<std::int64_t>(*v);
      } else if (col == "fraction") {
        r.fraction = *v;
      } else if (col == "accuracy") {
        r.accuracy = *v;
      } else if (col == "balanced_accuracy") {
        r.balanced_accuracy = *v;
      } else if (col.rfind(kEoPrefix, 0) == 0) {
        r.eo[col.substr(3)] = *v;
      } else {
        r.extra[col] = *v;
      }
    }
    runs.push_back(std::move(r));
  }
  return runs;
}

std::string runs_to_csv(const std::vector<RunSummary>& runs) {
  std::set<std::string> attrs, extras;
  for (const auto& r : runs) {
    for (const auto& [a, _] : r.eo) attrs.insert(a);
    for (const auto& [e, _] : r.extra) extras.insert(e);
  }
  std::string out = "model,seed,fraction,accuracy,balanced_accuracy";
  for (const auto& a : attrs) out += "," + csv_cell(kEoPrefix + a);
  for (const auto& e : extras) out += "," + csv_cell(e);
  out += "\n";
  for (const auto& r : runs) {
    out += csv_cell(r.model) + "," + std::to_string(r.seed) + "," + format_double(r.fraction) + "," +
           format_double(r.accuracy) + "," + format_double(r.balanced_accuracy);
    for (const auto& a : attrs) {
      const auto it = r.eo.find(a);
      out += "," + (it == r.eo.end() ? std::string() : format_double(it->second));
    }
    for (const auto& e : extras) {
      const auto it = r.extra.find(e);
      out += "," + (it == r.extra.end() ? std::string() : format_double(it->second));
    }
    out += "\n";
  }
  return out;
}

}  // namespace fairpost::report
