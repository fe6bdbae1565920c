// fairpost: command-line front end for the post-processing toolkit.

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairpost/calibrate.hpp"
#include "fairpost/dataset.hpp"
#include "fairpost/error.hpp"
#include "fairpost/fst.hpp"
#include "fairpost/hps.hpp"
#include "fairpost/metrics.hpp"
#include "fairpost/numeric.hpp"
#include "fairpost/report.hpp"
#include "fairpost/tuning.hpp"
#include "json.hpp"

namespace fp = fairpost;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fp::Error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fp::Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw fp::Error("write to '" + path + "' failed");
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw fp::DataError(path + ": " + e.what());
  }
}

std::string digest_of(const std::string& path) { return fp::hex_digest(read_text(path)); }

// Side file next to a CSV report with the digests of everything it was
// computed from.
void write_meta(const std::string& out, const std::string& kind, const std::vector<std::string>& inputs,
                json params) {
  if (out.empty() || out == "-") return;
  json files = json::array();
  for (const auto& p : inputs) files.push_back({{"path", p}, {"fnv1a64", digest_of(p)}});
  write_json(out + ".meta.json", {{"report", kind}, {"inputs", files}, {"parameters", std::move(params)}});
}

std::vector<int> threshold_dataset(const fp::ScoredDataset& ds, double t) {
  return fp::threshold_predictions(ds.scores(), t);
}

// Prediction files are JSONL lines {"id": ..., "prediction": 0|1}.
bool looks_like_predictions(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      return json::parse(line).contains("prediction");
    } catch (const json::parse_error&) {
      return false;
    }
  }
  return false;
}

std::vector<int> read_predictions(const std::string& path, const fp::ScoredDataset& align) {
  std::ifstream in(path);
  if (!in) throw fp::Error("cannot open '" + path + "'");
  std::map<std::string, int> by_id;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const int p = j.at("prediction").get<int>();
      if (p != 0 && p != 1) throw fp::DataError("prediction must be 0 or 1");
      by_id[j.at("id").get<std::string>()] = p;
    } catch (const json::exception& e) {
      throw fp::DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<int> out;
  out.reserve(align.size());
  for (const auto& r : align.records()) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) throw fp::DataError(path + ": no prediction for id '" + r.id + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<fp::report::RunSummary> read_runs(const std::vector<std::string>& paths) {
  std::vector<fp::report::RunSummary> runs;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw fp::Error("cannot open '" + p + "'");
    auto more = fp::report::read_runs_csv(in, p);
    runs.insert(runs.end(), more.begin(), more.end());
  }
  return runs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness post-processing for binary classifier scores"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scored dataset");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_n;
  synth->add_option("--config", synth_config, "JSON generator config")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output .jsonl or .csv")->required();
  synth->add_option("--seed", synth_seed, "Overrides the config seed");
  synth->add_option("--n", synth_n, "Overrides the config sample count");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Accuracy and group fairness of thresholded scores");
  std::string m_input, m_attr, m_mode = "complement", m_out = "-", m_missing = "complement";
  double m_threshold = 0.5;
  metrics->add_option("--input", m_input)->required()->check(CLI::ExistingFile);
  metrics->add_option("--attribute", m_attr)->required();
  metrics->add_option("--threshold", m_threshold)->check(CLI::Range(0.0, 1.0));
  metrics->add_option("--eo-mode", m_mode)->check(CLI::IsMember({"complement", "overall"}));
  metrics->add_option("--missing", m_missing, "Unannotated records: complement or exclude")
      ->check(CLI::IsMember({"complement", "exclude"}));
  metrics->add_option("--out", m_out);

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "Fit a calibrator on logits and rescore");
  std::string c_input, c_method = "logistic", c_out, c_model, c_use_model;
  calib->add_option("--input", c_input)->required()->check(CLI::ExistingFile);
  calib->add_option("--method", c_method)->check(CLI::IsMember({"logistic", "linear-clip", "identity"}));
  calib->add_option("--out", c_out, "Rescored dataset");
  calib->add_option("--model", c_model, "Where to write the fitted calibrator");
  calib->add_option("--use-model", c_use_model, "Apply a saved calibrator instead of fitting")
      ->check(CLI::ExistingFile);

  // fst
  auto* fst = app.add_subcommand("fst", "Fair score transformer");
  fst->require_subcommand(1);
  auto* fst_fit = fst->add_subcommand("fit", "Fit on calibrated scores");
  std::string f_input, f_attr, f_solver = "pgd", f_model, f_mode = "complement";
  double f_eps = 0.05;
  int f_iters = fp::fst::Options{}.max_iters;
  fst_fit->add_option("--input", f_input)->required()->check(CLI::ExistingFile);
  fst_fit->add_option("--attribute", f_attr)->required();
  fst_fit->add_option("--epsilon", f_eps)->check(CLI::NonNegativeNumber);
  fst_fit->add_option("--solver", f_solver)->check(CLI::IsMember({"pgd", "admm"}));
  fst_fit->add_option("--eo-mode", f_mode)->check(CLI::IsMember({"complement", "overall"}));
  fst_fit->add_option("--max-iters", f_iters)->check(CLI::PositiveNumber);
  fst_fit->add_option("--model", f_model)->required();
  auto* fst_apply = fst->add_subcommand("apply", "Transform scores with a fitted model");
  std::string fa_model, fa_input, fa_out;
  fst_apply->add_option("--model", fa_model)->required()->check(CLI::ExistingFile);
  fst_apply->add_option("--input", fa_input)->required()->check(CLI::ExistingFile);
  fst_apply->add_option("--out", fa_out)->required();

  // hps
  auto* hps = app.add_subcommand("hps", "Randomized equalized-odds post-processing");
  hps->require_subcommand(1);
  auto* hps_fit = hps->add_subcommand("fit", "Solve the mixing LP on thresholded predictions");
  std::string h_input, h_attr, h_model, h_mode = "complement";
  double h_threshold = 0.5;
  hps_fit->add_option("--input", h_input)->required()->check(CLI::ExistingFile);
  hps_fit->add_option("--attribute", h_attr)->required();
  hps_fit->add_option("--threshold", h_threshold)->check(CLI::Range(0.0, 1.0));
  hps_fit->add_option("--eo-mode", h_mode)->check(CLI::IsMember({"complement", "overall"}));
  hps_fit->add_option("--model", h_model)->required();
  auto* hps_apply = hps->add_subcommand("apply", "Sample post-processed predictions");
  std::string ha_model, ha_input, ha_out, ha_report, ha_mode = "complement";
  std::uint64_t ha_seed = 0;
  hps_apply->add_option("--model", ha_model)->required()->check(CLI::ExistingFile);
  hps_apply->add_option("--input", ha_input)->required()->check(CLI::ExistingFile);
  hps_apply->add_option("--seed", ha_seed);
  hps_apply->add_option("--out", ha_out)->required();
  hps_apply->add_option("--report", ha_report, "Sampled and in-expectation metrics (JSON)");
  hps_apply->add_option("--eo-mode", ha_mode)->check(CLI::IsMember({"complement", "overall"}));

  // tune
  auto* tune = app.add_subcommand("tune", "Dev-train/dev-eval operating point search");
  fp::tuning::TuningConfig tcfg;
  std::string t_dev, t_test, t_method = "fst", t_out = "-", t_mode = "complement", t_solver = "pgd";
  tune->add_option("--dev", t_dev)->required()->check(CLI::ExistingFile);
  tune->add_option("--test", t_test)->required()->check(CLI::ExistingFile);
  tune->add_option("--attribute", tcfg.attribute)->required();
  tune->add_option("--method", t_method)->check(CLI::IsMember({"fst", "tpp"}));
  tune->add_option("--epsilons", tcfg.epsilons)->delimiter(',');
  tune->add_option("--thresholds", tcfg.thresholds)->delimiter(',');
  tune->add_flag("--calibrate", tcfg.calibrate, "Fit a logistic calibrator on dev-train logits");
  tune->add_option("--eo-cap", tcfg.eo_cap);
  tune->add_option("--dev-split", tcfg.dev_split, "dev-train share")->check(CLI::Range(0.0, 1.0));
  tune->add_option("--seed", tcfg.seed);
  tune->add_option("--eo-mode", t_mode)->check(CLI::IsMember({"complement", "overall"}));
  tune->add_option("--solver", t_solver)->check(CLI::IsMember({"pgd", "admm"}));
  tune->add_option("--out", t_out);

  // report
  auto* rep = app.add_subcommand("report", "Tables for subgroups, seeds and correlations");
  rep->require_subcommand(1);
  auto* rep_sub = rep->add_subcommand("subgroups", "EO before/after per subgroup");
  std::vector<std::string> rs_inputs;
  std::string rs_attr, rs_out = "-", rs_mode = "complement";
  double rs_t = 0.5;
  std::optional<double> rs_t_after;
  std::size_t rs_min = fp::report::kDefaultMinSamples;
  rep_sub->add_option("--inputs", rs_inputs,
                      "Baseline scored test set, then mitigated scores or a prediction file")
      ->required()
      ->expected(2)
      ->check(CLI::ExistingFile);
  rep_sub->add_option("--attribute", rs_attr)->required();
  rep_sub->add_option("--threshold", rs_t, "Baseline threshold");
  rep_sub->add_option("--mitigated-threshold", rs_t_after, "Defaults to --threshold");
  rep_sub->add_option("--min-samples", rs_min);
  rep_sub->add_option("--eo-mode", rs_mode)->check(CLI::IsMember({"complement", "overall"}));
  rep_sub->add_option("--out", rs_out);
  auto* rep_seeds = rep->add_subcommand("seeds", "Mean and SE over seeds per (model, fraction)");
  std::vector<std::string> rse_inputs;
  std::string rse_out = "-";
  rep_seeds->add_option("--inputs", rse_inputs, "Runs CSV files")->required()->check(CLI::ExistingFile);
  rep_seeds->add_option("--out", rse_out);
  auto* rep_corr = rep->add_subcommand("correlation", "Pearson correlation of two run fields");
  std::vector<std::string> rc_inputs;
  std::string rc_x = "accuracy", rc_y, rc_out = "-";
  rep_corr->add_option("--inputs", rc_inputs, "Runs CSV files")->required()->check(CLI::ExistingFile);
  rep_corr->add_option("--x", rc_x);
  rep_corr->add_option("--y", rc_y, "e.g. eo:religion")->required();
  rep_corr->add_option("--out", rc_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      fp::SyntheticConfig cfg;
      if (!synth_config.empty()) cfg = fp::synthetic_config_from_json(read_json(synth_config));
      if (synth_seed) cfg.seed = *synth_seed;
      if (synth_n) cfg.n = *synth_n;
      fp::save(fp::generate_synthetic(cfg), synth_out);
    } else if (*metrics) {
      const auto ds = fp::load(m_input);
      const auto policy =
          m_missing == "exclude" ? fp::MissingMembership::exclude : fp::MissingMembership::complement;
      const auto g = fp::GroupedLabels::from(ds, m_attr, policy);
      const auto scores = ds.scores();
      const auto preds = fp::threshold_predictions(scores, m_threshold);
      json j = fp::fairness_report(g, scores, preds, fp::parse_eo_mode(m_mode));
      j["attribute"] = m_attr;
      j["threshold"] = m_threshold;
      j["n"] = ds.size();
      j["input_digest"] = digest_of(m_input);
      write_json(m_out, j);
    } else if (*calib) {
      const auto ds = fp::load(c_input);
      fp::Calibrator cal;
      if (!c_use_model.empty()) {
        cal = read_json(c_use_model).get<fp::Calibrator>();
      } else {
        cal = fp::fit_calibrator(ds, fp::parse_calibrator_kind(c_method));
        if (cal.diagnostics.separated) {
          std::cerr << "fairpost: warning: classes are separable by the logits; weights capped\n";
        }
      }
      if (!c_model.empty()) write_json(c_model, cal);
      if (!c_out.empty()) fp::save(fp::apply(cal, ds), c_out);
    } else if (*fst_fit) {
      fp::fst::Options opts;
      opts.solver = fp::fst::parse_solver(f_solver);
      opts.mode = fp::parse_eo_mode(f_mode);
      opts.max_iters = f_iters;
      const auto ds = fp::load(f_input);
      try {
        write_json(f_model, fp::fst::fit(ds, f_attr, f_eps, opts));
      } catch (const fp::fst::FitError& e) {
        const auto& d = e.diagnostics();
        std::cerr << "fairpost: error: " << e.what() << " (iterations " << d.iterations
                  << ", max violation " << d.max_violation << ", kkt residual " << d.kkt_residual
                  << ")\n";
        return 2;
      }
    } else if (*fst_apply) {
      const auto model = read_json(fa_model).get<fp::fst::Model>();
      fp::save(fp::fst::apply(model, fp::load(fa_input)), fa_out);
    } else if (*hps_fit) {
      const auto ds = fp::load(h_input);
      auto model = fp::hps::fit(ds, threshold_dataset(ds, h_threshold), h_attr);
      model.threshold = h_threshold;
      json j = model;
      j["expected_report"] = fp::hps::expected_report(model, fp::parse_eo_mode(h_mode));
      write_json(h_model, j);
    } else if (*hps_apply) {
      const auto model = read_json(ha_model).get<fp::hps::Model>();
      const auto ds = fp::load(ha_input);
      const auto base = threshold_dataset(ds, model.threshold);
      const auto groups = ds.membership(model.attribute, fp::MissingMembership::complement);
      const auto out = fp::hps::apply(model, base, groups, ha_seed);
      std::string text;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        text += json{{"id", ds[i].id}, {"prediction", out[i]}}.dump() + "\n";
      }
      write_text(ha_out, text);
      if (!ha_report.empty()) {
        const auto mode = fp::parse_eo_mode(ha_mode);
        const auto g = fp::GroupedLabels::from(ds, model.attribute);
        const auto scores = ds.scores();
        // Sampled: one realization at this seed. Expected: rates mixed
        // analytically from this split's base rates.
        std::vector<double> soft(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) soft[i] = out[i];
        auto expected_model = fp::hps::Model(model);
        expected_model.base = fp::hps::base_rates(g, base);
        expected_model.expected = fp::hps::expected_rates(expected_model.base, expected_model.p);
        write_json(ha_report, {{"seed", ha_seed},
                               {"sampled", fp::fairness_report(g, soft, out, mode)},
                               {"expected", fp::hps::expected_report(expected_model, mode)},
                               {"input_digest", digest_of(ha_input)}});
      }
    } else if (*tune) {
      tcfg.method = fp::tuning::parse_method(t_method);
      tcfg.mode = fp::parse_eo_mode(t_mode);
      tcfg.fst_options.solver = fp::fst::parse_solver(t_solver);
      const auto res = fp::tuning::run_tuning(tcfg, fp::load(t_dev), fp::load(t_test));
      for (const auto& f : res.grid.failures) {
        std::cerr << "fairpost: warning: FST fit failed at epsilon " << f.epsilon << ": " << f.message
                  << "\n";
      }
      if (!res.selected.within_cap) {
        std::cerr << "fairpost: warning: no frontier point meets eo_cap " << tcfg.eo_cap
                  << "; selected the minimum-EO point\n";
      }
      write_json(t_out, fp::tuning::to_json(res, tcfg));
    } else if (*rep_sub) {
      const auto test = fp::load(rs_inputs[0]);
      const auto before = threshold_dataset(test, rs_t);
      const double t_after = rs_t_after.value_or(rs_t);
      std::vector<int> after;
      if (looks_like_predictions(rs_inputs[1])) {
        after = read_predictions(rs_inputs[1], test);
      } else {
        const auto mitigated = fp::load(rs_inputs[1]);
        if (mitigated.size() != test.size()) throw fp::DataError("mitigated file differs in size");
        for (std::size_t i = 0; i < test.size(); ++i) {
          if (mitigated[i].id != test[i].id) {
            throw fp::DataError("mitigated file is not aligned with the test file at '" + test[i].id + "'");
          }
        }
        after = threshold_dataset(mitigated, t_after);
      }
      const auto rows = fp::report::subgroup_report(test, before, after, rs_attr, rs_min,
                                                    fp::parse_eo_mode(rs_mode));
      write_text(rs_out, fp::report::to_csv(rows));
      write_meta(rs_out, "subgroups", rs_inputs,
                 {{"attribute", rs_attr}, {"threshold", rs_t}, {"mitigated_threshold", t_after},
                  {"min_samples", rs_min}, {"eo_mode", rs_mode}});
    } else if (*rep_seeds) {
      write_text(rse_out, fp::report::to_csv(fp::report::seed_summary(read_runs(rse_inputs))));
      write_meta(rse_out, "seeds", rse_inputs,
                 {{"degenerate_balanced_accuracy", fp::report::kDegenerateBalancedAccuracy},
                  {"spread_flag", fp::report::kSpreadFlag}});
    } else if (*rep_corr) {
      write_text(rc_out, fp::report::to_csv(fp::report::correlation_report(read_runs(rc_inputs), rc_x, rc_y)));
      write_meta(rc_out, "correlation", rc_inputs, {{"x", rc_x}, {"y", rc_y}});
    }
  } catch (const std::exception& e) {
    std::cerr << "fairpost: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
