#include "transport/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "transport/data.hpp"
#include "transport/error.hpp"
#include "transport/simulation.hpp"

namespace transport {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::pair<double, double> parse_clip(const std::string& text) {
  const auto parts = split_list(text);
  try {
    if (parts.size() == 2) {
      std::size_t used0 = 0, used1 = 0;
      const double lo = std::stod(parts[0], &used0);
      const double hi = std::stod(parts[1], &used1);
      if (used0 == parts[0].size() && used1 == parts[1].size() && lo > 0.0 && lo < hi &&
          hi < 1.0)
        return {lo, hi};
    }
  } catch (const std::exception&) {
  }
  throw UsageError("--clip expects LO,HI with 0 < LO < HI < 1, got '" + text + "'");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw Error("failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int default_jobs() {
  if (const char* env = std::getenv("TRANSPORT_JOBS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

LearnerSpec parse_learner(const json& j, Family default_family) {
  if (!j.is_object()) throw ArgumentError("learner entries must be JSON objects");
  LearnerSpec s;
  s.kind = parse_learner_kind(j.value("kind", std::string("glm_main")));
  s.family = j.contains("family") ? parse_family(j["family"].get<std::string>()) : default_family;
  s.link = j.contains("link") ? parse_link(j["link"].get<std::string>())
                              : (s.family == Family::binomial && s.kind != LearnerKind::adaptive_lasso
                                     ? Link::logit
                                     : Link::identity);
  s.gamma = j.value("gamma", s.gamma);
  s.lambda_grid = j.value("lambda_grid", s.lambda_grid);
  s.cv_folds = j.value("cv_folds", s.cv_folds);
  s.max_iter = j.value("max_iter", s.max_iter);
  s.tol = j.value("tol", s.tol);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

EnsembleSpec parse_ensemble(const json& j, Family default_family) {
  EnsembleSpec e;
  const json* list = &j;
  if (j.is_object() && j.contains("candidates")) {
    list = &j["candidates"];
    e.selection_folds = j.value("selection_folds", e.selection_folds);
    e.seed = j.value("seed", e.seed);
  }
  if (list->is_array()) {
    for (const auto& item : *list) e.candidates.push_back(parse_learner(item, default_family));
  } else {
    e.candidates.push_back(parse_learner(*list, default_family));
  }
  e.validate();
  return e;
}

json estimate_json(const Estimate& est, const Dataset& ds, std::uint64_t seed, double lo,
                   double hi) {
  json j;
  j["estimand"] = to_string(est.estimand);
  j["point"] = est.point;
  j["plug_in"] = est.plug_in;
  j["se"] = est.se;
  j["ci95"] = {est.ci95.lo, est.ci95.hi};
  j["n"] = ds.n();
  j["n_source"] = ds.n_source();
  j["n_target"] = ds.n_target();
  j["seed"] = seed;
  j["clip"] = {lo, hi};
  json d;
  d["folds"] = est.diagnostics.folds;
  d["clipped"] = est.diagnostics.clipped;
  d["learner_choices"] = est.diagnostics.learner_choices;
  d["warnings"] = est.diagnostics.warnings;
  d["constant_cate_fallback"] = est.diagnostics.constant_cate_fallback;
  j["diagnostics"] = d;
  if (est.selected_v) j["selected_v"] = *est.selected_v;
  if (est.selected_z) j["selected_z"] = *est.selected_z;
  return j;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out.empty() ? "(none)" : out;
}

std::string replications_csv(const MonteCarloConfig& cfg, const MonteCarloResult& res) {
  std::ostringstream os;
  os << "replication,seed,estimator,point,se,selected_v,selected_z,error\n";
  auto names = [](const std::optional<std::vector<std::string>>& v) {
    if (!v) return std::string();
    std::string s;
    for (std::size_t i = 0; i < v->size(); ++i) s += (i ? ";" : "") + (*v)[i];
    return s;
  };
  for (const auto& rec : res.replications) {
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
      std::string error = rec.errors[e];
      std::replace(error.begin(), error.end(), ',', ';');
      std::replace(error.begin(), error.end(), '\n', ' ');
      char point[64] = "", se[64] = "";
      if (rec.point[e]) std::snprintf(point, sizeof point, "%.17g", *rec.point[e]);
      if (rec.se[e]) std::snprintf(se, sizeof se, "%.17g", *rec.se[e]);
      os << rec.replication << ',' << rec.seed << ',' << to_string(cfg.estimators[e]) << ','
         << point << ',' << se << ',' << names(rec.selected_v) << ',' << names(rec.selected_z)
         << ',' << error << '\n';
    }
  }
  return os.str();
}

struct SimulateArgs {
  int dgm = 0;
  long long n = 1000;
  int reps = 200;
  std::uint64_t seed = 1;
  int folds = 5;
  bool no_crossfit = false;
  std::string estimators = "lambda,theta,lambda_c";
  std::string clip = "0.01,0.99";
  std::string out;
  std::string reps_out;
  std::string config;
  int jobs = 1;
  double noise_sd = -1.0;
  bool interpretable = false;
  bool no_rel_eff = false;
  bool oracle = false;
};

struct EstimateArgs {
  std::string data;
  std::string schema;
  std::string estimator;
  std::string v;
  std::string z;
  bool interpretable = false;
  int folds = 5;
  bool no_crossfit = false;
  std::uint64_t seed = 1;
  std::string clip = "0.01,0.99";
  std::string out;
  std::string config;
};

struct BoundsArgs {
  int dgm = 0;
  double noise_sd = -1.0;
  std::string out;
};

const CLI::Validator kDgmId(
    [](std::string& v) -> std::string {
      if (v == "1" || v == "2" || v == "3" || v == "4") return {};
      return "unknown DGM id '" + v + "' (valid ids: 1, 2, 3, 4)";
    },
    "ID", "dgm id");

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  MonteCarloConfig cfg;
  cfg.spec = builtin_dgm(a.dgm);
  if (a.noise_sd >= 0.0) cfg.spec = with_noise_sd(cfg.spec, a.noise_sd);
  cfg.n = a.n;
  cfg.reps = a.reps;
  cfg.seed = a.seed;
  cfg.folds = a.no_crossfit ? 1 : a.folds;
  const auto [lo, hi] = parse_clip(a.clip);
  cfg.clip_lo = lo;
  cfg.clip_hi = hi;
  cfg.jobs = a.jobs;
  cfg.interpretable = a.interpretable;
  cfg.oracle = a.oracle;
  cfg.rel_eff = !a.no_rel_eff;
  cfg.estimators.clear();
  try {
    for (const auto& label : split_list(a.estimators)) cfg.estimators.push_back(parse_estimand(label));
    if (!a.config.empty()) cfg.learners = parse_learner_config(read_text(a.config));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (cfg.estimators.empty()) throw UsageError("--estimators is empty");
  if (cfg.rel_eff &&
      std::find(cfg.estimators.begin(), cfg.estimators.end(), Estimand::lambda) ==
          cfg.estimators.end())
    throw UsageError("relative efficiency needs lambda among --estimators (or pass --no-rel-eff)");
  if (cfg.reps < 2) throw UsageError("--reps must be at least 2");
  if (cfg.folds < 1 || cfg.folds > cfg.n) throw UsageError("--folds must lie in [1, n]");

  const MonteCarloResult res = run_monte_carlo(cfg);
  out << "DGM " << a.dgm << ", n = " << cfg.n << ", reps = " << cfg.reps << ", folds = " << cfg.folds
      << ", truth = " << num(res.truth) << "\n\n";
  out << metrics_table(res.rows);
  if (!a.out.empty()) write_text(a.out, metrics_csv(res.rows));
  if (!a.reps_out.empty()) write_text(a.reps_out, replications_csv(cfg, res));
  return kExitOk;
}

int cmd_estimate(const EstimateArgs& a, std::ostream& out) {
  Estimand estimand;
  try {
    estimand = parse_estimand(a.estimator);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const bool needs_subset = estimand == Estimand::theta || estimand == Estimand::theta_alt;
  if (estimand == Estimand::lambda_collab && (!a.v.empty() || !a.z.empty()))
    throw UsageError("--v/--z are not accepted by lambda_c; it selects them from the data");
  if (a.interpretable && estimand != Estimand::lambda_collab)
    throw UsageError("--interpretable applies to lambda_c only");
  const auto [lo, hi] = parse_clip(a.clip);

  Schema schema;
  NuisanceLearners learners;
  try {
    schema = parse_schema(read_text(a.schema));
    if (!a.config.empty()) learners = parse_learner_config(read_text(a.config));
  } catch (const SchemaError& e) {
    throw UsageError(e.what());
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  std::vector<std::string> v = split_list(a.v);
  std::vector<std::string> z = split_list(a.z);
  if (needs_subset) {
    if (v.empty() && schema.v) v = *schema.v;
    if (z.empty() && schema.z) z = *schema.z;
    if (v.empty() || z.empty())
      throw UsageError(a.estimator + " requires --v and --z (or v/z in the schema)");
  }
  Dataset ds;
  SubsetSpec subset;
  try {
    ds = load_csv(a.data, schema);
    if (needs_subset) subset = SubsetSpec::from_names(ds, v, z);
  } catch (const SchemaError& e) {
    throw UsageError(e.what());
  }
  if (a.folds < 1 || a.folds > ds.n()) throw UsageError("--folds must lie in [1, n]");

  EstimatorOptions opt;
  opt.learners = learners;
  opt.clip_lo = lo;
  opt.clip_hi = hi;
  opt.interpretable = a.interpretable;
  opt.folds = make_folds(ds.n(), a.no_crossfit ? 1 : a.folds, a.seed);
  TransportEstimator ctx(ds, opt);
  const Estimate est = ctx.run(estimand, needs_subset ? &subset : nullptr);

  out << "estimand: " << to_string(est.estimand) << '\n';
  out << "point:    " << num(est.point) << '\n';
  out << "se:       " << num(est.se) << '\n';
  out << "95% CI:   [" << num(est.ci95.lo) << ", " << num(est.ci95.hi) << "]\n";
  out << "n:        " << ds.n() << " (" << ds.n_source() << " source, " << ds.n_target()
      << " target)\n";
  out << "folds:    " << est.diagnostics.folds << '\n';
  out << "clipped: ";
  for (const auto& [k, c] : est.diagnostics.clipped) out << ' ' << k << '=' << c;
  out << '\n';
  if (est.selected_v) out << "selected V: " << join(*est.selected_v) << '\n';
  if (est.selected_z) out << "selected Z: " << join(*est.selected_z) << '\n';
  for (const auto& w : est.diagnostics.warnings) out << "warning: " << w << '\n';
  if (!a.out.empty()) write_text(a.out, estimate_json(est, ds, a.seed, lo, hi).dump(2) + "\n");
  return kExitOk;
}

int cmd_bounds(const BoundsArgs& a, std::ostream& out) {
  DgmSpec spec = builtin_dgm(a.dgm);
  if (a.noise_sd >= 0.0) spec = with_noise_sd(spec, a.noise_sd);
  const BoundsResult b = efficiency_bounds(spec);
  auto terms = [&](const char* label, double total, const BoundTerms& t) {
    out << label << num(total) << "  (first " << num(t.residual) << ", middle " << num(t.middle)
        << ", last " << num(t.target) << ")\n";
  };
  out << "DGM " << a.dgm << ", q = P(S=0) = " << num(b.q) << '\n';
  terms("bound_lambda: ", b.bound_lambda, b.lambda_terms);
  terms("bound_theta:  ", b.bound_theta, b.theta_terms);
  out << "ratio theta/lambda: " << num(b.bound_theta / b.bound_lambda) << '\n';
  out << "Var(EIF) lambda: " << num(b.eif_variance_lambda)
      << ", theta: " << num(b.eif_variance_theta) << "\n\n";
  out << "tau^2(W):\n";
  for (const auto& name : spec.names) out << name << "  ";
  out << "    prob       e_S      tau2\n";
  for (const auto& row : b.tau2) {
    for (std::size_t j = 0; j < row.x.size(); ++j)
      out << std::string(spec.names[j].size() - 1, ' ') << static_cast<int>(row.x[j]) << "  ";
    out << num(row.prob) << "  " << num(row.e_s) << "  " << num(row.tau2) << '\n';
  }
  if (!a.out.empty()) {
    json j;
    j["dgm"] = a.dgm;
    j["q"] = b.q;
    j["bound_lambda"] = b.bound_lambda;
    j["bound_theta"] = b.bound_theta;
    j["ratio"] = b.bound_theta / b.bound_lambda;
    j["terms_lambda"] = {b.lambda_terms.residual, b.lambda_terms.middle, b.lambda_terms.target};
    j["terms_theta"] = {b.theta_terms.residual, b.theta_terms.middle, b.theta_terms.target};
    j["eif_variance_lambda"] = b.eif_variance_lambda;
    j["eif_variance_theta"] = b.eif_variance_theta;
    json rows = json::array();
    for (const auto& row : b.tau2)
      rows.push_back({{"x", row.x}, {"prob", row.prob}, {"e_s", row.e_s}, {"tau2", row.tau2}});
    j["tau2"] = rows;
    j["covariates"] = spec.names;
    write_text(a.out, j.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

NuisanceLearners parse_learner_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("learner config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ArgumentError("learner config must be a JSON object");
  NuisanceLearners l;
  const std::vector<std::pair<std::string, std::pair<EnsembleSpec*, Family>>> slots{
      {"treatment", {&l.treatment, Family::binomial}},
      {"outcome", {&l.outcome, Family::gaussian}},
      {"cate", {&l.cate, Family::gaussian}},
      {"cate_given_z", {&l.cate_given_z, Family::gaussian}},
      {"cate_collab", {&l.cate_collab, Family::gaussian}},
      {"selection", {&l.selection, Family::binomial}},
      {"pseudo_given_z", {&l.pseudo_given_z, Family::gaussian}},
      {"selection_given_cate", {&l.selection_given_cate, Family::binomial}},
      {"cate_given_selection", {&l.cate_given_selection, Family::gaussian}},
  };
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "selector") {
        l.selector = parse_learner(value, Family::gaussian);
        if (l.selector.kind != LearnerKind::adaptive_lasso)
          throw ArgumentError("selector must be an adaptive_lasso learner");
        continue;
      }
      const auto it = std::find_if(slots.begin(), slots.end(),
                                   [&](const auto& s) { return s.first == key; });
      if (it == slots.end()) throw ArgumentError("unknown learner config key '" + key + "'");
      *it->second.first = parse_ensemble(value, it->second.second);
    }
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("learner config: ") + e.what());
  }
  return l;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-step estimators of the transported average treatment effect"};
  app.name("transport_cli");
  app.require_subcommand(1);

  SimulateArgs sa;
  sa.jobs = default_jobs();
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study on a built-in DGM");
  sim->add_option("--dgm", sa.dgm, "DGM id (1-4)")->required()->check(kDgmId);
  sim->add_option("--n", sa.n, "sample size")->check(CLI::PositiveNumber);
  sim->add_option("--reps", sa.reps, "replications")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sa.seed, "master seed");
  sim->add_option("--folds", sa.folds, "cross-fitting folds J")->check(CLI::PositiveNumber);
  sim->add_flag("--no-crossfit", sa.no_crossfit, "same as --folds 1");
  sim->add_option("--estimators", sa.estimators, "comma list of lambda,theta,lambda_c,theta_alt");
  sim->add_option("--clip", sa.clip, "probability clip bounds LO,HI");
  sim->add_option("--out", sa.out, "metrics CSV path");
  sim->add_option("--reps-out", sa.reps_out, "per-replication CSV path");
  sim->add_option("--config", sa.config, "learner config JSON");
  sim->add_option("--jobs", sa.jobs, "worker threads (default $TRANSPORT_JOBS or 1)")
      ->check(CLI::PositiveNumber);
  sim->add_option("--noise-sd", sa.noise_sd, "replace the outcome noise with a constant sd")
      ->check(CLI::NonNegativeNumber);
  sim->add_flag("--interpretable", sa.interpretable, "adaptive-lasso V/Z selection for lambda_c");
  sim->add_flag("--no-rel-eff", sa.no_rel_eff, "skip relative efficiency (lambda optional)");
  sim->add_flag("--oracle", sa.oracle, "plug in the true nuisance functions");

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Estimate on a user-supplied CSV");
  est->add_option("--data", ea.data, "CSV path")->required()->check(CLI::ExistingFile);
  est->add_option("--schema", ea.schema, "column-role JSON")->required()->check(CLI::ExistingFile);
  est->add_option("--estimator", ea.estimator, "lambda|theta|lambda_c|theta_alt|source_ate")
      ->required();
  est->add_option("--v", ea.v, "effect modifiers (comma list)");
  est->add_option("--z", ea.z, "transport subset (comma list)");
  est->add_flag("--interpretable", ea.interpretable, "report selected V and Z (lambda_c)");
  est->add_option("--folds", ea.folds, "cross-fitting folds J")->check(CLI::PositiveNumber);
  est->add_flag("--no-crossfit", ea.no_crossfit, "same as --folds 1");
  est->add_option("--seed", ea.seed, "fold seed");
  est->add_option("--clip", ea.clip, "probability clip bounds LO,HI");
  est->add_option("--out", ea.out, "result JSON path");
  est->add_option("--config", ea.config, "learner config JSON");

  BoundsArgs ba;
  auto* bnd = app.add_subcommand("bounds", "Efficiency bounds of a built-in DGM");
  bnd->add_option("--dgm", ba.dgm, "DGM id (1-4)")->required()->check(kDgmId);
  bnd->add_option("--noise-sd", ba.noise_sd, "replace the outcome noise with a constant sd")
      ->check(CLI::NonNegativeNumber);
  bnd->add_option("--out", ba.out, "result JSON path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sa, out);
    if (est->parsed()) return cmd_estimate(ea, out);
    return cmd_bounds(ba, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace transport
