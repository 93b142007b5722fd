#include "transport/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <utility>

#include "transport/error.hpp"

namespace transport {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

IndexSet all_rows(Index n) {
  IndexSet rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

IndexSet source_rows(const Dataset& ds, const IndexSet& rows) {
  IndexSet out;
  for (Index i : rows)
    if (ds.is_source(i)) out.push_back(i);
  return out;
}

IndexSet sorted_union(IndexSet a, const IndexSet& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

struct Fit {
  Eigen::VectorXd pred;
  std::string choice;
};

// Trains on `train` and predicts `rows`; other entries stay NaN. An empty
// predictor set means the training mean.
Fit fit_predict(const EnsembleSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                const IndexSet& train, const IndexSet& rows, const std::string& what) {
  if (train.empty()) {
    throw FoldError(what + ": a training fold has no eligible rows; use fewer folds or J=1");
  }
  Fit out{Eigen::VectorXd::Constant(x.rows(), kNaN), {}};
  if (x.cols() == 0) {
    out.pred(rows).setConstant(y(train).mean());
    out.choice = "mean";
    return out;
  }
  const FittedModel m = fit_ensemble(spec, x(train, Eigen::all), y(train));
  out.pred(rows) = m.predict(x(rows, Eigen::all));
  out.choice = m.spec().name();
  return out;
}

Index clip_rows(Eigen::VectorXd& v, double lo, double hi, const IndexSet& counted) {
  Index hits = 0;
  for (Index i : counted) {
    const double x = v[i];
    if (!std::isnan(x) && (x < lo || x > hi)) ++hits;
  }
  v = clip_probabilities(v, lo, hi).values;
  return hits;
}

double prob_of_arm(int a, double e_a) { return a == 1 ? e_a : 1.0 - e_a; }

double weighted_residual(int a, double y, double e_a, double f, double g, double e_s) {
  return (2.0 * a - 1.0) / prob_of_arm(a, e_a) * (1.0 - e_s) / e_s * (y - a * f - g);
}

Estimate one_step(Estimand estimand, const Dataset& ds, const std::vector<EifParts>& parts,
                  double p_hat, double plug_in) {
  const Index n = ds.n();
  if (!(p_hat > 0.0 && p_hat < 1.0))
    throw ValidationError("fraction of target rows must lie strictly between 0 and 1");
  auto eval = [&](double psi) {
    Eigen::VectorXd d(n);
    for (Index i = 0; i < n; ++i)
      d[i] = eif_value(parts[static_cast<std::size_t>(i)], ds.s()[i], p_hat, psi);
    return d;
  };
  Estimate est;
  est.estimand = estimand;
  est.plug_in = plug_in;
  est.point = plug_in + eval(plug_in).mean();
  est.eif = eval(est.point);
  const Inference inf = eif_inference(est.eif, est.point);
  est.se = inf.se;
  est.ci95 = inf.ci95;
  return est;
}

double target_mean(const Dataset& ds, const Eigen::VectorXd& v) {
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < ds.n(); ++i) {
    if (ds.is_source(i)) continue;
    sum += v[i];
    ++count;
  }
  return sum / static_cast<double>(count);
}

double target_fraction(const Dataset& ds) {
  return static_cast<double>(ds.n_target()) / static_cast<double>(ds.n());
}

}  // namespace

std::string to_string(Estimand e) {
  switch (e) {
    case Estimand::lambda: return "lambda";
    case Estimand::theta: return "theta";
    case Estimand::lambda_collab: return "lambda_c";
    case Estimand::theta_alt: return "theta_alt";
    case Estimand::source_ate: return "source_ate";
  }
  return "lambda";
}

Estimand parse_estimand(const std::string& label) {
  if (label == "lambda") return Estimand::lambda;
  if (label == "theta") return Estimand::theta;
  if (label == "lambda_c" || label == "lambda_collab") return Estimand::lambda_collab;
  if (label == "theta_alt") return Estimand::theta_alt;
  if (label == "source_ate") return Estimand::source_ate;
  throw ArgumentError("unknown estimator '" + label +
                      "' (expected lambda, theta, lambda_c, theta_alt or source_ate)");
}

NuisanceSet NuisanceSet::nan_filled(Index n) {
  const Eigen::VectorXd v = Eigen::VectorXd::Constant(n, kNaN);
  return NuisanceSet{v, v, v, v, v, v, v, v, v, v, v, v, 0.0};
}

Inference eif_inference(const Eigen::VectorXd& eif, double point) {
  const Index n = eif.size();
  if (n < 2) throw InferenceError("influence-function inference needs at least 2 rows");
  if (!eif.allFinite()) throw InferenceError("influence-function values are not finite");
  const double mean = eif.mean();
  const double var = (eif.array() - mean).square().sum() / static_cast<double>(n - 1);
  Inference out;
  out.se = std::sqrt(var / static_cast<double>(n));
  out.ci95 = {point - 1.96 * out.se, point + 1.96 * out.se};
  return out;
}

double pseudo_outcome_T(int a, double y, double m1, double m0, double e_a) {
  if (!(e_a > 0.0 && e_a < 1.0)) throw ArgumentError("pseudo_outcome_T: e_a must lie in (0, 1)");
  const double ma = a == 1 ? m1 : m0;
  return (2.0 * a - 1.0) / prob_of_arm(a, e_a) * (y - ma) + (m1 - m0);
}

double pseudo_outcome_U(int s, double f_hat, double ef_z_s1, double e_s_z) {
  if (!(e_s_z > 0.0 && e_s_z < 1.0))
    throw ArgumentError("pseudo_outcome_U: e_s_z must lie in (0, 1)");
  if (s == 0) return ef_z_s1;
  return (f_hat - ef_z_s1) / e_s_z + ef_z_s1;
}

EifParts eif_parts_lambda(int s, int a, double y, double e_a, double f, double g, double e_s_w) {
  EifParts p;
  if (s == 1) {
    p.residual = weighted_residual(a, y, e_a, f, g, e_s_w);
  } else {
    p.target = f;
  }
  return p;
}

EifParts eif_parts_theta(int s, int a, double y, double e_a, double f, double g, double e_s_z,
                         double ef_z) {
  EifParts p;
  if (s == 1) {
    p.residual = weighted_residual(a, y, e_a, f, g, e_s_z);
  } else {
    p.target = ef_z;
  }
  p.middle = (1.0 - e_s_z) * (f - ef_z);
  return p;
}

EifParts eif_parts_lambda_collab(int s, int a, double y, double e_a, double f, double g,
                                 double h_s, double e_s_w, double k) {
  EifParts p;
  if (s == 1) {
    p.residual = weighted_residual(a, y, e_a, f, g, h_s);
  } else {
    p.target = k;
  }
  p.middle = (1.0 - e_s_w) * (f - k);
  return p;
}

EifParts eif_parts_theta_alt(int s, int a, double y, double e_a, double f, double g,
                             double e_s_z, double ef_z_s1, double eu_z) {
  EifParts p;
  if (s == 1) {
    p.residual = weighted_residual(a, y, e_a, f, g, e_s_z);
    p.middle = (1.0 - e_s_z) / e_s_z * (f - ef_z_s1);
  } else {
    p.target = eu_z;
  }
  return p;
}

double eif_value(const EifParts& parts, int s, double p_target, double psi) {
  const double target = s == 0 ? parts.target - psi : 0.0;
  return (parts.residual + parts.middle + target) / p_target;
}

Estimate assemble_lambda(const Dataset& ds, const NuisanceSet& nu) {
  std::vector<EifParts> parts(static_cast<std::size_t>(ds.n()));
  for (Index i = 0; i < ds.n(); ++i) {
    parts[static_cast<std::size_t>(i)] = eif_parts_lambda(
        ds.s()[i], ds.a()[i], ds.y()[i], nu.e_a[i], nu.f_hat[i], nu.g_hat[i], nu.e_s_w[i]);
  }
  Estimate est = one_step(Estimand::lambda, ds, parts, nu.p_hat, target_mean(ds, nu.f_hat));
  est.nuisances = nu;
  return est;
}

Estimate assemble_theta(const Dataset& ds, const NuisanceSet& nu) {
  std::vector<EifParts> parts(static_cast<std::size_t>(ds.n()));
  for (Index i = 0; i < ds.n(); ++i) {
    parts[static_cast<std::size_t>(i)] =
        eif_parts_theta(ds.s()[i], ds.a()[i], ds.y()[i], nu.e_a[i], nu.f_hat[i], nu.g_hat[i],
                        nu.e_s_z[i], nu.ef_z[i]);
  }
  Estimate est = one_step(Estimand::theta, ds, parts, nu.p_hat, target_mean(ds, nu.ef_z));
  est.nuisances = nu;
  return est;
}

Estimate assemble_lambda_collab(const Dataset& ds, const NuisanceSet& nu) {
  std::vector<EifParts> parts(static_cast<std::size_t>(ds.n()));
  for (Index i = 0; i < ds.n(); ++i) {
    parts[static_cast<std::size_t>(i)] =
        eif_parts_lambda_collab(ds.s()[i], ds.a()[i], ds.y()[i], nu.e_a[i], nu.f_hat[i],
                                nu.g_hat[i], nu.h_s[i], nu.e_s_w[i], nu.k_hat[i]);
  }
  Estimate est = one_step(Estimand::lambda_collab, ds, parts, nu.p_hat, target_mean(ds, nu.k_hat));
  est.nuisances = nu;
  return est;
}

Estimate assemble_theta_alt(const Dataset& ds, const NuisanceSet& nu) {
  std::vector<EifParts> parts(static_cast<std::size_t>(ds.n()));
  for (Index i = 0; i < ds.n(); ++i) {
    parts[static_cast<std::size_t>(i)] =
        eif_parts_theta_alt(ds.s()[i], ds.a()[i], ds.y()[i], nu.e_a[i], nu.f_hat[i],
                            nu.g_hat[i], nu.e_s_z[i], nu.ef_z_s1[i], nu.eu_z[i]);
  }
  Estimate est = one_step(Estimand::theta_alt, ds, parts, nu.p_hat, target_mean(ds, nu.eu_z));
  est.nuisances = nu;
  return est;
}

Estimate assemble_source_ate(const Dataset& ds, const NuisanceSet& nu) {
  const Index n = ds.n();
  const double p_source = 1.0 - nu.p_hat;
  if (!(p_source > 0.0 && p_source < 1.0))
    throw ValidationError("fraction of source rows must lie strictly between 0 and 1");
  Eigen::VectorXd t = Eigen::VectorXd::Zero(n);
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (!ds.is_source(i)) continue;
    t[i] = pseudo_outcome_T(ds.a()[i], ds.y()[i], nu.m1[i], nu.m0[i], nu.e_a[i]);
    sum += t[i];
  }
  Estimate est;
  est.estimand = Estimand::source_ate;
  est.point = sum / static_cast<double>(ds.n_source());
  est.plug_in = est.point;
  est.eif.resize(n);
  for (Index i = 0; i < n; ++i)
    est.eif[i] = ds.is_source(i) ? (t[i] - est.point) / p_source : 0.0;
  const Inference inf = eif_inference(est.eif, est.point);
  est.se = inf.se;
  est.ci95 = inf.ci95;
  est.nuisances = nu;
  return est;
}

// Lazily built fold-level fits shared by the estimators of one context.
struct TransportEstimator::Cache {
  struct Base {
    Eigen::VectorXd e_a, m1, m0, t;  // source rows only
    std::string e_a_choice, outcome_choice;
    Index e_a_clipped = 0;           // counted on validation rows
  };
  struct Fold {
    IndexSet train, valid, train_source;
  };
  struct Selection {
    std::vector<Fit> fits;          // clipped, all rows
    std::vector<Index> clipped;     // per fold, validation rows
  };

  Cache(const Dataset& d, const EstimatorOptions& o) : ds(d), opt(o) {
    const Index n = ds.n();
    all = all_rows(n);
    source = source_rows(ds, all);
    for (int j = 0; j < opt.folds.folds(); ++j) {
      Fold f{opt.folds.training_rows(j), opt.folds.validation_rows(j), {}};
      f.train_source = source_rows(ds, f.train);
      folds.push_back(std::move(f));
    }
    treat_x.resize(n, ds.p() + 1);
    treat_x.col(0) = ds.a().cast<double>();
    treat_x.rightCols(ds.p()) = ds.w();
    a_double = ds.a().cast<double>();
    s_double = ds.s().cast<double>();
  }

  Base fit_base(const IndexSet& train_source, const IndexSet& counted) const {
    Base b;
    Fit ea = fit_predict(opt.learners.treatment, ds.w(), a_double, train_source, source,
                         "treatment model");
    b.e_a_clipped = clip_rows(ea.pred, opt.clip_lo, opt.clip_hi, source_rows(ds, counted));
    b.e_a = std::move(ea.pred);
    b.e_a_choice = ea.choice;

    if (train_source.empty())
      throw FoldError("outcome model: a training fold has no source rows; use fewer folds or J=1");
    const FittedModel m =
        fit_ensemble(opt.learners.outcome, treat_x(train_source, Eigen::all), ds.y()(train_source));
    b.outcome_choice = m.spec().name();
    Eigen::MatrixXd xs = treat_x(source, Eigen::all);
    xs.col(0).setOnes();
    const Eigen::VectorXd p1 = m.predict(xs);
    xs.col(0).setZero();
    const Eigen::VectorXd p0 = m.predict(xs);
    const Index n = ds.n();
    b.m1 = Eigen::VectorXd::Constant(n, kNaN);
    b.m0 = Eigen::VectorXd::Constant(n, kNaN);
    b.t = Eigen::VectorXd::Constant(n, kNaN);
    b.m1(source) = p1;
    b.m0(source) = p0;
    for (Index i : source) b.t[i] = pseudo_outcome_T(ds.a()[i], ds.y()[i], b.m1[i], b.m0[i], b.e_a[i]);
    return b;
  }

  const Base& base(std::size_t j) {
    if (bases.empty()) {
      for (const auto& f : folds) bases.push_back(fit_base(f.train_source, f.valid));
    }
    return bases[j];
  }

  const Base& full_base() {
    if (folds.size() == 1) return base(0);
    if (!full) full = fit_base(source, all);
    return *full;
  }

  // T regressed on `cols` among training source rows; predicted on source rows
  // only or on every row.
  const std::vector<Fit>& cate(const IndexSet& cols, bool source_only, bool collab = false) {
    auto key = std::make_tuple(cols, source_only, collab);
    auto it = cates.find(key);
    if (it != cates.end()) return it->second;
    const Eigen::MatrixXd x = ds.covariates(cols);
    const EnsembleSpec& spec = collab ? opt.learners.cate_collab : opt.learners.cate;
    std::vector<Fit> fits;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      fits.push_back(fit_predict(spec, x, base(j).t, folds[j].train_source,
                                 source_only ? source : all, "CATE model"));
    }
    return cates.emplace(std::move(key), std::move(fits)).first->second;
  }

  // S regressed on `cols` among training rows; clipped predictions on all rows.
  const Selection& selection(const IndexSet& cols) {
    auto it = selections.find(cols);
    if (it != selections.end()) return it->second;
    const Eigen::MatrixXd x = ds.covariates(cols);
    Selection sel;
    for (const auto& f : folds) {
      Fit fit = fit_predict(opt.learners.selection, x, s_double, f.train, all, "selection model");
      sel.clipped.push_back(clip_rows(fit.pred, opt.clip_lo, opt.clip_hi, f.valid));
      sel.fits.push_back(std::move(fit));
    }
    return selections.emplace(cols, std::move(sel)).first->second;
  }

  // Copies fold-j values of `src` on its validation rows into `dst`.
  void scatter(Eigen::VectorXd& dst, const Eigen::VectorXd& src, std::size_t j) const {
    const IndexSet& rows = folds[j].valid;
    dst(rows) = src(rows);
  }

  void fill_base(NuisanceSet& nu, Diagnostics& diag) {
    for (std::size_t j = 0; j < folds.size(); ++j) {
      const Base& b = base(j);
      scatter(nu.e_a, b.e_a, j);
      scatter(nu.m1, b.m1, j);
      scatter(nu.m0, b.m0, j);
      record(diag, "treatment", b.e_a_choice);
      record(diag, "outcome", b.outcome_choice);
      diag.clipped["e_a"] += b.e_a_clipped;
    }
    nu.g_hat = nu.m0;
    nu.p_hat = target_fraction(ds);
    diag.folds = static_cast<int>(folds.size());
  }

  static void record(Diagnostics& d, const std::string& key, const std::string& choice) {
    d.learner_choices[key].push_back(choice);
  }

  const Dataset& ds;
  const EstimatorOptions& opt;
  IndexSet all, source;
  std::vector<Fold> folds;
  Eigen::MatrixXd treat_x;  // [A, W]
  Eigen::VectorXd a_double, s_double;
  std::vector<Base> bases;
  std::optional<Base> full;
  std::map<std::tuple<IndexSet, bool, bool>, std::vector<Fit>> cates;
  std::map<IndexSet, Selection> selections;
};

namespace {

void warn_saturation(Diagnostics& d, const std::string& key, Index rows) {
  const auto it = d.clipped.find(key);
  if (it == d.clipped.end() || rows == 0) return;
  if (2 * it->second > rows) {
    d.warnings.push_back("clipping saturated " + std::to_string(it->second) + " of " +
                         std::to_string(rows) + " " + key + " values");
  }
}

std::vector<std::string> names_of(const Dataset& ds, const IndexSet& cols) {
  std::vector<std::string> out;
  for (Index j : cols) out.push_back(ds.column_names()[static_cast<std::size_t>(j)]);
  return out;
}

void require_observed(const Dataset& ds, const IndexSet& cols, const std::string& who) {
  const auto missing = ds.unobserved_columns(cols);
  if (missing.empty()) return;
  std::string msg = who + " needs these columns observed on every row, but they are missing on "
                          "target rows:";
  for (const auto& m : missing) msg += " " + m;
  throw PreconditionError(msg);
}

bool nearly_constant(const Eigen::VectorXd& v, const IndexSet& rows) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Index i : rows) {
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  return hi - lo <= 1e-10 * (1.0 + std::abs(hi));
}

Eigen::MatrixXd quadratic_basis(const Eigen::VectorXd& v) {
  Eigen::MatrixXd x(v.size(), 2);
  x.col(0) = v;
  x.col(1) = v.cwiseProduct(v);
  return x;
}

}  // namespace

TransportEstimator::TransportEstimator(const Dataset& ds, EstimatorOptions options)
    : ds_(ds), opt_(std::move(options)) {
  if (opt_.folds.fold_of().empty()) opt_.folds = make_folds(ds_.n(), 1, 0);
  if (opt_.folds.n() != ds_.n())
    throw ArgumentError("fold assignment covers " + std::to_string(opt_.folds.n()) +
                        " rows but the dataset has " + std::to_string(ds_.n()));
  if (!(opt_.clip_lo > 0.0 && opt_.clip_lo < opt_.clip_hi && opt_.clip_hi < 1.0))
    throw ArgumentError("clip bounds must satisfy 0 < lo < hi < 1");
  cache_ = std::make_unique<Cache>(ds_, opt_);
}

TransportEstimator::~TransportEstimator() = default;

Estimate TransportEstimator::lambda() {
  const IndexSet w_cols = all_rows(ds_.p());
  require_observed(ds_, w_cols, "lambda");
  Cache& c = *cache_;
  NuisanceSet nu = NuisanceSet::nan_filled(ds_.n());
  Diagnostics diag;
  c.fill_base(nu, diag);
  const auto& cate = c.cate(w_cols, false);
  const auto& sel = c.selection(w_cols);
  for (std::size_t j = 0; j < c.folds.size(); ++j) {
    c.scatter(nu.f_hat, cate[j].pred, j);
    c.scatter(nu.e_s_w, sel.fits[j].pred, j);
    Cache::record(diag, "cate", cate[j].choice);
    Cache::record(diag, "selection", sel.fits[j].choice);
    diag.clipped["e_s_w"] += sel.clipped[j];
  }
  Estimate est = assemble_lambda(ds_, nu);
  warn_saturation(diag, "e_a", ds_.n_source());
  warn_saturation(diag, "e_s_w", ds_.n());
  est.diagnostics = std::move(diag);
  return est;
}

Estimate TransportEstimator::theta(const SubsetSpec& subset) {
  subset.validate(ds_.p());
  require_observed(ds_, sorted_union(subset.v_idx, subset.z_idx), "theta");
  Cache& c = *cache_;
  NuisanceSet nu = NuisanceSet::nan_filled(ds_.n());
  Diagnostics diag;
  c.fill_base(nu, diag);
  const auto& cate = c.cate(subset.v_idx, false);
  const auto& sel = c.selection(subset.z_idx);
  const Eigen::MatrixXd z = ds_.covariates(subset.z_idx);
  for (std::size_t j = 0; j < c.folds.size(); ++j) {
    const auto& f = c.folds[j];
    const Fit efz = fit_predict(opt_.learners.cate_given_z, z, cate[j].pred, f.train, f.valid,
                                "CATE-given-Z model");
    c.scatter(nu.f_hat, cate[j].pred, j);
    c.scatter(nu.ef_z, efz.pred, j);
    c.scatter(nu.e_s_z, sel.fits[j].pred, j);
    Cache::record(diag, "cate", cate[j].choice);
    Cache::record(diag, "cate_given_z", efz.choice);
    Cache::record(diag, "selection", sel.fits[j].choice);
    diag.clipped["e_s_z"] += sel.clipped[j];
  }
  Estimate est = assemble_theta(ds_, nu);
  warn_saturation(diag, "e_a", ds_.n_source());
  warn_saturation(diag, "e_s_z", ds_.n());
  est.diagnostics = std::move(diag);
  return est;
}

Estimate TransportEstimator::lambda_collab() {
  const IndexSet w_cols = all_rows(ds_.p());
  require_observed(ds_, w_cols, "lambda_c");
  Cache& c = *cache_;
  NuisanceSet nu = NuisanceSet::nan_filled(ds_.n());
  Diagnostics diag;
  c.fill_base(nu, diag);

  IndexSet v_cols = w_cols;
  IndexSet z_cols = w_cols;
  std::optional<std::vector<std::string>> selected_v, selected_z;
  if (opt_.interpretable) {
    // One full-sample selection pass; the cross-fitted fits below reuse it.
    const auto& fb = c.full_base();
    const Eigen::MatrixXd w_src = ds_.w()(c.source, Eigen::all);
    LearnerSpec sel_spec = opt_.learners.selector;
    sel_spec.kind = LearnerKind::adaptive_lasso;
    sel_spec.family = Family::gaussian;
    const FittedModel fv = fit_learner(sel_spec, w_src, fb.t(c.source));
    v_cols = fv.active_set();
    z_cols.clear();
    if (!v_cols.empty()) {
      const FittedModel fz = fit_learner(sel_spec, ds_.covariates(v_cols), c.s_double);
      for (Index k : fz.active_set()) z_cols.push_back(v_cols[static_cast<std::size_t>(k)]);
      for (const auto& wmsg : fz.lasso()->warnings) diag.warnings.push_back("Z selection: " + wmsg);
    }
    for (const auto& wmsg : fv.lasso()->warnings) diag.warnings.push_back("V selection: " + wmsg);
    selected_v = names_of(ds_, v_cols);
    selected_z = names_of(ds_, z_cols);
  }

  const auto& cate = c.cate(v_cols, false, true);
  const auto& sel = c.selection(z_cols);
  for (std::size_t j = 0; j < c.folds.size(); ++j) {
    const auto& f = c.folds[j];
    const Eigen::VectorXd& fj = cate[j].pred;
    const Eigen::VectorXd& ej = sel.fits[j].pred;
    Fit h, k;
    if (nearly_constant(fj, f.train)) {
      diag.constant_cate_fallback = true;
      h.pred = Eigen::VectorXd::Constant(ds_.n(), c.s_double(f.train).mean());
      h.choice = "marginal";
      k.pred = Eigen::VectorXd::Constant(ds_.n(), fj(f.train).mean());
      k.choice = "constant";
    } else {
      h = fit_predict(opt_.learners.selection_given_cate, quadratic_basis(fj), c.s_double, f.train,
                      f.valid, "selection-given-CATE model");
      k = fit_predict(opt_.learners.cate_given_selection, quadratic_basis(ej), fj, f.train,
                      f.valid, "CATE-given-selection model");
    }
    diag.clipped["h_s"] += clip_rows(h.pred, opt_.clip_lo, opt_.clip_hi, f.valid);
    c.scatter(nu.f_hat, fj, j);
    c.scatter(nu.e_s_w, ej, j);
    c.scatter(nu.h_s, h.pred, j);
    c.scatter(nu.k_hat, k.pred, j);
    Cache::record(diag, "cate", cate[j].choice);
    Cache::record(diag, "selection", sel.fits[j].choice);
    Cache::record(diag, "selection_given_cate", h.choice);
    Cache::record(diag, "cate_given_selection", k.choice);
    diag.clipped["e_s_w"] += sel.clipped[j];
  }
  if (diag.constant_cate_fallback)
    diag.warnings.push_back("estimated CATE is constant; h_S and k use their constant fallbacks");
  Estimate est = assemble_lambda_collab(ds_, nu);
  warn_saturation(diag, "e_a", ds_.n_source());
  warn_saturation(diag, "e_s_w", ds_.n());
  warn_saturation(diag, "h_s", ds_.n());
  est.diagnostics = std::move(diag);
  est.selected_v = std::move(selected_v);
  est.selected_z = std::move(selected_z);
  return est;
}

Estimate TransportEstimator::theta_alt(const SubsetSpec& subset) {
  subset.validate(ds_.p());
  require_observed(ds_, subset.z_idx, "theta_alt");
  Cache& c = *cache_;
  NuisanceSet nu = NuisanceSet::nan_filled(ds_.n());
  Diagnostics diag;
  c.fill_base(nu, diag);
  const auto& cate = c.cate(subset.v_idx, true);
  const auto& sel = c.selection(subset.z_idx);
  const Eigen::MatrixXd z = ds_.covariates(subset.z_idx);
  for (std::size_t j = 0; j < c.folds.size(); ++j) {
    const auto& f = c.folds[j];
    const Eigen::VectorXd& fj = cate[j].pred;
    const Eigen::VectorXd& ej = sel.fits[j].pred;
    const Fit ef1 = fit_predict(opt_.learners.cate_given_z, z, fj, f.train_source, c.all,
                                "CATE-given-Z model");
    Eigen::VectorXd u = Eigen::VectorXd::Constant(ds_.n(), kNaN);
    for (Index i : f.train)
      u[i] = pseudo_outcome_U(ds_.s()[i], ds_.is_source(i) ? fj[i] : kNaN, ef1.pred[i], ej[i]);
    const Fit eu = fit_predict(opt_.learners.pseudo_given_z, z, u, f.train, f.valid,
                               "U-given-Z model");
    c.scatter(nu.f_hat, fj, j);
    c.scatter(nu.ef_z_s1, ef1.pred, j);
    c.scatter(nu.eu_z, eu.pred, j);
    c.scatter(nu.e_s_z, ej, j);
    Cache::record(diag, "cate", cate[j].choice);
    Cache::record(diag, "cate_given_z", ef1.choice);
    Cache::record(diag, "pseudo_given_z", eu.choice);
    Cache::record(diag, "selection", sel.fits[j].choice);
    diag.clipped["e_s_z"] += sel.clipped[j];
  }
  Estimate est = assemble_theta_alt(ds_, nu);
  warn_saturation(diag, "e_a", ds_.n_source());
  warn_saturation(diag, "e_s_z", ds_.n());
  est.diagnostics = std::move(diag);
  return est;
}

Estimate TransportEstimator::source_ate() {
  Cache& c = *cache_;
  NuisanceSet nu = NuisanceSet::nan_filled(ds_.n());
  Diagnostics diag;
  c.fill_base(nu, diag);
  Estimate est = assemble_source_ate(ds_, nu);
  warn_saturation(diag, "e_a", ds_.n_source());
  est.diagnostics = std::move(diag);
  return est;
}

Estimate TransportEstimator::run(Estimand estimand, const SubsetSpec* subset) {
  auto need = [&]() -> const SubsetSpec& {
    if (!subset) throw ArgumentError(to_string(estimand) + " requires a V/Z subset");
    return *subset;
  };
  switch (estimand) {
    case Estimand::lambda: return lambda();
    case Estimand::theta: return theta(need());
    case Estimand::lambda_collab: return lambda_collab();
    case Estimand::theta_alt: return theta_alt(need());
    case Estimand::source_ate: return source_ate();
  }
  throw ArgumentError("unknown estimand");
}

Estimate estimate_lambda(const Dataset& ds, const EstimatorOptions& options) {
  return TransportEstimator(ds, options).lambda();
}

Estimate estimate_theta(const Dataset& ds, const SubsetSpec& subset,
                        const EstimatorOptions& options) {
  return TransportEstimator(ds, options).theta(subset);
}

Estimate estimate_lambda_collab(const Dataset& ds, const EstimatorOptions& options) {
  return TransportEstimator(ds, options).lambda_collab();
}

Estimate estimate_theta_alt(const Dataset& ds, const SubsetSpec& subset,
                            const EstimatorOptions& options) {
  return TransportEstimator(ds, options).theta_alt(subset);
}

Estimate estimate_source_ate(const Dataset& ds, const EstimatorOptions& options) {
  return TransportEstimator(ds, options).source_ate();
}

}  // namespace transport
