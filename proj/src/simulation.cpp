#include "transport/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "transport/error.hpp"

namespace transport {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

LinearForm linear(double intercept, std::vector<double> coef) {
  return LinearForm{intercept, std::move(coef)};
}

// Values that agree to ~1e-9 share a stratum.
using Key = std::vector<long long>;

Key key_of(std::initializer_list<double> values) {
  Key k;
  for (double v : values) k.push_back(std::llround(v * 1e9));
  return k;
}

Key key_of_cols(const std::vector<double>& x, const IndexSet& cols) {
  Key k;
  for (Index j : cols) k.push_back(std::llround(x[static_cast<std::size_t>(j)] * 1e9));
  return k;
}

// Ratio of sums num(x)P(x) / den(x)P(x) within each stratum.
template <class KeyFn, class NumFn, class DenFn>
std::map<Key, double> stratum_ratio(const std::vector<SupportPoint>& support, KeyFn key,
                                    NumFn num, DenFn den) {
  std::map<Key, std::pair<double, double>> acc;
  for (const auto& pt : support) {
    auto& a = acc[key(pt.x)];
    a.first += pt.prob * num(pt.x);
    a.second += pt.prob * den(pt.x);
  }
  std::map<Key, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / v.second;
  return out;
}

// Closed-form nuisances at one covariate vector.
struct Truth {
  const DgmSpec& spec;
  std::vector<SupportPoint> support;
  std::map<Key, double> e_s_z, ef_z, ef_z_s1, h_s, k;
  double q = 0.0;
  double psi = 0.0;

  explicit Truth(const DgmSpec& s) : spec(s), support(enumerate_support(s)) {
    auto sel = [&](const std::vector<double>& x) { return spec.selection(x); };
    auto eff = [&](const std::vector<double>& x) { return spec.effect(x); };
    auto one = [](const std::vector<double>&) { return 1.0; };
    auto zkey = [&](const std::vector<double>& x) { return key_of_cols(x, spec.z_idx); };
    e_s_z = stratum_ratio(support, zkey, sel, one);
    ef_z = stratum_ratio(support, zkey, eff, one);
    ef_z_s1 = stratum_ratio(
        support, zkey, [&](const std::vector<double>& x) { return sel(x) * eff(x); }, sel);
    h_s = stratum_ratio(
        support, [&](const std::vector<double>& x) { return key_of({eff(x)}); }, sel, one);
    k = stratum_ratio(
        support, [&](const std::vector<double>& x) { return key_of({sel(x)}); }, eff, one);
    for (const auto& pt : support) {
      q += pt.prob * (1.0 - spec.selection(pt.x));
      psi += pt.prob * (1.0 - spec.selection(pt.x)) * spec.effect(pt.x);
    }
    psi /= q;
  }

  double ez(const std::vector<double>& x) const { return e_s_z.at(key_of_cols(x, spec.z_idx)); }
  double fz(const std::vector<double>& x) const { return ef_z.at(key_of_cols(x, spec.z_idx)); }
  double fz1(const std::vector<double>& x) const {
    return ef_z_s1.at(key_of_cols(x, spec.z_idx));
  }
  double hs(const std::vector<double>& x) const { return h_s.at(key_of({spec.effect(x)})); }
  double kk(const std::vector<double>& x) const { return k.at(key_of({spec.selection(x)})); }
};

// Influence-function parts of every estimator at one (x, s, a, y).
struct AllParts {
  EifParts lambda, theta, collab, alt;
};

AllParts parts_at(const Truth& t, const std::vector<double>& x, int s, int a, double y) {
  const DgmSpec& sp = t.spec;
  const double e_a = sp.treatment(x);
  const double f = sp.effect(x);
  const double g = sp.baseline(x);
  const double e_w = sp.selection(x);
  return {eif_parts_lambda(s, a, y, e_a, f, g, e_w),
          eif_parts_theta(s, a, y, e_a, f, g, t.ez(x), t.fz(x)),
          eif_parts_lambda_collab(s, a, y, e_a, f, g, t.hs(x), e_w, t.kk(x)),
          eif_parts_theta_alt(s, a, y, e_a, f, g, t.ez(x), t.fz1(x), t.fz1(x))};
}

// Calls fn(x, prob, s, a) over the joint law of (X, S, A); A is integrated
// only where S=1.
template <class Fn>
void for_each_cell(const Truth& t, Fn fn) {
  for (const auto& pt : t.support) {
    const double e = t.spec.selection(pt.x);
    const double ea = t.spec.treatment(pt.x);
    fn(pt.x, pt.prob * (1.0 - e), 0, 0);
    fn(pt.x, pt.prob * e * ea, 1, 1);
    fn(pt.x, pt.prob * e * (1.0 - ea), 1, 0);
  }
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

double LinearForm::operator()(std::span<const double> x) const {
  double v = intercept;
  for (std::size_t j = 0; j < coef.size() && j < x.size(); ++j) v += coef[j] * x[j];
  return v;
}

void DgmSpec::validate() const {
  const std::size_t p = names.size();
  if (marginals.size() != p) throw ArgumentError("DGM: one marginal probability per covariate");
  for (const LinearForm* f : {&selection, &treatment, &baseline, &effect, &noise_sd}) {
    if (f->coef.size() != p) throw ArgumentError("DGM: one coefficient per covariate");
  }
  for (double m : marginals)
    if (!(m >= 0.0 && m <= 1.0)) throw ArgumentError("DGM: marginals must lie in [0, 1]");
  for (const auto& pt : enumerate_support(*this)) {
    const double s = selection(pt.x);
    const double a = treatment(pt.x);
    if (!(s >= 0.0 && s <= 1.0))
      throw ArgumentError("DGM " + std::to_string(id) + ": selection probability " + fmt(s) +
                          " outside [0, 1]");
    if (!(a >= 0.0 && a <= 1.0))
      throw ArgumentError("DGM " + std::to_string(id) + ": treatment probability outside [0, 1]");
    if (noise_sd(pt.x) < 0.0) throw ArgumentError("DGM: negative noise sd");
  }
  SubsetSpec{v_idx, z_idx, {}}.validate(static_cast<Index>(p));
}

DgmSpec builtin_dgm(int id) {
  DgmSpec d;
  d.id = id;
  switch (id) {
    case 1:
    case 2:
      d.names = {"W", "V", "Z"};
      d.marginals = {0.5, 0.33, 0.66};
      d.selection = id == 1 ? linear(0.4, {0.5, 0.0, -0.3}) : linear(0.5, {-0.4, 0.0, 0.3});
      d.baseline = linear(0.0, {1.0, 0.0, 0.0});
      d.effect = linear(1.0, {0.0, 1.0, 2.5});
      d.noise_sd = id == 1 ? linear(0.1, {0.8, 0.0, 0.0}) : linear(0.1, {0.5, 0.0, 0.0});
      d.v_idx = {1, 2};
      d.z_idx = {2};
      break;
    case 3:
      d.names = {"W", "Z"};
      d.marginals = {0.25, 0.5};
      d.selection = linear(0.8, {-0.18, -0.6});
      d.baseline = linear(1.2, {0.5, 0.5});
      d.effect = linear(0.25, {0.0, 1.0});
      d.noise_sd = linear(0.0, {0.0, 0.0});
      d.v_idx = {1};
      d.z_idx = {1};
      break;
    case 4:
      d.names = {"W", "V1", "V2", "Z"};
      d.marginals = {0.5, 0.75, 0.33, 0.25};
      d.selection = linear(0.8, {-0.25, 0.0, 0.0, -0.5});
      d.baseline = linear(1.2, {0.5, 0.0, 0.0, 0.5});
      d.effect = linear(0.25, {0.0, 0.4, -0.75, 1.0});
      d.noise_sd = linear(0.0, {0.0, 0.0, 0.0, 0.0});
      d.v_idx = {1, 2, 3};
      d.z_idx = {3};
      break;
    default:
      throw ArgumentError("unknown DGM id " + std::to_string(id) + " (valid ids: 1, 2, 3, 4)");
  }
  d.treatment = linear(0.5, std::vector<double>(d.names.size(), 0.0));
  d.validate();
  return d;
}

DgmSpec with_noise_sd(DgmSpec spec, double sd) {
  if (!(sd >= 0.0)) throw ArgumentError("noise sd must be nonnegative");
  spec.noise_sd = linear(sd, std::vector<double>(spec.names.size(), 0.0));
  return spec;
}

std::vector<SupportPoint> enumerate_support(const DgmSpec& spec) {
  const std::size_t p = spec.names.size();
  std::vector<SupportPoint> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << p); ++mask) {
    SupportPoint pt;
    pt.x.resize(p);
    pt.prob = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
      const bool on = (mask >> (p - 1 - j)) & 1U;
      pt.x[j] = on ? 1.0 : 0.0;
      pt.prob *= on ? spec.marginals[j] : 1.0 - spec.marginals[j];
    }
    out.push_back(std::move(pt));
  }
  return out;
}

Dataset sample_dgm(const DgmSpec& spec, Index n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("sample_dgm: n must be at least 1");
  spec.validate();
  const Index p = spec.p();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXi s(n), a(n);
  Eigen::VectorXd y(n);
  Eigen::MatrixXd w(n, p);
  std::vector<bool> missing(static_cast<std::size_t>(n), false);
  std::vector<double> x(static_cast<std::size_t>(p));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) {
      x[static_cast<std::size_t>(j)] =
          unif(rng) < spec.marginals[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      w(i, j) = x[static_cast<std::size_t>(j)];
    }
    s[i] = unif(rng) < spec.selection(x) ? 1 : 0;
    a[i] = unif(rng) < spec.treatment(x) ? 1 : 0;
    const double eps = normal(rng);
    const double mu = spec.baseline(x) + a[i] * spec.effect(x);
    const double sd = spec.noise_sd(x);
    if (s[i] == 1) {
      y[i] = sd == 0.0 ? mu : mu + sd * eps;
    } else {
      y[i] = kNaN;
      missing[static_cast<std::size_t>(i)] = true;
    }
  }
  return Dataset(std::move(s), std::move(a), std::move(y), std::move(missing), std::move(w),
                 spec.names);
}

double target_probability(const DgmSpec& spec) {
  double q = 0.0;
  for (const auto& pt : enumerate_support(spec)) q += pt.prob * (1.0 - spec.selection(pt.x));
  return q;
}

double true_value(const DgmSpec& spec) {
  double num = 0.0, den = 0.0;
  for (const auto& pt : enumerate_support(spec)) {
    const double w = pt.prob * (1.0 - spec.selection(pt.x));
    num += w * spec.effect(pt.x);
    den += w;
  }
  return num / den;
}

double true_source_ate(const DgmSpec& spec) {
  double num = 0.0, den = 0.0;
  for (const auto& pt : enumerate_support(spec)) {
    const double w = pt.prob * spec.selection(pt.x);
    num += w * spec.effect(pt.x);
    den += w;
  }
  return num / den;
}

BoundsResult efficiency_bounds(const DgmSpec& spec) {
  spec.validate();
  const Truth t(spec);
  BoundsResult r;
  r.q = t.q;
  const double q = t.q;
  for (const auto& pt : t.support) {
    const double e = spec.selection(pt.x);
    const double ea = spec.treatment(pt.x);
    const double sd = spec.noise_sd(pt.x);
    const double tau2 = e * sd * sd * (1.0 / ea + 1.0 / (1.0 - ea));
    r.tau2.push_back({pt.x, pt.prob, e, tau2});
    const double ez = t.ez(pt.x);
    const double dev = spec.effect(pt.x) - t.fz(pt.x);
    const double odds_w = (1.0 - e) / e;
    const double odds_z = (1.0 - ez) / ez;
    r.lambda_terms.residual += pt.prob * tau2 * odds_w * odds_w / (q * q);
    r.theta_terms.residual += pt.prob * tau2 * odds_z * odds_z / (q * q);
    r.lambda_terms.middle += pt.prob * (1.0 - ez) * dev * dev;
    r.theta_terms.middle += pt.prob * (1.0 - ez) * (1.0 - ez) * dev * dev;
    const double shift = t.fz(pt.x) - t.psi;
    r.lambda_terms.target += pt.prob * (1.0 - e) * shift * shift / (q * q);
  }
  r.theta_terms.target = r.lambda_terms.target;
  r.bound_lambda = r.lambda_terms.total();
  r.bound_theta = r.theta_terms.total();

  // Second route: E[D^2] at the truth, residual variance integrated analytically.
  for_each_cell(t, [&](const std::vector<double>& x, double prob, int s, int a) {
    const double mu = spec.baseline(x) + a * spec.effect(x);
    const double sd = spec.noise_sd(x);
    const AllParts at = parts_at(t, x, s, a, mu);
    const AllParts up = parts_at(t, x, s, a, mu + 1.0);
    auto second_moment = [&](const EifParts& p0, const EifParts& p1) {
      const double d = eif_value(p0, s, q, t.psi);
      const double slope = (p1.residual - p0.residual) / q;
      return prob * (d * d + slope * slope * sd * sd);
    };
    r.eif_variance_lambda += second_moment(at.lambda, up.lambda);
    r.eif_variance_theta += second_moment(at.theta, up.theta);
  });
  return r;
}

EifMeans enumerate_eif_means(const DgmSpec& spec) {
  spec.validate();
  const Truth t(spec);
  EifMeans m;
  for_each_cell(t, [&](const std::vector<double>& x, double prob, int s, int a) {
    const double mu = spec.baseline(x) + a * spec.effect(x);
    const AllParts p = parts_at(t, x, s, a, mu);
    m.lambda += prob * eif_value(p.lambda, s, t.q, t.psi);
    m.theta += prob * eif_value(p.theta, s, t.q, t.psi);
    m.lambda_collab += prob * eif_value(p.collab, s, t.q, t.psi);
    m.theta_alt += prob * eif_value(p.alt, s, t.q, t.psi);
  });
  return m;
}

NuisanceSet true_nuisances(const DgmSpec& spec, const Dataset& ds) {
  const Truth t(spec);
  const Index n = ds.n();
  const IndexSet cols = ds.columns(spec.names);
  NuisanceSet nu = NuisanceSet::nan_filled(n);
  std::vector<double> x(spec.names.size());
  for (Index i = 0; i < n; ++i) {
    bool complete = true;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      x[j] = ds.w()(i, cols[j]);
      complete = complete && !std::isnan(x[j]);
    }
    if (!complete) continue;
    nu.e_a[i] = spec.treatment(x);
    nu.g_hat[i] = nu.m0[i] = spec.baseline(x);
    nu.m1[i] = spec.baseline(x) + spec.effect(x);
    nu.f_hat[i] = spec.effect(x);
    nu.e_s_w[i] = spec.selection(x);
    nu.e_s_z[i] = t.ez(x);
    nu.h_s[i] = t.hs(x);
    nu.k_hat[i] = t.kk(x);
    nu.ef_z[i] = t.fz(x);
    nu.ef_z_s1[i] = nu.eu_z[i] = t.fz1(x);
  }
  nu.p_hat = static_cast<double>(ds.n_target()) / static_cast<double>(n);
  return nu;
}

std::uint64_t child_seed(std::uint64_t master, std::uint64_t replication) {
  // splitmix is a bijection, so distinct replications give distinct children.
  return splitmix(splitmix(master) + replication * 0x9E3779B97F4A7C15ULL);
}

namespace {

ReplicationRecord run_replication(const MonteCarloConfig& cfg, int r) {
  ReplicationRecord rec;
  rec.replication = r;
  rec.seed = child_seed(cfg.seed, static_cast<std::uint64_t>(r));
  const std::size_t k = cfg.estimators.size();
  rec.point.assign(k, std::nullopt);
  rec.se.assign(k, std::nullopt);
  rec.errors.assign(k, {});
  const Dataset ds = sample_dgm(cfg.spec, cfg.n, rec.seed);
  const SubsetSpec subset = cfg.spec.subset();

  EstimatorOptions opt;
  opt.learners = cfg.learners;
  opt.clip_lo = cfg.clip_lo;
  opt.clip_hi = cfg.clip_hi;
  opt.interpretable = cfg.interpretable;
  opt.folds = make_folds(cfg.n, cfg.folds, child_seed(rec.seed, 1));

  std::optional<TransportEstimator> ctx;
  std::optional<NuisanceSet> truth;
  for (std::size_t e = 0; e < k; ++e) {
    try {
      Estimate est;
      if (cfg.oracle) {
        if (!truth) truth = true_nuisances(cfg.spec, ds);
        switch (cfg.estimators[e]) {
          case Estimand::lambda: est = assemble_lambda(ds, *truth); break;
          case Estimand::theta: est = assemble_theta(ds, *truth); break;
          case Estimand::lambda_collab: est = assemble_lambda_collab(ds, *truth); break;
          case Estimand::theta_alt: est = assemble_theta_alt(ds, *truth); break;
          case Estimand::source_ate: est = assemble_source_ate(ds, *truth); break;
        }
      } else {
        if (!ctx) ctx.emplace(ds, opt);
        est = ctx->run(cfg.estimators[e], &subset);
      }
      rec.point[e] = est.point;
      rec.se[e] = est.se;
      if (est.selected_v) rec.selected_v = est.selected_v;
      if (est.selected_z) rec.selected_z = est.selected_z;
    } catch (const std::exception& ex) {
      rec.errors[e] = ex.what();
    }
  }
  return rec;
}

}  // namespace

MonteCarloResult run_monte_carlo(const MonteCarloConfig& cfg) {
  if (cfg.reps < 2) throw ArgumentError("run_monte_carlo: reps must be at least 2");
  if (cfg.n < 2) throw ArgumentError("run_monte_carlo: n must be at least 2");
  if (cfg.folds < 1 || cfg.folds > cfg.n)
    throw ArgumentError("run_monte_carlo: folds must lie in [1, n]");
  if (cfg.estimators.empty()) throw ArgumentError("run_monte_carlo: no estimators requested");
  const auto lambda_pos =
      std::find(cfg.estimators.begin(), cfg.estimators.end(), Estimand::lambda);
  if (cfg.rel_eff && lambda_pos == cfg.estimators.end())
    throw ArgumentError("relative efficiency requires lambda in the estimator set");
  cfg.spec.validate();

  MonteCarloResult out;
  out.truth = true_value(cfg.spec);
  out.replications.resize(static_cast<std::size_t>(cfg.reps));

  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  auto worker = [&]() {
    for (int r = next++; r < cfg.reps; r = next++) {
      out.replications[static_cast<std::size_t>(r)] = run_replication(cfg, r);
      const int d = ++done;
      if (cfg.progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        cfg.progress(d, cfg.reps);
      }
    }
  };
  const int jobs = std::max(1, std::min(cfg.jobs, cfg.reps));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const double dn = static_cast<double>(cfg.n);
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    MetricsRow row;
    row.estimator = to_string(cfg.estimators[e]);
    row.n = cfg.n;
    row.truth =
        cfg.estimators[e] == Estimand::source_ate ? true_source_ate(cfg.spec) : out.truth;
    std::vector<double> pts, ses;
    for (const auto& rec : out.replications) {
      if (rec.point[e] && std::isfinite(*rec.point[e]) && std::isfinite(*rec.se[e])) {
        pts.push_back(*rec.point[e]);
        ses.push_back(*rec.se[e]);
      } else {
        ++row.failures;
      }
    }
    row.replications = static_cast<int>(pts.size());
    const double m = static_cast<double>(pts.size());
    if (pts.size() >= 2) {
      double sum = 0.0, cover = 0.0, est_var = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        sum += pts[i];
        if (std::abs(pts[i] - row.truth) <= 1.96 * ses[i]) cover += 1.0;
        est_var += dn * ses[i] * ses[i];
      }
      row.mean_point = sum / m;
      double ss = 0.0;
      for (double v : pts) ss += (v - row.mean_point) * (v - row.mean_point);
      const double var = ss / (m - 1.0);
      row.abs_bias = std::abs(row.mean_point - row.truth);
      row.mc_se = std::sqrt(var / m);
      row.coverage95 = cover / m;
      row.n_times_var = dn * var;
      row.mean_est_var = est_var / m;
    } else {
      row.mean_point = row.abs_bias = row.mc_se = row.coverage95 = kNaN;
      row.n_times_var = row.mean_est_var = kNaN;
    }
    out.rows.push_back(row);
  }
  if (cfg.rel_eff) {
    const double base =
        out.rows[static_cast<std::size_t>(lambda_pos - cfg.estimators.begin())].mean_est_var;
    for (auto& row : out.rows) row.rel_eff = row.mean_est_var / base;
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "estimator,n,truth,mean,abs_bias,mc_se,coverage95,n_times_var,mean_est_var,rel_eff,"
        "replications,failures\n";
  for (const auto& r : rows) {
    os << r.estimator << ',' << r.n << ',' << fmt(r.truth) << ',' << fmt(r.mean_point) << ','
       << fmt(r.abs_bias) << ',' << fmt(r.mc_se) << ',' << fmt(r.coverage95) << ','
       << fmt(r.n_times_var) << ',' << fmt(r.mean_est_var) << ','
       << (r.rel_eff ? fmt(*r.rel_eff) : "NA") << ',' << r.replications << ',' << r.failures
       << '\n';
  }
  return os.str();
}

std::string metrics_table(const std::vector<MetricsRow>& rows) {
  const std::vector<std::string> head{"estimator", "n",        "abs_bias", "coverage",
                                      "n*var",     "mean var", "rel_eff",  "reps"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& r : rows) {
    cells.push_back({r.estimator, std::to_string(r.n), fixed(r.abs_bias, 4),
                     fixed(r.coverage95, 3), fixed(r.n_times_var, 2), fixed(r.mean_est_var, 2),
                     r.rel_eff ? fixed(*r.rel_eff, 2) : "-",
                     std::to_string(r.replications) +
                         (r.failures ? " (" + std::to_string(r.failures) + " failed)" : "")});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::ostringstream os;
  for (std::size_t li = 0; li < cells.size(); ++li) {
    for (std::size_t c = 0; c < cells[li].size(); ++c) {
      const auto& v = cells[li][c];
      if (c == 0) {
        os << v << std::string(width[c] - v.size(), ' ');
      } else {
        os << "  " << std::string(width[c] - v.size(), ' ') << v;
      }
    }
    os << '\n';
    if (li == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  return os.str();
}

}  // namespace transport
