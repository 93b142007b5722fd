#include "transport/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "transport/error.hpp"

namespace transport {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kIdentityFloor = 1e-9;
// Fitted probabilities closer than this to 0 or 1 mark a separated fit.
constexpr double kSeparationEps = 1e-6;

double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd unit_weights_if_empty(const Eigen::VectorXd& w, Index n) {
  if (w.size() == 0) return Eigen::VectorXd::Ones(n);
  if (w.size() != n) throw ArgumentError("weights length does not match rows");
  if ((w.array() < 0.0).any()) throw ArgumentError("weights must be nonnegative");
  return w;
}

// Solves the normalized normal equations; falls back to a 1e-8 ridge jitter
// when the matrix is numerically singular.
Eigen::VectorXd solve_normal(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, bool& jittered) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() == Eigen::Success) {
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax > 0 && d.minCoeff() > 1e-11 * dmax) return ldlt.solve(b);
  }
  jittered = true;
  Eigen::MatrixXd aj = a;
  aj.diagonal().array() += 1e-8;
  return Eigen::LDLT<Eigen::MatrixXd>(aj).solve(b);
}

Eigen::VectorXd mean_of(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef,
                        Family family, Link link) {
  Eigen::VectorXd eta = design * coef;
  if (family == Family::gaussian) return eta;
  if (link == Link::logit) return eta.unaryExpr([](double v) { return expit(v); });
  return eta.cwiseMax(kIdentityFloor).cwiseMin(1.0 - kIdentityFloor);
}

double binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                         const Eigen::VectorXd& w) {
  double dev = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double m = std::clamp(mu[i], kProbFloor, 1.0 - kProbFloor);
    dev -= w[i] * (y[i] * std::log(m) + (1.0 - y[i]) * std::log(1.0 - m));
  }
  return dev;
}

double candidate_loss(Family family, const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  double loss = 0.0;
  if (family == Family::gaussian) {
    loss = (y - pred).squaredNorm();
  } else {
    for (Index i = 0; i < y.size(); ++i) {
      const double m = std::clamp(pred[i], kProbFloor, 1.0 - kProbFloor);
      loss -= y[i] * std::log(m) + (1.0 - y[i]) * std::log(1.0 - m);
    }
  }
  return loss;
}

// Distinct input rows with counts and mean responses. A weighted fit on these
// has the same score equations as the fit on the raw rows.
struct GroupedRows {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

std::optional<GroupedRows> group_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Index n = x.rows();
  const Index p = x.cols();
  const Index limit = n / 4;
  if (n < 64) return std::nullopt;
  std::map<std::vector<double>, Index> index;
  std::vector<Index> group_of(static_cast<std::size_t>(n));
  std::vector<Index> first;
  std::vector<double> key(static_cast<std::size_t>(p));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) key[static_cast<std::size_t>(j)] = x(i, j);
    auto [it, inserted] = index.try_emplace(key, static_cast<Index>(first.size()));
    if (inserted) {
      first.push_back(i);
      if (static_cast<Index>(first.size()) > limit) return std::nullopt;
    }
    group_of[static_cast<std::size_t>(i)] = it->second;
  }
  const Index g = static_cast<Index>(first.size());
  GroupedRows out{x(first, Eigen::all), Eigen::VectorXd::Zero(g), Eigen::VectorXd::Zero(g)};
  for (Index i = 0; i < n; ++i) {
    const Index k = group_of[static_cast<std::size_t>(i)];
    out.y[k] += y[i];
    out.w[k] += 1.0;
  }
  out.y.array() /= out.w.array();
  return out;
}

}  // namespace

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::intercept: return "intercept";
    case LearnerKind::glm_main: return "glm_main";
    case LearnerKind::glm_twoway: return "glm_twoway";
    case LearnerKind::adaptive_lasso: return "adaptive_lasso";
  }
  return "?";
}

std::string to_string(Family family) {
  return family == Family::gaussian ? "gaussian" : "binomial";
}

std::string to_string(Link link) { return link == Link::identity ? "identity" : "logit"; }

LearnerKind parse_learner_kind(const std::string& text) {
  for (auto k : {LearnerKind::intercept, LearnerKind::glm_main, LearnerKind::glm_twoway,
                 LearnerKind::adaptive_lasso}) {
    if (to_string(k) == text) return k;
  }
  throw ArgumentError("unknown learner kind '" + text + "'");
}

Family parse_family(const std::string& text) {
  if (text == "gaussian") return Family::gaussian;
  if (text == "binomial") return Family::binomial;
  throw ArgumentError("unknown family '" + text + "'");
}

Link parse_link(const std::string& text) {
  if (text == "identity") return Link::identity;
  if (text == "logit") return Link::logit;
  throw ArgumentError("unknown link '" + text + "'");
}

void LearnerSpec::validate() const {
  if (!(tol > 0)) throw ArgumentError("learner tol must be positive");
  if (max_iter < 1) throw ArgumentError("learner max_iter must be >= 1");
  if (family == Family::gaussian && link != Link::identity)
    throw ArgumentError("gaussian learners use the identity link");
  if (kind == LearnerKind::adaptive_lasso) {
    if (link != Link::identity)
      throw ArgumentError("adaptive_lasso fits squared error; use the identity link");
    if (!(gamma > 0)) throw ArgumentError("adaptive_lasso gamma must be positive");
    if (cv_folds < 2) throw ArgumentError("adaptive_lasso cv_folds must be >= 2");
    if (lambda_grid < 1) throw ArgumentError("adaptive_lasso lambda_grid must be >= 1");
  }
}

std::string LearnerSpec::name() const {
  std::string out = to_string(kind);
  if (family == Family::binomial) out += link == Link::logit ? "[logit]" : "[identity]";
  return out;
}

LearnerSpec LearnerSpec::gaussian(LearnerKind kind) {
  LearnerSpec s;
  s.kind = kind;
  s.family = Family::gaussian;
  s.link = Link::identity;
  return s;
}

LearnerSpec LearnerSpec::binomial(LearnerKind kind, Link link) {
  LearnerSpec s;
  s.kind = kind;
  s.family = Family::binomial;
  s.link = kind == LearnerKind::adaptive_lasso ? Link::identity : link;
  return s;
}

void EnsembleSpec::validate() const {
  if (candidates.empty()) throw ArgumentError("ensemble needs at least one candidate");
  if (candidates.size() > 1 && selection_folds < 2)
    throw ArgumentError("ensemble selection folds must be >= 2");
  for (const auto& c : candidates) {
    c.validate();
    if (c.family != candidates.front().family)
      throw ArgumentError("ensemble candidates must share a family");
  }
}

Family EnsembleSpec::family() const {
  return candidates.empty() ? Family::gaussian : candidates.front().family;
}

FittedModel::FittedModel(LearnerSpec spec, Index n_inputs, Eigen::VectorXd coefficients,
                         IndexSet active, std::optional<LassoInfo> lasso)
    : spec_(std::move(spec)),
      n_inputs_(n_inputs),
      coef_(std::move(coefficients)),
      active_(std::move(active)),
      lasso_(std::move(lasso)) {}

Eigen::VectorXd FittedModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != n_inputs_) {
    throw ArgumentError("predict: expected " + std::to_string(n_inputs_) + " input columns, got " +
                        std::to_string(x.cols()));
  }
  Eigen::VectorXd mu = mean_of(design_matrix(x, spec_.kind), coef_, spec_.family, spec_.link);
  if (spec_.family == Family::binomial) mu = mu.cwiseMax(kProbFloor).cwiseMin(1.0 - kProbFloor);
  return mu;
}

Index basis_size(Index p, LearnerKind kind) {
  switch (kind) {
    case LearnerKind::intercept: return 1;
    case LearnerKind::glm_main:
    case LearnerKind::adaptive_lasso: return 1 + p;
    case LearnerKind::glm_twoway: return 1 + p + p * (p - 1) / 2;
  }
  return 1;
}

Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& x, LearnerKind kind) {
  const Index n = x.rows();
  const Index p = x.cols();
  Eigen::MatrixXd d(n, basis_size(p, kind));
  d.col(0).setOnes();
  if (kind == LearnerKind::intercept) return d;
  d.middleCols(1, p) = x;
  if (kind != LearnerKind::glm_twoway) return d;
  Index c = 1 + p;
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k) d.col(c++) = x.col(j).cwiseProduct(x.col(k));
  return d;
}

Eigen::VectorXd glm_score(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& coef, Family family, Link link,
                          const Eigen::VectorXd& weights) {
  const Eigen::VectorXd w = unit_weights_if_empty(weights, y.size());
  const Eigen::VectorXd mu = mean_of(design, coef, family, link);
  Eigen::VectorXd r = w.cwiseProduct(y - mu);
  if (family == Family::binomial && link == Link::identity) {
    r.array() /= (mu.array() * (1.0 - mu.array()));
  }
  return design.transpose() * r / w.sum();
}

GlmFit fit_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, Family family,
               Link link, const Eigen::VectorXd& weights, int max_iter, double tol) {
  const Index n = design.rows();
  if (n < 1) throw ArgumentError("fit_glm: design has zero rows");
  if (y.size() != n) throw ArgumentError("fit_glm: response length does not match design rows");
  if (family == Family::gaussian && link != Link::identity)
    throw ArgumentError("fit_glm: gaussian family supports the identity link only");
  if (family == Family::binomial && ((y.array() < 0.0).any() || (y.array() > 1.0).any()))
    throw ArgumentError("fit_glm: binomial responses must lie in [0, 1]");
  const Eigen::VectorXd w = unit_weights_if_empty(weights, n);
  const double wsum = w.sum();
  if (!(wsum > 0)) throw ArgumentError("fit_glm: weights sum to zero");

  GlmFit fit;
  auto wls = [&](const Eigen::VectorXd& ww, const Eigen::VectorXd& z) {
    const Eigen::MatrixXd xtw = design.transpose() * ww.asDiagonal();
    Eigen::MatrixXd a = xtw * design / wsum;
    Eigen::VectorXd b = xtw * z / wsum;
    return solve_normal(a, b, fit.jittered);
  };

  if (family == Family::gaussian) {
    fit.coefficients = wls(w, y);
    fit.iterations = 1;
    return fit;
  }

  Eigen::VectorXd coef;
  if (link == Link::logit) {
    const Eigen::VectorXd mu0 = (y.array() + 0.5) / 2.0;
    const Eigen::VectorXd z0 = (mu0.array() / (1.0 - mu0.array())).log();
    const Eigen::VectorXd w0 = w.array() * mu0.array() * (1.0 - mu0.array());
    coef = wls(w0, z0);
  } else {
    coef = wls(w, y);
  }

  auto deviance = [&](const Eigen::VectorXd& c) {
    return binomial_deviance(y, mean_of(design, c, family, link), w);
  };
  double dev = deviance(coef);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd mu = mean_of(design, coef, family, link);
    const Eigen::VectorXd v = mu.array() * (1.0 - mu.array());
    Eigen::VectorXd r = w.cwiseProduct(y - mu);
    Eigen::VectorXd hw;
    if (link == Link::logit) {
      hw = w.cwiseProduct(v);
    } else {
      r.array() /= v.array();
      hw = w.array() / v.array();
    }
    const Eigen::VectorXd score = design.transpose() * r / wsum;
    fit.iterations = it;
    if (score.cwiseAbs().maxCoeff() <= tol) {
      fit.coefficients = coef;
      return fit;
    }
    const Eigen::MatrixXd xth = design.transpose() * hw.asDiagonal();
    const Eigen::MatrixXd h = xth * design / wsum;
    Eigen::VectorXd step = solve_normal(h, score, fit.jittered);
    Eigen::VectorXd next = coef + step;
    double next_dev = deviance(next);
    for (int half = 0; half < 30 && !(next_dev <= dev + 1e-12 * (1.0 + std::abs(dev))); ++half) {
      step *= 0.5;
      next = coef + step;
      next_dev = deviance(next);
    }
    coef = next;
    dev = next_dev;
  }
  const Eigen::VectorXd final_score = glm_score(design, y, coef, family, link, w);
  if (final_score.cwiseAbs().maxCoeff() <= tol) {
    fit.coefficients = coef;
    fit.iterations = max_iter;
    return fit;
  }
  std::ostringstream msg;
  msg << "IRLS did not converge in " << max_iter << " iterations (score "
      << final_score.cwiseAbs().maxCoeff() << ")";
  throw ConvergenceError(msg.str(), coef);
}

FittedModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y) {
  spec.validate();
  if (x.rows() != y.size()) throw ArgumentError("fit_learner: rows of X and y differ");
  if (spec.kind == LearnerKind::adaptive_lasso) {
    AdaptiveLassoOptions opt;
    opt.gamma = spec.gamma;
    opt.lambda_grid = spec.lambda_grid;
    opt.cv_folds = spec.cv_folds;
    opt.seed = spec.seed;
    opt.family = spec.family;
    return fit_adaptive_lasso(x, y, opt);
  }
  GlmFit g;
  if (const auto grouped = group_rows(x, y)) {
    g = fit_glm(design_matrix(grouped->x, spec.kind), grouped->y, spec.family, spec.link,
                grouped->w, spec.max_iter, spec.tol);
  } else {
    g = fit_glm(design_matrix(x, spec.kind), y, spec.family, spec.link, {}, spec.max_iter,
                spec.tol);
  }
  FittedModel m(spec, x.cols(), std::move(g.coefficients));
  m.iterations = g.iterations;
  return m;
}

namespace {

// Ensemble members with logit fits that separate the training rows are dropped.
FittedModel fit_candidate(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& y) {
  FittedModel m = fit_learner(spec, x, y);
  if (spec.family == Family::binomial && spec.link == Link::logit &&
      spec.kind != LearnerKind::intercept) {
    const Eigen::VectorXd mu = m.predict(x);
    if ((mu.array() < kSeparationEps).any() || (mu.array() > 1.0 - kSeparationEps).any())
      throw ConvergenceError("fitted probabilities numerically 0 or 1", m.coefficients());
  }
  return m;
}

}  // namespace

FittedModel fit_ensemble(const EnsembleSpec& spec, const Eigen::MatrixXd& x,
                         const Eigen::VectorXd& y) {
  spec.validate();
  const Index n = x.rows();
  if (n < 1) throw ArgumentError("fit_ensemble: no rows");
  if (spec.candidates.size() == 1) {
    FittedModel m = fit_learner(spec.candidates.front(), x, y);
    m.selected_candidate = 0;
    return m;
  }

  const int folds = std::min<Index>(spec.selection_folds, n);
  const FoldAssignment cv = make_folds(n, folds, spec.seed);
  std::vector<IndexSet> train(static_cast<std::size_t>(folds));
  std::vector<IndexSet> valid(static_cast<std::size_t>(folds));
  for (Index i = 0; i < n; ++i) {
    for (int j = 0; j < folds; ++j) {
      (cv.fold(i) == j ? valid : train)[static_cast<std::size_t>(j)].push_back(i);
    }
  }

  std::vector<double> losses;
  std::vector<std::string> failures;
  for (const auto& cand : spec.candidates) {
    double loss = 0.0;
    try {
      for (int j = 0; j < folds; ++j) {
        const auto& tr = train[static_cast<std::size_t>(j)];
        const auto& va = valid[static_cast<std::size_t>(j)];
        if (tr.empty()) throw FoldError("empty selection fold");
        const Eigen::MatrixXd xtr = x(tr, Eigen::all);
        const Eigen::VectorXd ytr = y(tr);
        const FittedModel m = fit_candidate(cand, xtr, ytr);
        loss += candidate_loss(cand.family, y(va), m.predict(x(va, Eigen::all)));
      }
      if (!std::isfinite(loss)) throw Error("non-finite cross-validated loss");
    } catch (const Error& e) {
      loss = std::numeric_limits<double>::infinity();
      failures.push_back(cand.name() + ": " + e.what());
    }
    losses.push_back(loss / static_cast<double>(n));
  }

  // Ties go to the earliest candidate; a refit failure moves on to the next best.
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  for (const std::size_t best : order) {
    if (!std::isfinite(losses[best])) break;
    try {
      FittedModel m = fit_candidate(spec.candidates[best], x, y);
      m.selected_candidate = best;
      m.cv_losses = losses;
      return m;
    } catch (const Error& e) {
      failures.push_back(spec.candidates[best].name() + " (refit): " + e.what());
    }
  }
  std::string msg = "every ensemble candidate failed:";
  for (const auto& f : failures) msg += " [" + f + "]";
  throw Error(msg);
}

ClipResult clip_probabilities(const Eigen::VectorXd& p, double lo, double hi) {
  if (!(lo > 0.0 && lo < hi && hi < 1.0))
    throw ArgumentError("clip bounds must satisfy 0 < lo < hi < 1");
  ClipResult out{p, 0};
  for (Index i = 0; i < p.size(); ++i) {
    const double v = p[i];
    if (std::isnan(v)) continue;
    if (v < lo) {
      out.values[i] = lo;
      ++out.clipped;
    } else if (v > hi) {
      out.values[i] = hi;
      ++out.clipped;
    }
  }
  return out;
}

Eigen::VectorXd cross_fit(const EnsembleSpec& learner, const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& y, const std::vector<bool>& row_filter,
                          const FoldAssignment& folds) {
  const Index n = x.rows();
  if (y.size() != n || static_cast<Index>(row_filter.size()) != n || folds.n() != n)
    throw ArgumentError("cross_fit: inputs have inconsistent lengths");
  Eigen::VectorXd out(n);
  for (int j = 0; j < folds.folds(); ++j) {
    IndexSet train;
    for (Index i : folds.training_rows(j))
      if (row_filter[static_cast<std::size_t>(i)]) train.push_back(i);
    if (train.empty()) {
      throw FoldError("cross_fit: fold " + std::to_string(j) +
                      " has no training rows passing the filter; use fewer folds or J=1");
    }
    const FittedModel m = fit_ensemble(learner, x(train, Eigen::all), y(train));
    const IndexSet valid = folds.validation_rows(j);
    out(valid) = m.predict(x(valid, Eigen::all));
  }
  return out;
}

EnsembleSpec default_library(Family family, int selection_folds, std::uint64_t seed) {
  auto make = [family](LearnerKind k) {
    return family == Family::gaussian ? LearnerSpec::gaussian(k) : LearnerSpec::binomial(k);
  };
  return EnsembleSpec({make(LearnerKind::intercept), make(LearnerKind::glm_main),
                       make(LearnerKind::glm_twoway)},
                      selection_folds, seed);
}

EnsembleSpec collab_library(int selection_folds, std::uint64_t seed) {
  EnsembleSpec spec = default_library(Family::gaussian, selection_folds, seed);
  spec.candidates.push_back(LearnerSpec::gaussian(LearnerKind::adaptive_lasso));
  return spec;
}

}  // namespace transport
