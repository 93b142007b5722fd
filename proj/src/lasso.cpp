#include <algorithm>
#include <cmath>
#include <limits>

#include "transport/error.hpp"
#include "transport/learners.hpp"

namespace transport {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

struct Standardized {
  Eigen::MatrixXd x;  // n x q, penalized columns only
  Eigen::VectorXd y;  // centered
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  double y_mean = 0.0;
  IndexSet keep;       // input columns retained
};

Standardized standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Index n = x.rows();
  Standardized st;
  st.center = x.colwise().mean().transpose();
  st.scale.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double sd =
        std::sqrt((x.col(j).array() - st.center[j]).square().sum() / static_cast<double>(n));
    st.scale[j] = sd;
    if (sd > 1e-12 * (1.0 + std::abs(st.center[j]))) st.keep.push_back(j);
  }
  st.x.resize(n, static_cast<Index>(st.keep.size()));
  for (std::size_t k = 0; k < st.keep.size(); ++k) {
    const Index j = st.keep[k];
    st.x.col(static_cast<Index>(k)) = (x.col(j).array() - st.center[j]) / st.scale[j];
  }
  st.y_mean = y.mean();
  st.y = y.array() - st.y_mean;
  return st;
}

Eigen::VectorXd adaptive_weights(const Eigen::MatrixXd& gram, const Eigen::VectorXd& cross,
                                 double ridge, double gamma) {
  Eigen::MatrixXd a = gram;
  a.diagonal().array() += ridge;
  const Eigen::VectorXd b0 = a.ldlt().solve(cross);
  Eigen::VectorXd w(b0.size());
  for (Index j = 0; j < b0.size(); ++j) {
    const double mag = std::abs(b0[j]);
    w[j] = mag > 0 ? std::pow(mag, -gamma) : kInf;
  }
  return w;
}

// Coordinate descent on (1/2) b'Gb - c'b + lambda * sum_j w_j |b_j|, warm-started from `beta`.
void coordinate_descent(const Eigen::MatrixXd& gram, const Eigen::VectorXd& cross,
                        const Eigen::VectorXd& weights, double lambda, Eigen::VectorXd& beta,
                        double tol, int max_sweeps) {
  const Index q = beta.size();
  Eigen::VectorXd grad = cross - gram * beta;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double delta_max = 0.0;
    for (Index j = 0; j < q; ++j) {
      const double gjj = gram(j, j);
      if (!(gjj > 0) || weights[j] == kInf) {
        if (beta[j] != 0.0) {
          grad += gram.col(j) * beta[j];
          beta[j] = 0.0;
        }
        continue;
      }
      const double z = grad[j] + gjj * beta[j];
      const double updated = soft_threshold(z, lambda * weights[j]) / gjj;
      const double delta = updated - beta[j];
      if (delta != 0.0) {
        grad -= gram.col(j) * delta;
        beta[j] = updated;
        delta_max = std::max(delta_max, std::abs(delta) * std::sqrt(gjj));
      }
    }
    if (delta_max < tol) return;
  }
}

std::vector<double> lambda_grid(const Eigen::VectorXd& cross, const Eigen::VectorXd& weights,
                                int size) {
  double lmax = 0.0;
  for (Index j = 0; j < cross.size(); ++j)
    if (weights[j] != kInf) lmax = std::max(lmax, std::abs(cross[j]) / weights[j]);
  if (!(lmax > 0)) lmax = 1.0;
  std::vector<double> out(static_cast<std::size_t>(size));
  if (size == 1) {
    out[0] = lmax;
    return out;
  }
  const double ratio = 1e-4;
  for (int k = 0; k < size; ++k) {
    out[static_cast<std::size_t>(k)] =
        lmax * std::pow(ratio, static_cast<double>(k) / static_cast<double>(size - 1));
  }
  return out;
}

std::vector<Eigen::VectorXd> solve_path(const Eigen::MatrixXd& gram, const Eigen::VectorXd& cross,
                                        const Eigen::VectorXd& weights,
                                        const std::vector<double>& lambdas, double tol,
                                        int max_sweeps) {
  std::vector<Eigen::VectorXd> path;
  path.reserve(lambdas.size());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(cross.size());
  for (double lam : lambdas) {
    coordinate_descent(gram, cross, weights, lam, beta, tol, max_sweeps);
    path.push_back(beta);
  }
  return path;
}

}  // namespace

FittedModel fit_adaptive_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const AdaptiveLassoOptions& opt) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (y.size() != n) throw ArgumentError("fit_adaptive_lasso: rows of X and y differ");
  if (!(opt.gamma > 0)) throw ArgumentError("fit_adaptive_lasso: gamma must be positive");
  const bool fixed_lambda = opt.lambdas.size() == 1;
  if (!fixed_lambda && (opt.cv_folds < 2 || n < opt.cv_folds))
    throw ArgumentError("fit_adaptive_lasso requires rows >= cv_folds >= 2");

  LearnerSpec spec;
  spec.kind = LearnerKind::adaptive_lasso;
  spec.family = opt.family;
  spec.link = Link::identity;
  spec.gamma = opt.gamma;
  spec.lambda_grid = opt.lambda_grid;
  spec.cv_folds = opt.cv_folds;
  spec.seed = opt.seed;

  LassoInfo info;
  Standardized st = standardize(x, y);
  info.center = st.center;
  info.scale = st.scale;
  info.penalized = st.keep;
  for (Index j = 0; j < p; ++j) {
    if (std::find(st.keep.begin(), st.keep.end(), j) == st.keep.end())
      info.warnings.push_back("column " + std::to_string(j) +
                              " is constant and was excluded from the penalized basis");
  }

  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p + 1);
  const double y_var = st.y.squaredNorm() / static_cast<double>(n);
  if (!(y_var > 1e-24 * (1.0 + st.y_mean * st.y_mean)) || st.keep.empty()) {
    if (!(y_var > 1e-24 * (1.0 + st.y_mean * st.y_mean)))
      info.warnings.push_back("response has zero variance; returning intercept-only model");
    coef[0] = st.y_mean;
    info.penalty_weights = Eigen::VectorXd::Constant(static_cast<Index>(st.keep.size()), kInf);
    return FittedModel(spec, p, coef, {}, std::move(info));
  }

  const double dn = static_cast<double>(n);
  const Eigen::MatrixXd gram = st.x.transpose() * st.x / dn;
  const Eigen::VectorXd cross = st.x.transpose() * st.y / dn;
  const Eigen::VectorXd weights = adaptive_weights(gram, cross, opt.ridge_penalty, opt.gamma);
  const std::vector<double> lambdas =
      opt.lambdas.empty() ? lambda_grid(cross, weights, opt.lambda_grid) : opt.lambdas;

  std::size_t chosen = 0;
  if (lambdas.size() > 1) {
    const FoldAssignment cv = make_folds(n, opt.cv_folds, opt.seed);
    std::vector<double> err(lambdas.size(), 0.0);
    for (int j = 0; j < opt.cv_folds; ++j) {
      const IndexSet tr = cv.training_rows(j);
      const IndexSet va = cv.validation_rows(j);
      const Eigen::MatrixXd xtr = x(tr, st.keep);
      Standardized sf = standardize(xtr, y(tr));
      // Columns constant within the training fold get an infinite weight.
      Eigen::MatrixXd xs = Eigen::MatrixXd::Zero(xtr.rows(), xtr.cols());
      for (Index k : sf.keep) xs.col(k) = (xtr.col(k).array() - sf.center[k]) / sf.scale[k];
      const double dtr = static_cast<double>(tr.size());
      const Eigen::MatrixXd g = xs.transpose() * xs / dtr;
      const Eigen::VectorXd c = xs.transpose() * sf.y / dtr;
      Eigen::VectorXd wf = adaptive_weights(g, c, opt.ridge_penalty, opt.gamma);
      for (Index k = 0; k < wf.size(); ++k)
        if (std::find(sf.keep.begin(), sf.keep.end(), k) == sf.keep.end()) wf[k] = kInf;
      const auto path = solve_path(g, c, wf, lambdas, opt.tol, opt.max_sweeps);
      const Eigen::MatrixXd xva = x(va, st.keep);
      Eigen::MatrixXd xvs(xva.rows(), xva.cols());
      for (Index k = 0; k < xva.cols(); ++k) {
        const double sc = sf.scale[k] > 0 ? sf.scale[k] : 1.0;
        xvs.col(k) = (xva.col(k).array() - sf.center[k]) / sc;
      }
      const Eigen::VectorXd yva = y(va);
      for (std::size_t l = 0; l < lambdas.size(); ++l) {
        const Eigen::VectorXd pred = (xvs * path[l]).array() + sf.y_mean;
        err[l] += (yva - pred).squaredNorm();
      }
    }
    for (std::size_t l = 0; l < err.size(); ++l) {
      err[l] /= dn;
      if (err[l] < err[chosen]) chosen = l;
    }
    info.cv_error = err;
  }

  const std::vector<double> path_lambdas(lambdas.begin(),
                                         lambdas.begin() + static_cast<long>(chosen) + 1);
  const auto path = solve_path(gram, cross, weights, path_lambdas, opt.tol, opt.max_sweeps);
  const Eigen::VectorXd& beta = path.back();

  IndexSet active;
  double intercept = st.y_mean;
  for (std::size_t k = 0; k < st.keep.size(); ++k) {
    const Index j = st.keep[k];
    const double b = beta[static_cast<Index>(k)];
    if (b == 0.0) continue;
    coef[1 + j] = b / st.scale[j];
    intercept -= coef[1 + j] * st.center[j];
    active.push_back(j);
  }
  coef[0] = intercept;
  info.lambda = lambdas[chosen];
  info.lambda_path = lambdas;
  info.penalty_weights = weights;
  return FittedModel(spec, p, coef, std::move(active), std::move(info));
}

}  // namespace transport
