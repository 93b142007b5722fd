#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "transport/data.hpp"
#include "transport/learners.hpp"

namespace transport {

enum class Estimand { lambda, theta, lambda_collab, theta_alt, source_ate };

/// CLI labels: lambda, theta, lambda_c, theta_alt, source_ate.
std::string to_string(Estimand e);
Estimand parse_estimand(const std::string& label);

/**
 * Per-row nuisance values entering the influence functions. Entries that an
 * estimator never reads for a row (e.g. outcome fits on target rows) may be NaN.
 */
struct NuisanceSet {
  Eigen::VectorXd e_a;      ///< P(A=1 | W, S=1)
  Eigen::VectorXd m1;       ///< E(Y | A=1, W, S=1)
  Eigen::VectorXd m0;       ///< E(Y | A=0, W, S=1)
  Eigen::VectorXd f_hat;    ///< CATE on V or W
  Eigen::VectorXd g_hat;    ///< E(Y | A=0, W, S=1)
  Eigen::VectorXd e_s_w;    ///< P(S=1 | W)
  Eigen::VectorXd e_s_z;    ///< P(S=1 | Z)
  Eigen::VectorXd h_s;      ///< P(S=1 | f)
  Eigen::VectorXd k_hat;    ///< E(f | e_S)
  Eigen::VectorXd ef_z;     ///< E{f(V) | Z}, pooled
  Eigen::VectorXd ef_z_s1;  ///< E{f(V) | Z, S=1}
  Eigen::VectorXd eu_z;     ///< E{U | Z}
  double p_hat = 0.0;       ///< fraction of target rows

  static NuisanceSet nan_filled(Index n);
};

struct NuisanceLearners {
  EnsembleSpec treatment = default_library(Family::binomial);
  EnsembleSpec outcome = default_library(Family::gaussian);
  EnsembleSpec cate = default_library(Family::gaussian);
  EnsembleSpec cate_given_z = default_library(Family::gaussian);
  /// f(W) for the collaborative estimator: the default library plus the adaptive lasso.
  EnsembleSpec cate_collab = collab_library();
  EnsembleSpec selection = default_library(Family::binomial);
  EnsembleSpec pseudo_given_z = default_library(Family::gaussian);
  /// h_S: fitted on the basis {f, f^2}.
  EnsembleSpec selection_given_cate = LearnerSpec::binomial(LearnerKind::glm_main);
  /// k: fitted on the basis {e_S, e_S^2}.
  EnsembleSpec cate_given_selection = LearnerSpec::gaussian(LearnerKind::glm_main);
  /// Interpretable mode: adaptive lasso used for V and Z selection.
  LearnerSpec selector = LearnerSpec::gaussian(LearnerKind::adaptive_lasso);
};

struct EstimatorOptions {
  NuisanceLearners learners;
  FoldAssignment folds;
  double clip_lo = 0.01;
  double clip_hi = 0.99;
  bool interpretable = false;
};

struct Diagnostics {
  int folds = 1;
  std::map<std::string, Index> clipped;
  std::map<std::string, std::vector<std::string>> learner_choices;
  std::vector<std::string> warnings;
  bool constant_cate_fallback = false;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Estimate {
  Estimand estimand = Estimand::lambda;
  double point = 0.0;
  double plug_in = 0.0;
  double se = 0.0;
  Interval ci95;
  Eigen::VectorXd eif;
  Diagnostics diagnostics;
  std::optional<std::vector<std::string>> selected_v;
  std::optional<std::vector<std::string>> selected_z;
  /// Per-row nuisance values the influence function was evaluated at.
  NuisanceSet nuisances;
};

struct Inference {
  double se = 0.0;
  Interval ci95;
};

/// se = sqrt(unbiased Var(eif) / n), ci95 = point -/+ 1.96 se.
Inference eif_inference(const Eigen::VectorXd& eif, double point);

/// Doubly robust CATE pseudo-outcome for a source row.
double pseudo_outcome_T(int a, double y, double m1, double m0, double e_a);
/// Doubly robust pseudo-outcome for E{f(V) | Z, S=1}.
double pseudo_outcome_U(int s, double f_hat, double ef_z_s1, double e_s_z);

/**
 * One row's influence function split as
 *   D = (residual + middle + 1{S=0} (target - psi)) / P(S=0).
 * Arguments that a row never uses (outcome pieces on target rows) are not read.
 */
struct EifParts {
  double residual = 0.0;
  double middle = 0.0;
  double target = 0.0;
};

EifParts eif_parts_lambda(int s, int a, double y, double e_a, double f, double g, double e_s_w);
EifParts eif_parts_theta(int s, int a, double y, double e_a, double f, double g, double e_s_z,
                         double ef_z);
EifParts eif_parts_lambda_collab(int s, int a, double y, double e_a, double f, double g,
                                 double h_s, double e_s_w, double k);
EifParts eif_parts_theta_alt(int s, int a, double y, double e_a, double f, double g,
                             double e_s_z, double ef_z_s1, double eu_z);
double eif_value(const EifParts& parts, int s, double p_target, double psi);

/// One-step assembly from per-row nuisances (no fitting).
Estimate assemble_lambda(const Dataset& ds, const NuisanceSet& nu);
Estimate assemble_theta(const Dataset& ds, const NuisanceSet& nu);
Estimate assemble_lambda_collab(const Dataset& ds, const NuisanceSet& nu);
Estimate assemble_theta_alt(const Dataset& ds, const NuisanceSet& nu);
Estimate assemble_source_ate(const Dataset& ds, const NuisanceSet& nu);

/**
 * Cross-fitted nuisance estimation shared by the estimators on one dataset.
 *
 * Fold-level fits of the treatment, outcome, CATE and selection models are
 * cached, so running several estimators on the same context refits nothing
 * twice. Not thread-safe; use one context per thread.
 */
class TransportEstimator {
 public:
  TransportEstimator(const Dataset& ds, EstimatorOptions options);
  ~TransportEstimator();
  TransportEstimator(const TransportEstimator&) = delete;
  TransportEstimator& operator=(const TransportEstimator&) = delete;

  Estimate lambda();
  Estimate theta(const SubsetSpec& subset);
  Estimate lambda_collab();
  Estimate theta_alt(const SubsetSpec& subset);
  Estimate source_ate();
  Estimate run(Estimand estimand, const SubsetSpec* subset = nullptr);

  const Dataset& data() const noexcept { return ds_; }
  const EstimatorOptions& options() const noexcept { return opt_; }

 private:
  struct Cache;
  const Dataset& ds_;
  EstimatorOptions opt_;
  std::unique_ptr<Cache> cache_;
};

Estimate estimate_lambda(const Dataset& ds, const EstimatorOptions& options);
Estimate estimate_theta(const Dataset& ds, const SubsetSpec& subset,
                        const EstimatorOptions& options);
Estimate estimate_lambda_collab(const Dataset& ds, const EstimatorOptions& options);
Estimate estimate_theta_alt(const Dataset& ds, const SubsetSpec& subset,
                            const EstimatorOptions& options);
Estimate estimate_source_ate(const Dataset& ds, const EstimatorOptions& options);

}  // namespace transport
