#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "transport/data.hpp"

namespace transport {

enum class LearnerKind { intercept, glm_main, glm_twoway, adaptive_lasso };
enum class Family { gaussian, binomial };
enum class Link { identity, logit };

std::string to_string(LearnerKind kind);
std::string to_string(Family family);
std::string to_string(Link link);
LearnerKind parse_learner_kind(const std::string& text);
Family parse_family(const std::string& text);
Link parse_link(const std::string& text);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::glm_main;
  Family family = Family::gaussian;
  Link link = Link::identity;
  double gamma = 1.0;       ///< adaptive-lasso weight exponent
  int lambda_grid = 50;     ///< adaptive-lasso grid size
  int cv_folds = 5;         ///< adaptive-lasso lambda selection folds
  int max_iter = 100;
  double tol = 1e-9;
  std::uint64_t seed = 20240917;

  void validate() const;
  std::string name() const;

  static LearnerSpec gaussian(LearnerKind kind);
  static LearnerSpec binomial(LearnerKind kind, Link link = Link::logit);
};

/// Candidate library for the cross-validated discrete selector.
struct EnsembleSpec {
  std::vector<LearnerSpec> candidates;
  int selection_folds = 5;
  std::uint64_t seed = 20240917;

  EnsembleSpec() = default;
  EnsembleSpec(std::vector<LearnerSpec> cands, int folds = 5, std::uint64_t seed_ = 20240917)
      : candidates(std::move(cands)), selection_folds(folds), seed(seed_) {}
  EnsembleSpec(const LearnerSpec& single)  // NOLINT: a lone learner is a one-candidate library
      : candidates{single} {}

  void validate() const;
  Family family() const;
};

/// Metadata produced by the adaptive lasso; lives on the standardized scale.
struct LassoInfo {
  double lambda = 0.0;
  Eigen::VectorXd penalty_weights;  ///< one per penalized column
  IndexSet penalized;               ///< input columns that entered the penalized basis
  Eigen::VectorXd center;           ///< column means of the inputs
  Eigen::VectorXd scale;            ///< column population sds of the inputs
  std::vector<double> lambda_path;
  std::vector<double> cv_error;
  std::vector<std::string> warnings;
};

/**
 * Coefficients over an explicit basis (intercept, mains, optional pairwise
 * products) built from the raw inputs the model was fitted on.
 */
class FittedModel {
 public:
  FittedModel() = default;
  FittedModel(LearnerSpec spec, Index n_inputs, Eigen::VectorXd coefficients,
              IndexSet active = {}, std::optional<LassoInfo> lasso = std::nullopt);

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  const LearnerSpec& spec() const noexcept { return spec_; }
  Index n_inputs() const noexcept { return n_inputs_; }
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
  /// Input columns with a nonzero main-effect coefficient (lasso only; empty otherwise).
  const IndexSet& active_set() const noexcept { return active_; }
  const std::optional<LassoInfo>& lasso() const noexcept { return lasso_; }

  /// Ensemble bookkeeping: which candidate won and every candidate's CV loss.
  std::optional<std::size_t> selected_candidate;
  std::vector<double> cv_losses;
  int iterations = 0;

 private:
  LearnerSpec spec_;
  Index n_inputs_ = 0;
  Eigen::VectorXd coef_;
  IndexSet active_;
  std::optional<LassoInfo> lasso_;
};

/// Basis expansion used by every linear learner; `kind` = adaptive_lasso maps to mains.
Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& x, LearnerKind kind);
Index basis_size(Index n_inputs, LearnerKind kind);

struct GlmFit {
  Eigen::VectorXd coefficients;
  int iterations = 0;
  bool jittered = false;  ///< normal equations needed the ridge jitter
};

/**
 * Iteratively reweighted least squares on a caller-supplied design matrix.
 *
 * Convergence is declared when the sup-norm of the weighted score divided by
 * the total prior weight falls below `tol`. Gaussian/identity is solved in one
 * weighted least-squares step.
 */
GlmFit fit_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, Family family,
               Link link, const Eigen::VectorXd& weights = {}, int max_iter = 100,
               double tol = 1e-9);

/// Weighted score X^T w (y - mu) / sum(w) on the link's working scale.
Eigen::VectorXd glm_score(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& coef, Family family, Link link,
                          const Eigen::VectorXd& weights = {});

struct AdaptiveLassoOptions {
  double gamma = 1.0;
  int lambda_grid = 50;
  std::vector<double> lambdas;  ///< explicit grid (standardized scale); overrides lambda_grid
  int cv_folds = 5;
  std::uint64_t seed = 20240917;
  double ridge_penalty = 1e-4;
  double tol = 1e-13;
  int max_sweeps = 100000;
  Family family = Family::gaussian;  ///< binomial means a clipped linear-probability fit
};

/**
 * Two-stage adaptive lasso with squared-error loss on standardized inputs.
 *
 * Ridge coefficients give weights 1/|b|^gamma; coordinate descent runs down a
 * log-spaced path from lambda_max to 1e-4 lambda_max and the lambda with the
 * smallest cross-validated error is refit on all rows.
 */
FittedModel fit_adaptive_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const AdaptiveLassoOptions& options);

/// Fits one learner on raw inputs.
FittedModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y);

/// Discrete super learner: lowest cross-validated loss wins, refit on all rows.
FittedModel fit_ensemble(const EnsembleSpec& spec, const Eigen::MatrixXd& x,
                         const Eigen::VectorXd& y);

struct ClipResult {
  Eigen::VectorXd values;
  Index clipped = 0;
};

ClipResult clip_probabilities(const Eigen::VectorXd& p, double lo, double hi);

/**
 * Out-of-fold predictions for every row. Row i is predicted by the model
 * trained on the rows outside fold j(i) that pass `row_filter`; with J = 1
 * one model is trained on the filtered rows and predicts everywhere.
 */
Eigen::VectorXd cross_fit(const EnsembleSpec& learner, const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& y, const std::vector<bool>& row_filter,
                          const FoldAssignment& folds);

/// Default libraries: {intercept, glm_main, glm_twoway} for the given family.
EnsembleSpec default_library(Family family, int selection_folds = 5,
                             std::uint64_t seed = 20240917);
/// The gaussian default library with an adaptive-lasso member appended.
EnsembleSpec collab_library(int selection_folds = 5, std::uint64_t seed = 20240917);

}  // namespace transport
