#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "transport/data.hpp"
#include "transport/estimators.hpp"

namespace transport {

/// intercept + sum_j coef_j x_j over the covariate vector.
struct LinearForm {
  double intercept = 0.0;
  std::vector<double> coef;

  double operator()(std::span<const double> x) const;
};

/**
 * Binary-covariate data-generating mechanism. Covariates are independent
 * Bernoulli; S, A and the noise sd are linear in the covariates and
 * Y = baseline(x) + A * effect(x) + sd(x) * N(0, 1).
 */
struct DgmSpec {
  int id = 0;
  std::vector<std::string> names;
  std::vector<double> marginals;
  LinearForm selection;  ///< P(S=1 | x)
  LinearForm treatment;  ///< P(A=1 | x, S=1)
  LinearForm baseline;   ///< E(Y | A=0, x)
  LinearForm effect;     ///< f(x)
  LinearForm noise_sd;
  IndexSet v_idx;  ///< effect modifiers
  IndexSet z_idx;  ///< sufficient transport subset

  /// Throws ArgumentError when a probability leaves [0, 1] or the sd is negative.
  void validate() const;
  SubsetSpec subset() const { return {v_idx, z_idx, {}}; }
  Index p() const { return static_cast<Index>(names.size()); }
};

/// The four built-in mechanisms (ids 1..4); DGMs 3 and 4 are noiseless.
DgmSpec builtin_dgm(int id);
/// Replaces the noise model with a constant sd.
DgmSpec with_noise_sd(DgmSpec spec, double sd);

Dataset sample_dgm(const DgmSpec& spec, Index n, std::uint64_t seed);

struct SupportPoint {
  std::vector<double> x;
  double prob = 0.0;
};

std::vector<SupportPoint> enumerate_support(const DgmSpec& spec);

/// E[f(X) | S=0] by enumeration.
double true_value(const DgmSpec& spec);
/// E[f(X) | S=1] by enumeration.
double true_source_ate(const DgmSpec& spec);
/// P(S=0).
double target_probability(const DgmSpec& spec);

struct Tau2Row {
  std::vector<double> x;
  double prob = 0.0;
  double e_s = 0.0;
  double tau2 = 0.0;
};

struct BoundTerms {
  double residual = 0.0;
  double middle = 0.0;
  double target = 0.0;
  double total() const { return residual + middle + target; }
};

struct BoundsResult {
  double bound_lambda = 0.0;
  double bound_theta = 0.0;
  BoundTerms lambda_terms;
  BoundTerms theta_terms;
  double q = 0.0;
  std::vector<Tau2Row> tau2;
  /// Var(D) at the truth, integrated exactly.
  double eif_variance_lambda = 0.0;
  double eif_variance_theta = 0.0;
};

BoundsResult efficiency_bounds(const DgmSpec& spec);

/// True nuisance values for every row of `ds` (columns must follow `spec.names`).
NuisanceSet true_nuisances(const DgmSpec& spec, const Dataset& ds);

struct EifMeans {
  double lambda = 0.0;
  double theta = 0.0;
  double lambda_collab = 0.0;
  double theta_alt = 0.0;
};

/// Exact expectations of the four influence functions at the true nuisances.
EifMeans enumerate_eif_means(const DgmSpec& spec);

/// Stateless counter-based derivation of replication seeds.
std::uint64_t child_seed(std::uint64_t master, std::uint64_t replication);

struct MonteCarloConfig {
  DgmSpec spec;
  Index n = 1000;
  int reps = 2;
  std::vector<Estimand> estimators{Estimand::lambda, Estimand::theta};
  int folds = 5;
  std::uint64_t seed = 1;
  double clip_lo = 0.01;
  double clip_hi = 0.99;
  int jobs = 1;
  bool rel_eff = true;
  bool interpretable = false;
  /// Plug in the true nuisances instead of fitting them.
  bool oracle = false;
  NuisanceLearners learners;
  /// Called after each replication with (done, total); may run on any worker thread.
  std::function<void(int, int)> progress;
};

struct ReplicationRecord {
  int replication = 0;
  std::uint64_t seed = 0;
  std::vector<std::optional<double>> point;  ///< one per estimator; empty when it failed
  std::vector<std::optional<double>> se;
  std::vector<std::string> errors;
  std::optional<std::vector<std::string>> selected_v;
  std::optional<std::vector<std::string>> selected_z;
};

struct MetricsRow {
  std::string estimator;
  Index n = 0;
  double truth = 0.0;
  double mean_point = 0.0;
  double abs_bias = 0.0;
  double mc_se = 0.0;  ///< sd(points) / sqrt(reps)
  double coverage95 = 0.0;
  double n_times_var = 0.0;
  double mean_est_var = 0.0;
  std::optional<double> rel_eff;
  int replications = 0;
  int failures = 0;
};

struct MonteCarloResult {
  double truth = 0.0;
  std::vector<MetricsRow> rows;
  std::vector<ReplicationRecord> replications;
};

MonteCarloResult run_monte_carlo(const MonteCarloConfig& config);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string metrics_table(const std::vector<MetricsRow>& rows);

}  // namespace transport
