#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace transport {

using Index = Eigen::Index;
using IndexSet = std::vector<Index>;

/**
 * Observed sample of (S, W, A, S x Y).
 *
 * S = 1 marks source rows, S = 0 target rows. Outcomes are stored as NaN
 * where unobserved and flagged in `y_missing`. Covariate cells may be NaN
 * only on target rows; this encodes effect modifiers that were not measured
 * in the target population.
 */
class Dataset {
 public:
  Dataset() = default;

  /// Validates every invariant; throws ValidationError naming the first bad row.
  Dataset(Eigen::VectorXi s, Eigen::VectorXi a, Eigen::VectorXd y,
          std::vector<bool> y_missing, Eigen::MatrixXd w,
          std::vector<std::string> column_names);

  Index n() const noexcept { return s_.size(); }
  Index p() const noexcept { return w_.cols(); }

  const Eigen::VectorXi& s() const noexcept { return s_; }
  const Eigen::VectorXi& a() const noexcept { return a_; }
  const Eigen::VectorXd& y() const noexcept { return y_; }
  const std::vector<bool>& y_missing() const noexcept { return y_missing_; }
  const Eigen::MatrixXd& w() const noexcept { return w_; }
  const std::vector<std::string>& column_names() const noexcept { return names_; }

  bool is_source(Index i) const { return s_[i] == 1; }
  Index n_source() const;
  Index n_target() const { return n() - n_source(); }

  /// Column index by name; throws SchemaError when absent.
  Index column(const std::string& name) const;
  IndexSet columns(std::span<const std::string> names) const;

  /// True when column j has no NaN cell.
  bool column_observed(Index j) const;
  /// Names of columns from `cols` that have at least one NaN cell.
  std::vector<std::string> unobserved_columns(std::span<const Index> cols) const;

  /// Copy with the listed columns set to NaN on every target row.
  Dataset mask_target_columns(std::span<const Index> cols) const;

  /// Rows x selected columns.
  Eigen::MatrixXd covariates(std::span<const Index> cols) const;

  friend bool operator==(const Dataset& lhs, const Dataset& rhs);

 private:
  Eigen::VectorXi s_;
  Eigen::VectorXi a_;
  Eigen::VectorXd y_;
  std::vector<bool> y_missing_;
  Eigen::MatrixXd w_;
  std::vector<std::string> names_;
};

/// Effect-modifier set V, transport subset Z (Z in V), optional shifted set X.
struct SubsetSpec {
  IndexSet v_idx;
  IndexSet z_idx;
  IndexSet x_idx;

  /// Throws ValidationError unless Z is a subset of V and indices are in [0, p).
  void validate(Index p) const;

  static SubsetSpec from_names(const Dataset& ds, std::span<const std::string> v,
                               std::span<const std::string> z);
};

/// Random partition of 0..n-1 into J validation folds.
class FoldAssignment {
 public:
  FoldAssignment() = default;
  FoldAssignment(Index n, int folds, std::vector<int> fold_of);

  Index n() const noexcept { return n_; }
  int folds() const noexcept { return folds_; }
  const std::vector<int>& fold_of() const noexcept { return fold_of_; }
  int fold(Index i) const { return fold_of_[static_cast<std::size_t>(i)]; }

  /// Rows in validation fold j. With J = 1 every row.
  IndexSet validation_rows(int j) const;
  /// Rows used to train the fold-j models. With J = 1 every row.
  IndexSet training_rows(int j) const;
  /// Training membership mask for fold j.
  std::vector<bool> training_mask(int j) const;

 private:
  Index n_ = 0;
  int folds_ = 1;
  std::vector<int> fold_of_;
};

/// Seeded shuffle of 0..n-1 followed by a block split into J folds.
FoldAssignment make_folds(Index n, int folds, std::uint64_t seed);

/// Column-role mapping for CSV ingestion.
struct Schema {
  std::string s;
  std::string a;
  std::string y;
  std::vector<std::string> w;
  std::optional<std::vector<std::string>> v;
  std::optional<std::vector<std::string>> z;
};

Schema load_schema(const std::string& path);
Schema parse_schema(const std::string& json_text);
std::string schema_to_json(const Schema& schema);

Dataset load_csv(const std::string& path, const Schema& schema);
Dataset parse_csv(const std::string& text, const Schema& schema);

/// Header is s,a,y followed by covariate names; NaN cells are written empty.
void write_csv(const std::string& path, const Dataset& ds);
std::string to_csv(const Dataset& ds);
/// Schema matching the layout produced by write_csv.
Schema default_schema(const Dataset& ds, const std::string& s = "s",
                      const std::string& a = "a", const std::string& y = "y");

struct PositivityReport {
  double threshold = 0.01;
  Index selection_low = 0;   ///< rows with e_s below threshold
  Index selection_high = 0;  ///< rows with e_s above 1 - threshold
  Index treatment_low = 0;
  Index treatment_high = 0;
  Index flagged_rows = 0;    ///< rows with any flag
  bool z_discrete = false;
  /// Z strata present among target rows but never among source rows.
  std::vector<std::vector<double>> unsupported_strata;
};

/// Diagnostic only. NaN propensities (rows where a nuisance is undefined) are skipped.
PositivityReport positivity_report(const Dataset& ds, std::span<const Index> z_idx,
                                   const Eigen::VectorXd& e_s_hat,
                                   const Eigen::VectorXd& e_a_hat,
                                   double threshold = 0.01);

}  // namespace transport
