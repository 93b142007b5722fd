#include "transport/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "transport/error.hpp"

namespace transport {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string row_label(Index i) { return "row " + std::to_string(i + 1); }

std::string_view trim(std::string_view v) {
  while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
  while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '\r'))
    v.remove_suffix(1);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    v.remove_prefix(1);
    v.remove_suffix(1);
  }
  return v;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || line[k] == ',') {
      out.push_back(trim(line.substr(start, k - start)));
      start = k + 1;
    }
  }
  return out;
}

std::optional<double> parse_number(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw std::invalid_argument("not a number");
  }
  return value;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

Dataset::Dataset(Eigen::VectorXi s, Eigen::VectorXi a, Eigen::VectorXd y,
                 std::vector<bool> y_missing, Eigen::MatrixXd w,
                 std::vector<std::string> column_names)
    : s_(std::move(s)),
      a_(std::move(a)),
      y_(std::move(y)),
      y_missing_(std::move(y_missing)),
      w_(std::move(w)),
      names_(std::move(column_names)) {
  const Index n = s_.size();
  if (a_.size() != n || y_.size() != n || static_cast<Index>(y_missing_.size()) != n ||
      w_.rows() != n) {
    throw ValidationError("dataset columns have inconsistent lengths");
  }
  if (static_cast<Index>(names_.size()) != w_.cols()) {
    throw ValidationError("covariate names do not match covariate columns");
  }
  bool any_source = false;
  bool any_target = false;
  for (Index i = 0; i < n; ++i) {
    if (s_[i] != 0 && s_[i] != 1) {
      throw ValidationError(row_label(i) + ": s must be 0 or 1, got " + std::to_string(s_[i]));
    }
    if (a_[i] != 0 && a_[i] != 1) {
      throw ValidationError(row_label(i) + ": a must be 0 or 1, got " + std::to_string(a_[i]));
    }
    const bool missing = y_missing_[static_cast<std::size_t>(i)] || std::isnan(y_[i]);
    if (missing && s_[i] == 1) {
      throw ValidationError(row_label(i) + ": y is missing on a source (s=1) row");
    }
    if (missing) {
      y_missing_[static_cast<std::size_t>(i)] = true;
      y_[i] = kNaN;
    }
    if (s_[i] == 1) {
      any_source = true;
      for (Index j = 0; j < w_.cols(); ++j) {
        if (std::isnan(w_(i, j))) {
          throw ValidationError(row_label(i) + ": covariate '" + names_[j] +
                                "' is missing on a source (s=1) row");
        }
      }
    } else {
      any_target = true;
    }
  }
  if (!any_source || !any_target) {
    throw ValidationError("dataset must contain both source (s=1) and target (s=0) rows");
  }
}

Index Dataset::n_source() const { return s_.sum(); }

Index Dataset::column(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw SchemaError("unknown covariate column '" + name + "'");
  return static_cast<Index>(it - names_.begin());
}

IndexSet Dataset::columns(std::span<const std::string> names) const {
  IndexSet out;
  out.reserve(names.size());
  for (const auto& nm : names) out.push_back(column(nm));
  return out;
}

bool Dataset::column_observed(Index j) const { return !w_.col(j).array().isNaN().any(); }

std::vector<std::string> Dataset::unobserved_columns(std::span<const Index> cols) const {
  std::vector<std::string> out;
  for (Index j : cols)
    if (!column_observed(j)) out.push_back(names_[static_cast<std::size_t>(j)]);
  return out;
}

Dataset Dataset::mask_target_columns(std::span<const Index> cols) const {
  Dataset copy = *this;
  for (Index i = 0; i < n(); ++i) {
    if (s_[i] == 1) continue;
    for (Index j : cols) copy.w_(i, j) = kNaN;
  }
  return copy;
}

Eigen::MatrixXd Dataset::covariates(std::span<const Index> cols) const {
  Eigen::MatrixXd out(n(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = w_.col(cols[k]);
  return out;
}

bool operator==(const Dataset& lhs, const Dataset& rhs) {
  if (lhs.names_ != rhs.names_ || lhs.s_ != rhs.s_ || lhs.a_ != rhs.a_ ||
      lhs.y_missing_ != rhs.y_missing_ || lhs.w_.rows() != rhs.w_.rows() ||
      lhs.w_.cols() != rhs.w_.cols()) {
    return false;
  }
  auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  for (Index i = 0; i < lhs.n(); ++i) {
    if (!same(lhs.y_[i], rhs.y_[i])) return false;
    for (Index j = 0; j < lhs.p(); ++j)
      if (!same(lhs.w_(i, j), rhs.w_(i, j))) return false;
  }
  return true;
}

void SubsetSpec::validate(Index p) const {
  auto check_range = [p](const IndexSet& set, const char* label) {
    for (Index j : set) {
      if (j < 0 || j >= p) {
        throw ValidationError(std::string(label) + " index " + std::to_string(j) +
                              " out of range [0, " + std::to_string(p) + ")");
      }
    }
  };
  check_range(v_idx, "V");
  check_range(z_idx, "Z");
  check_range(x_idx, "X");
  for (Index j : z_idx) {
    if (std::find(v_idx.begin(), v_idx.end(), j) == v_idx.end()) {
      throw ValidationError("Z must be a subset of V; column " + std::to_string(j) +
                            " is in Z but not in V");
    }
  }
}

SubsetSpec SubsetSpec::from_names(const Dataset& ds, std::span<const std::string> v,
                                  std::span<const std::string> z) {
  SubsetSpec spec{ds.columns(v), ds.columns(z), {}};
  spec.validate(ds.p());
  return spec;
}

FoldAssignment::FoldAssignment(Index n, int folds, std::vector<int> fold_of)
    : n_(n), folds_(folds), fold_of_(std::move(fold_of)) {
  if (static_cast<Index>(fold_of_.size()) != n_) throw ArgumentError("fold map has wrong length");
  for (int f : fold_of_)
    if (f < 0 || f >= folds_) throw ArgumentError("fold label out of range");
}

IndexSet FoldAssignment::validation_rows(int j) const {
  IndexSet out;
  for (Index i = 0; i < n_; ++i)
    if (folds_ == 1 || fold_of_[static_cast<std::size_t>(i)] == j) out.push_back(i);
  return out;
}

IndexSet FoldAssignment::training_rows(int j) const {
  IndexSet out;
  for (Index i = 0; i < n_; ++i)
    if (folds_ == 1 || fold_of_[static_cast<std::size_t>(i)] != j) out.push_back(i);
  return out;
}

std::vector<bool> FoldAssignment::training_mask(int j) const {
  std::vector<bool> out(static_cast<std::size_t>(n_));
  for (Index i = 0; i < n_; ++i)
    out[static_cast<std::size_t>(i)] = folds_ == 1 || fold_of_[static_cast<std::size_t>(i)] != j;
  return out;
}

FoldAssignment make_folds(Index n, int folds, std::uint64_t seed) {
  if (folds < 1 || n < 1 || folds > n) {
    throw ArgumentError("make_folds requires 1 <= J <= n (got J=" + std::to_string(folds) +
                        ", n=" + std::to_string(n) + ")");
  }
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] =
        static_cast<int>((k * folds) / n);
  }
  return FoldAssignment(n, folds, std::move(fold_of));
}

Schema parse_schema(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema is not valid JSON: ") + e.what());
  }
  auto get_string = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string())
      throw SchemaError(std::string("schema is missing string field '") + key + "'");
    return j[key].get<std::string>();
  };
  auto get_list = [&](const char* key) {
    if (!j[key].is_array()) throw SchemaError(std::string("schema field '") + key + "' must be a list");
    return j[key].get<std::vector<std::string>>();
  };
  Schema schema;
  schema.s = get_string("s");
  schema.a = get_string("a");
  schema.y = get_string("y");
  if (!j.contains("w")) throw SchemaError("schema is missing field 'w'");
  schema.w = get_list("w");
  if (schema.w.empty()) throw SchemaError("schema must list at least one covariate in 'w'");
  if (j.contains("v")) schema.v = get_list("v");
  if (j.contains("z")) schema.z = get_list("z");
  return schema;
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

std::string schema_to_json(const Schema& schema) {
  nlohmann::json j;
  j["s"] = schema.s;
  j["a"] = schema.a;
  j["y"] = schema.y;
  j["w"] = schema.w;
  if (schema.v) j["v"] = *schema.v;
  if (schema.z) j["z"] = *schema.z;
  return j.dump(2);
}

Dataset parse_csv(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV file is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header_views = split_line(line);
  std::vector<std::string> header(header_views.begin(), header_views.end());
  auto find_col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column '" + name + "' not found in CSV header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cs = find_col(schema.s);
  const std::size_t ca = find_col(schema.a);
  const std::size_t cy = find_col(schema.y);
  std::vector<std::size_t> cw;
  for (const auto& nm : schema.w) cw.push_back(find_col(nm));
  for (const auto* extra : {&schema.v, &schema.z}) {
    if (!*extra) continue;
    for (const auto& nm : **extra) {
      if (std::find(schema.w.begin(), schema.w.end(), nm) == schema.w.end())
        throw SchemaError("column '" + nm + "' in v/z is not listed in w");
    }
  }

  std::vector<int> s, a;
  std::vector<double> y, w;
  std::vector<bool> miss;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row + 1) + ": expected " +
                           std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row + 1, "");
    }
    auto number = [&](std::size_t c) -> std::optional<double> {
      try {
        return parse_number(cells[c]);
      } catch (const std::invalid_argument&) {
        throw ParseError("row " + std::to_string(row + 1) + ", column '" + header[c] +
                             "': cannot parse '" + std::string(cells[c]) + "' as a number",
                         row + 1, header[c]);
      }
    };
    auto binary = [&](std::size_t c) {
      auto v = number(c);
      if (!v || (*v != 0.0 && *v != 1.0)) {
        throw ValidationError("row " + std::to_string(row + 1) + ": column '" + header[c] +
                              "' must be 0 or 1, got '" + std::string(cells[c]) + "'");
      }
      return static_cast<int>(*v);
    };
    s.push_back(binary(cs));
    a.push_back(binary(ca));
    auto yv = number(cy);
    miss.push_back(!yv.has_value());
    y.push_back(yv.value_or(kNaN));
    for (std::size_t c : cw) w.push_back(number(c).value_or(kNaN));
    ++row;
  }
  const auto n = static_cast<Index>(row);
  const auto p = static_cast<Index>(cw.size());
  Eigen::MatrixXd wm(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) wm(i, j) = w[static_cast<std::size_t>(i * p + j)];
  return Dataset(Eigen::Map<Eigen::VectorXi>(s.data(), n), Eigen::Map<Eigen::VectorXi>(a.data(), n),
                 Eigen::Map<Eigen::VectorXd>(y.data(), n), std::move(miss), std::move(wm),
                 schema.w);
}

Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open data file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema);
}

std::string to_csv(const Dataset& ds) {
  std::string out = "s,a,y";
  for (const auto& nm : ds.column_names()) out += "," + nm;
  out += "\n";
  for (Index i = 0; i < ds.n(); ++i) {
    out += std::to_string(ds.s()[i]);
    out += ",";
    out += std::to_string(ds.a()[i]);
    out += ",";
    if (!ds.y_missing()[static_cast<std::size_t>(i)]) out += format_number(ds.y()[i]);
    for (Index j = 0; j < ds.p(); ++j) {
      out += ",";
      if (!std::isnan(ds.w()(i, j))) out += format_number(ds.w()(i, j));
    }
    out += "\n";
  }
  return out;
}

void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << to_csv(ds);
}

Schema default_schema(const Dataset& ds, const std::string& s, const std::string& a,
                      const std::string& y) {
  return Schema{s, a, y, ds.column_names(), std::nullopt, std::nullopt};
}

PositivityReport positivity_report(const Dataset& ds, std::span<const Index> z_idx,
                                   const Eigen::VectorXd& e_s_hat,
                                   const Eigen::VectorXd& e_a_hat, double threshold) {
  PositivityReport rep;
  rep.threshold = threshold;
  const Index n = ds.n();
  for (Index i = 0; i < n; ++i) {
    bool flagged = false;
    if (i < e_s_hat.size() && !std::isnan(e_s_hat[i])) {
      if (e_s_hat[i] < threshold) {
        ++rep.selection_low;
        flagged = true;
      }
      if (e_s_hat[i] > 1.0 - threshold) {
        ++rep.selection_high;
        flagged = true;
      }
    }
    if (i < e_a_hat.size() && !std::isnan(e_a_hat[i])) {
      if (e_a_hat[i] < threshold) {
        ++rep.treatment_low;
        flagged = true;
      }
      if (e_a_hat[i] > 1.0 - threshold) {
        ++rep.treatment_high;
        flagged = true;
      }
    }
    if (flagged) ++rep.flagged_rows;
  }

  // Strata are only tabulated when Z has a small finite support.
  constexpr std::size_t kMaxStrata = 256;
  std::set<std::vector<double>> source_strata;
  std::set<std::vector<double>> target_strata;
  bool discrete = true;
  for (Index i = 0; i < n && discrete; ++i) {
    std::vector<double> key;
    key.reserve(z_idx.size());
    bool has_nan = false;
    for (Index j : z_idx) {
      key.push_back(ds.w()(i, j));
      has_nan |= std::isnan(ds.w()(i, j));
    }
    if (has_nan) continue;
    (ds.is_source(i) ? source_strata : target_strata).insert(std::move(key));
    discrete = source_strata.size() + target_strata.size() <= 2 * kMaxStrata;
  }
  rep.z_discrete = discrete && !z_idx.empty();
  if (rep.z_discrete) {
    for (const auto& key : target_strata)
      if (!source_strata.count(key)) rep.unsupported_strata.push_back(key);
  }
  return rep;
}

}  // namespace transport
