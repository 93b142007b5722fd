#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "transport/error.hpp"
#include "transport/learners.hpp"
#include "transport/simulation.hpp"

using namespace transport;
using testing_support::make_dataset;

namespace {

const Schema kSchema{"s", "a", "y", {"w1", "w2"}, std::nullopt, std::nullopt};

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / ("transport_" + stem)).string();
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("csv with blank outcomes on target rows") {
  const std::string text =
      "s,a,y,w1,w2\n"
      "1,1,2.5,0,1\n"
      "1,0,1.0,1,1\n"
      "0,1,,0,0\n"
      "0,0,,1,0\n";
  const Dataset ds = parse_csv(text, kSchema);
  CHECK(ds.n() == 4);
  CHECK(ds.p() == 2);
  CHECK(std::count(ds.y_missing().begin(), ds.y_missing().end(), true) == 2);
  CHECK(ds.y_missing()[2]);
  CHECK(std::isnan(ds.y()[3]));
  CHECK(ds.y()[0] == doctest::Approx(2.5));
  CHECK(ds.n_source() == 2);
}

TEST_CASE("csv validation errors") {
  SUBCASE("s value outside {0,1} names the row") {
    const std::string text = "s,a,y,w1,w2\n1,1,2,0,1\n2,0,1,1,1\n0,0,,1,0\n";
    try {
      parse_csv(text, kSchema);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
  }
  SUBCASE("non-binary treatment") {
    CHECK_THROWS_AS(parse_csv("s,a,y,w1,w2\n1,3,2,0,1\n0,0,,1,0\n", kSchema), ValidationError);
  }
  SUBCASE("missing outcome on a source row") {
    CHECK_THROWS_AS(parse_csv("s,a,y,w1,w2\n1,1,,0,1\n0,0,,1,0\n", kSchema), ValidationError);
  }
  SUBCASE("missing column") {
    CHECK_THROWS_AS(parse_csv("s,a,y,w1\n1,1,2,0\n0,0,,1\n", kSchema), SchemaError);
  }
  SUBCASE("non-numeric covariate reports row and column") {
    try {
      parse_csv("s,a,y,w1,w2\n1,1,2,0,1\n0,0,,abc,0\n", kSchema);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 2") != std::string::npos);
      CHECK(msg.find("w1") != std::string::npos);
    }
  }
  SUBCASE("only one population") {
    CHECK_THROWS_AS(parse_csv("s,a,y,w1,w2\n1,1,2,0,1\n1,0,1,1,0\n", kSchema), ValidationError);
  }
}

TEST_CASE("schema json") {
  const Schema sc = parse_schema(R"({"s":"S","a":"A","y":"Y","w":["x","z"],"z":["z"]})");
  CHECK(sc.s == "S");
  CHECK(sc.w.size() == 2);
  REQUIRE(sc.z.has_value());
  CHECK(sc.z->front() == "z");
  CHECK_FALSE(sc.v.has_value());
  CHECK_THROWS_AS(parse_schema(R"({"s":"S","a":"A","w":["x"]})"), SchemaError);
  CHECK_THROWS_AS(parse_schema("{not json"), SchemaError);
  const Schema back = parse_schema(schema_to_json(sc));
  CHECK(back.w == sc.w);
  CHECK(back.z == sc.z);
}

TEST_CASE("sampled dataset round-trips through csv bit-identically") {
  const DgmSpec spec = builtin_dgm(1);
  const Dataset ds = sample_dgm(spec, 10000, 2024);
  const std::string path = temp_path("roundtrip.csv");
  write_csv(path, ds);
  const Dataset back = load_csv(path, default_schema(ds));
  std::remove(path.c_str());
  CHECK(back == ds);
  for (Index i = 0; i < ds.n(); ++i) {
    if (ds.y_missing()[static_cast<std::size_t>(i)]) continue;
    REQUIRE(back.y()[i] == ds.y()[i]);
  }
}

TEST_CASE("csv round-trip with continuous covariates and masked target cells") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z01;
  Eigen::MatrixXd w(50, 3);
  std::vector<int> s, a;
  std::vector<double> y;
  for (Index i = 0; i < 50; ++i) {
    for (Index j = 0; j < 3; ++j) w(i, j) = z01(rng) * 1e3;
    s.push_back(i % 3 == 0 ? 0 : 1);
    a.push_back(static_cast<int>(i % 2));
    y.push_back(z01(rng) / 7.0);
  }
  const IndexSet masked{2};
  const Dataset ds = make_dataset(s, a, y, w).mask_target_columns(masked);
  CHECK_FALSE(ds.column_observed(2));
  const Dataset back = parse_csv(to_csv(ds), default_schema(ds));
  CHECK(back == ds);
}

TEST_CASE("missing covariates are confined to target rows") {
  Eigen::MatrixXd w(2, 1);
  w << std::nan(""), 1.0;
  Eigen::VectorXi s(2), a(2);
  s << 1, 0;
  a << 1, 0;
  Eigen::VectorXd y(2);
  y << 1.0, std::nan("");
  CHECK_THROWS_AS(Dataset(s, a, y, {false, true}, w, {"w"}), ValidationError);
}

TEST_CASE("subset spec validation") {
  SubsetSpec ok{{0, 1}, {1}, {}};
  CHECK_NOTHROW(ok.validate(3));
  SubsetSpec not_nested{{0}, {1}, {}};
  CHECK_THROWS_AS(not_nested.validate(3), ValidationError);
  SubsetSpec out_of_range{{0, 5}, {}, {}};
  CHECK_THROWS_AS(out_of_range.validate(3), ValidationError);
}

TEST_CASE("fold examples") {
  SUBCASE("ten rows in five folds") {
    const FoldAssignment f = make_folds(10, 5, 42);
    std::set<Index> seen;
    for (int j = 0; j < 5; ++j) {
      const IndexSet v = f.validation_rows(j);
      CHECK(v.size() == 2);
      for (Index i : v) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == 10);
  }
  SUBCASE("single fold covers everything") {
    const FoldAssignment f = make_folds(10, 1, 0);
    CHECK(f.folds() == 1);
    CHECK(f.validation_rows(0).size() == 10);
    CHECK(f.training_rows(0).size() == 10);
  }
  SUBCASE("seven rows in three folds, repeatable") {
    const FoldAssignment f = make_folds(7, 3, 7);
    std::vector<std::size_t> sizes;
    for (int j = 0; j < 3; ++j) sizes.push_back(f.validation_rows(j).size());
    std::sort(sizes.begin(), sizes.end());
    CHECK(sizes == std::vector<std::size_t>{2, 2, 3});
    CHECK(make_folds(7, 3, 7).fold_of() == f.fold_of());
  }
  SUBCASE("bad fold counts") {
    CHECK_THROWS_AS(make_folds(3, 4, 1), ArgumentError);
    CHECK_THROWS_AS(make_folds(3, 0, 1), ArgumentError);
  }
}

TEST_CASE("fold partition property") {
  for (Index n : {1, 2, 5, 17, 100, 1001}) {
    for (int j : {1, 2, 3, 5, 10}) {
      if (j > n) continue;
      for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        const FoldAssignment f = make_folds(n, j, seed);
        std::vector<int> count(static_cast<std::size_t>(j), 0);
        for (Index i = 0; i < n; ++i) ++count[static_cast<std::size_t>(f.fold(i))];
        const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
        CHECK(*hi - *lo <= 1);
        Index total = 0;
        for (int k = 0; k < j; ++k) {
          const IndexSet tr = f.training_rows(k);
          const IndexSet va = f.validation_rows(k);
          if (j > 1) CHECK(tr.size() + va.size() == static_cast<std::size_t>(n));
          total += static_cast<Index>(va.size());
        }
        CHECK(total == n);
      }
    }
  }
}

TEST_CASE("positivity report") {
  const Dataset ds = testing_support::random_binary(
      20, 1, 3, [](int a, const auto&, auto&) { return static_cast<double>(a); });
  const IndexSet z{0};
  SUBCASE("balanced propensities flag nothing") {
    const Eigen::VectorXd half = Eigen::VectorXd::Constant(ds.n(), 0.5);
    const PositivityReport r = positivity_report(ds, z, half, half, 0.01);
    CHECK(r.flagged_rows == 0);
    CHECK(r.z_discrete);
  }
  SUBCASE("one small selection propensity") {
    Eigen::VectorXd es = Eigen::VectorXd::Constant(ds.n(), 0.5);
    es[4] = 0.004;
    const Eigen::VectorXd ea = Eigen::VectorXd::Constant(ds.n(), 0.5);
    const PositivityReport r = positivity_report(ds, z, es, ea, 0.01);
    CHECK(r.flagged_rows == 1);
    CHECK(r.selection_low == 1);
  }
  SUBCASE("pure") {
    Eigen::VectorXd es = Eigen::VectorXd::LinSpaced(ds.n(), 0.001, 0.999);
    const Eigen::VectorXd ea = Eigen::VectorXd::Constant(ds.n(), 0.3);
    const PositivityReport a = positivity_report(ds, z, es, ea, 0.05);
    const PositivityReport b = positivity_report(ds, z, es, ea, 0.05);
    CHECK(a.flagged_rows == b.flagged_rows);
    CHECK(a.selection_low == b.selection_low);
    CHECK(a.selection_high == b.selection_high);
    CHECK(a.unsupported_strata == b.unsupported_strata);
  }
}

TEST_CASE("target stratum without source support") {
  Eigen::MatrixXd w(4, 1);
  w << 0, 0, 0, 1;
  const Dataset ds = make_dataset({1, 1, 0, 0}, {1, 0, 1, 0}, {1, 0, 0, 0}, w);
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(4, 0.5);
  const IndexSet z{0};
  const PositivityReport r = positivity_report(ds, z, half, half);
  REQUIRE(r.unsupported_strata.size() == 1);
  CHECK(r.unsupported_strata[0] == std::vector<double>{1.0});
}

TEST_CASE("weights on the full covariate set hit the boundary more often in DGM 3") {
  const DgmSpec spec = builtin_dgm(3);
  const Dataset ds = sample_dgm(spec, 1000, 31);
  const std::vector<bool> all(static_cast<std::size_t>(ds.n()), true);
  const FoldAssignment one = make_folds(ds.n(), 1, 0);
  Eigen::VectorXd s(ds.n());
  for (Index i = 0; i < ds.n(); ++i) s[i] = ds.s()[i];
  const IndexSet wz{0, 1}, z{1};
  const Eigen::VectorXd e_w = cross_fit(LearnerSpec::binomial(LearnerKind::glm_twoway),
                                        ds.covariates(wz), s, all, one);
  const Eigen::VectorXd e_z =
      cross_fit(LearnerSpec::binomial(LearnerKind::glm_main), ds.covariates(z), s, all, one);
  const Eigen::VectorXd ea = Eigen::VectorXd::Constant(ds.n(), 0.5);
  const PositivityReport rw = positivity_report(ds, z, e_w, ea, 0.05);
  const PositivityReport rz = positivity_report(ds, z, e_z, ea, 0.05);
  CHECK(rw.flagged_rows > rz.flagged_rows);
  CHECK(rz.flagged_rows == 0);
}

}  // TEST_SUITE
