#include <doctest.h>

#include <cmath>
#include <functional>
#include <set>

#include "helpers.hpp"
#include "transport/error.hpp"
#include "transport/simulation.hpp"

using namespace transport;

namespace {

// Hand-written copies of the four models, evaluated without LinearForm.
struct Model {
  std::vector<double> marg;
  std::function<double(const std::vector<int>&)> es, f, mu0, sd;
  std::vector<int> z;  // transport subset
};

Model hand_model(int id) {
  using X = const std::vector<int>&;
  switch (id) {
    case 1:
      return {{0.5, 0.33, 0.66},
              [](X x) { return 0.4 + 0.5 * x[0] - 0.3 * x[2]; },
              [](X x) { return 1.0 + x[1] + 2.5 * x[2]; },
              [](X x) { return 1.0 * x[0]; },
              [](X x) { return 0.1 + 0.8 * x[0]; },
              {2}};
    case 2:
      return {{0.5, 0.33, 0.66},
              [](X x) { return 0.5 - 0.4 * x[0] + 0.3 * x[2]; },
              [](X x) { return 1.0 + x[1] + 2.5 * x[2]; },
              [](X x) { return 1.0 * x[0]; },
              [](X x) { return 0.1 + 0.5 * x[0]; },
              {2}};
    case 3:
      return {{0.25, 0.5},
              [](X x) { return 0.8 - 0.18 * x[0] - 0.6 * x[1]; },
              [](X x) { return 0.25 + x[1]; },
              [](X x) { return 1.2 + 0.5 * x[0] + 0.5 * x[1]; },
              [](X) { return 0.0; },
              {1}};
    default:
      return {{0.5, 0.75, 0.33, 0.25},
              [](X x) { return 0.8 - 0.25 * x[0] - 0.5 * x[3]; },
              [](X x) { return 0.25 + 0.4 * x[1] - 0.75 * x[2] + x[3]; },
              [](X x) { return 1.2 + 0.5 * x[0] + 0.5 * x[3]; },
              [](X) { return 0.0; },
              {3}};
  }
}

struct Cell {
  std::vector<int> x;
  double p;
};

std::vector<Cell> cells(const Model& m) {
  const std::size_t p = m.marg.size();
  std::vector<Cell> out;
  for (unsigned mask = 0; mask < (1u << p); ++mask) {
    Cell c{std::vector<int>(p), 1.0};
    for (std::size_t j = 0; j < p; ++j) {
      c.x[j] = (mask >> j) & 1u;
      c.p *= c.x[j] ? m.marg[j] : 1.0 - m.marg[j];
    }
    out.push_back(c);
  }
  return out;
}

double hand_truth(const Model& m) {
  double num = 0.0, den = 0.0;
  for (const auto& c : cells(m)) {
    num += c.p * (1.0 - m.es(c.x)) * m.f(c.x);
    den += c.p * (1.0 - m.es(c.x));
  }
  return num / den;
}

bool same_z(const Model& m, const std::vector<int>& a, const std::vector<int>& b) {
  for (int j : m.z)
    if (a[static_cast<std::size_t>(j)] != b[static_cast<std::size_t>(j)]) return false;
  return true;
}

// E[D^2] of the lambda and theta influence functions at the truth, A ~ Bernoulli(0.5).
std::pair<double, double> hand_eif_variances(const Model& m) {
  const auto cs = cells(m);
  double q = 0.0;
  for (const auto& c : cs) q += c.p * (1.0 - m.es(c.x));
  const double psi = hand_truth(m);
  double vl = 0.0, vt = 0.0;
  for (const auto& c : cs) {
    double pz = 0.0, sz = 0.0, fz = 0.0;
    for (const auto& d : cs) {
      if (!same_z(m, c.x, d.x)) continue;
      pz += d.p;
      sz += d.p * m.es(d.x);
      fz += d.p * m.f(d.x);
    }
    const double ez = sz / pz;
    fz /= pz;
    const double e = m.es(c.x), f = m.f(c.x), s2 = m.sd(c.x) * m.sd(c.x);
    // Source rows: residual variance with weight 1/0.5 squared per arm, averaged over A.
    const double resid_w = ((1 - e) / e) * ((1 - e) / e) * s2 * 4.0;
    const double resid_z = ((1 - ez) / ez) * ((1 - ez) / ez) * s2 * 4.0;
    const double mid = (1 - ez) * (f - fz);
    vl += c.p * (e * resid_w + (1 - e) * (f - psi) * (f - psi)) / (q * q);
    vt += c.p * (e * (resid_z + mid * mid) + (1 - e) * (mid + fz - psi) * (mid + fz - psi)) /
          (q * q);
  }
  return {vl, vt};
}

}  // namespace

TEST_SUITE("simulation") {

TEST_CASE("true values by enumeration") {
  CHECK(true_value(builtin_dgm(3)) == doctest::Approx(0.25 + 0.4225 / 0.545).epsilon(1e-12));
  CHECK(true_value(builtin_dgm(1)) == doctest::Approx(1.0 + 0.33 + 2.5 * 0.429 / 0.548).epsilon(1e-12));
  const double pinned[4] = {3.28712, 2.64474, 1.025229, 0.760833};
  for (int id = 1; id <= 4; ++id) {
    CAPTURE(id);
    const double hand = hand_truth(hand_model(id));
    CHECK(true_value(builtin_dgm(id)) == doctest::Approx(hand).epsilon(1e-12));
    CHECK(std::abs(hand - pinned[id - 1]) < 1e-5);
  }
}

TEST_CASE("no shift makes the transported effect the marginal effect") {
  DgmSpec spec = builtin_dgm(1);
  spec.selection = LinearForm{0.6, {0.0, 0.0, 0.0}};
  spec.validate();
  CHECK(true_value(spec) == doctest::Approx(1.0 + 0.33 + 2.5 * 0.66).epsilon(1e-12));
  CHECK(true_source_ate(spec) == doctest::Approx(true_value(spec)).epsilon(1e-12));
  CHECK(target_probability(spec) == doctest::Approx(0.4));
}

TEST_CASE("invalid specifications") {
  CHECK_THROWS_AS(builtin_dgm(5), ArgumentError);
  DgmSpec spec = builtin_dgm(3);
  spec.selection = LinearForm{0.9, {0.3, 0.0}};
  CHECK_THROWS_AS(spec.validate(), ArgumentError);
  spec = builtin_dgm(3);
  spec.noise_sd = LinearForm{-0.1, {0.0, 0.0}};
  CHECK_THROWS_AS(spec.validate(), ArgumentError);
  CHECK_THROWS_AS(sample_dgm(builtin_dgm(1), 0, 1), ArgumentError);
}

TEST_CASE("sampling") {
  SUBCASE("selection frequency in DGM 1") {
    const Dataset ds = sample_dgm(builtin_dgm(1), 1000000, 1);
    CHECK(std::abs(static_cast<double>(ds.n_source()) / 1e6 - 0.452) < 0.002);
  }
  SUBCASE("DGM 3 outcomes are exact without noise") {
    const Dataset ds = sample_dgm(builtin_dgm(3), 5000, 3);
    for (Index i = 0; i < ds.n(); ++i) {
      if (!ds.is_source(i)) {
        CHECK(ds.y_missing()[static_cast<std::size_t>(i)]);
        continue;
      }
      const double w = ds.w()(i, 0), z = ds.w()(i, 1), a = ds.a()[i];
      REQUIRE(ds.y()[i] == 1.2 + 0.25 * a + 0.5 * z + 0.5 * w + a * z);
    }
  }
  SUBCASE("determinism") {
    const Dataset a = sample_dgm(builtin_dgm(4), 2000, 77);
    CHECK(a == sample_dgm(builtin_dgm(4), 2000, 77));
    CHECK_FALSE(a == sample_dgm(builtin_dgm(4), 2000, 78));
  }
  SUBCASE("covariate marginals and treatment balance") {
    const DgmSpec spec = builtin_dgm(4);
    const Dataset ds = sample_dgm(spec, 200000, 5);
    for (Index j = 0; j < ds.p(); ++j) {
      const double m = spec.marginals[static_cast<std::size_t>(j)];
      const double se = std::sqrt(m * (1 - m) / 2e5);
      CHECK(std::abs(ds.w().col(j).mean() - m) < 4.0 * se);
    }
    CHECK(std::abs(ds.a().cast<double>().mean() - 0.5) < 4.0 * std::sqrt(0.25 / 2e5));
  }
  SUBCASE("constant noise override") {
    const DgmSpec spec = with_noise_sd(builtin_dgm(3), 1.0);
    const Dataset ds = sample_dgm(spec, 100000, 8);
    double ss = 0.0;
    Index m = 0;
    for (Index i = 0; i < ds.n(); ++i) {
      if (!ds.is_source(i)) continue;
      const double w = ds.w()(i, 0), z = ds.w()(i, 1), a = ds.a()[i];
      const double r = ds.y()[i] - (1.2 + 0.25 * a + 0.5 * z + 0.5 * w + a * z);
      ss += r * r;
      ++m;
    }
    CHECK(ss / static_cast<double>(m) == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("influence functions have mean zero at the truth") {
  for (int id = 1; id <= 4; ++id) {
    for (double sd : {0.0, 1.0}) {
      CAPTURE(id);
      const DgmSpec spec = sd > 0 ? with_noise_sd(builtin_dgm(id), sd) : builtin_dgm(id);
      const EifMeans m = enumerate_eif_means(spec);
      CHECK(std::abs(m.lambda) < 1e-12);
      CHECK(std::abs(m.theta) < 1e-12);
      CHECK(std::abs(m.lambda_collab) < 1e-12);
      CHECK(std::abs(m.theta_alt) < 1e-12);
    }
  }
}

TEST_CASE("efficiency bounds") {
  SUBCASE("noiseless models have no residual term") {
    for (int id : {3, 4}) {
      const BoundsResult b = efficiency_bounds(builtin_dgm(id));
      CHECK(b.lambda_terms.residual == 0.0);
      CHECK(b.theta_terms.residual == 0.0);
      CHECK(b.bound_lambda >= 0.0);
      CHECK(b.bound_theta >= 0.0);
    }
  }
  SUBCASE("designed orderings") {
    const BoundsResult b1 = efficiency_bounds(builtin_dgm(1));
    const BoundsResult b2 = efficiency_bounds(builtin_dgm(2));
    CHECK(b1.bound_theta > b1.bound_lambda);
    CHECK(b2.bound_theta < b2.bound_lambda);
    CHECK(std::abs(b1.bound_theta - 9.61) / 9.61 < 0.10);
    CHECK(b1.q == doctest::Approx(0.548));
  }
  SUBCASE("influence-function variances match a direct enumeration") {
    for (int id = 1; id <= 4; ++id) {
      CAPTURE(id);
      const auto [vl, vt] = hand_eif_variances(hand_model(id));
      const BoundsResult b = efficiency_bounds(builtin_dgm(id));
      CHECK(b.eif_variance_lambda == doctest::Approx(vl).epsilon(1e-10));
      CHECK(b.eif_variance_theta == doctest::Approx(vt).epsilon(1e-10));
    }
  }
  SUBCASE("residual term from the variance table") {
    const DgmSpec spec = builtin_dgm(1);
    const BoundsResult b = efficiency_bounds(spec);
    REQUIRE(b.tau2.size() == 8);
    double resid = 0.0;
    for (const auto& row : b.tau2) {
      const double sd = 0.1 + 0.8 * row.x[0];
      CHECK(row.tau2 == doctest::Approx(row.e_s * sd * sd * 4.0).epsilon(1e-12));
      const double odds = (1 - row.e_s) / row.e_s;
      resid += row.prob * row.tau2 * odds * odds;
    }
    CHECK(b.lambda_terms.residual == doctest::Approx(resid / (b.q * b.q)).epsilon(1e-12));
  }
}

TEST_CASE("child seeds") {
  CHECK(child_seed(42, 0) != child_seed(42, 1));
  CHECK(child_seed(42, 7) == child_seed(42, 7));
  std::set<std::uint64_t> seen;
  for (std::uint64_t r = 0; r < 100000; ++r) seen.insert(child_seed(9, r));
  CHECK(seen.size() == 100000);
  CHECK(child_seed(1, 0) != child_seed(2, 0));
}

TEST_CASE("Monte Carlo harness") {
  SUBCASE("smoke run gives finite rows") {
    MonteCarloConfig cfg;
    cfg.spec = builtin_dgm(3);
    cfg.n = 100;
    cfg.reps = 2;
    const MonteCarloResult r = run_monte_carlo(cfg);
    REQUIRE(r.rows.size() == 2);
    for (const auto& row : r.rows) {
      CHECK(row.replications + row.failures == 2);
      CHECK(std::isfinite(row.abs_bias));
      CHECK(row.coverage95 >= 0.0);
      CHECK(row.coverage95 <= 1.0);
    }
    CHECK(*r.rows[0].rel_eff == 1.0);
    CHECK(r.replications.size() == 2);
  }
  SUBCASE("replication seeds and thread count do not change results") {
    MonteCarloConfig cfg;
    cfg.spec = builtin_dgm(2);
    cfg.n = 300;
    cfg.reps = 6;
    cfg.estimators = {Estimand::lambda, Estimand::theta_alt};
    cfg.seed = 12;
    const MonteCarloResult one = run_monte_carlo(cfg);
    cfg.jobs = 3;
    const MonteCarloResult three = run_monte_carlo(cfg);
    CHECK(metrics_csv(one.rows) == metrics_csv(three.rows));
    for (std::size_t r = 0; r < one.replications.size(); ++r) {
      CHECK(one.replications[r].seed == child_seed(12, r));
      CHECK(one.replications[r].point == three.replications[r].point);
    }
    // A single replication reproduces on its own.
    const Dataset ds = sample_dgm(cfg.spec, cfg.n, child_seed(12, 4));
    CHECK(ds.n() == 300);
  }
  SUBCASE("relative efficiency requires lambda") {
    MonteCarloConfig cfg;
    cfg.spec = builtin_dgm(1);
    cfg.n = 100;
    cfg.estimators = {Estimand::theta};
    CHECK_THROWS_AS(run_monte_carlo(cfg), ArgumentError);
    cfg.rel_eff = false;
    CHECK_NOTHROW(run_monte_carlo(cfg));
    cfg.reps = 1;
    CHECK_THROWS_AS(run_monte_carlo(cfg), ArgumentError);
  }
  SUBCASE("oracle nuisances recover the truth") {
    for (int id : {1, 3}) {
      CAPTURE(id);
      MonteCarloConfig cfg;
      cfg.spec = builtin_dgm(id);
      cfg.n = 10000;
      cfg.reps = 200;
      cfg.oracle = true;
      cfg.estimators = {Estimand::lambda, Estimand::theta, Estimand::lambda_collab,
                        Estimand::theta_alt};
      const MonteCarloResult r = run_monte_carlo(cfg);
      for (const auto& row : r.rows) {
        CAPTURE(row.estimator);
        CHECK(row.truth == doctest::Approx(hand_truth(hand_model(id))).epsilon(1e-12));
        if (row.mc_se > 0.0)
          CHECK(row.abs_bias < 3.0 * row.mc_se);
        else
          CHECK(row.abs_bias < 1e-12);
      }
    }
  }
  SUBCASE("metrics output") {
    MonteCarloConfig cfg;
    cfg.spec = builtin_dgm(1);
    cfg.n = 200;
    cfg.reps = 3;
    const MonteCarloResult r = run_monte_carlo(cfg);
    const std::string csv = metrics_csv(r.rows);
    CHECK(csv.rfind("estimator,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(metrics_table(r.rows).find("theta") != std::string::npos);
    // Aggregates recomputed from the replication records.
    std::vector<double> pts;
    for (const auto& rec : r.replications) pts.push_back(*rec.point[0]);
    CHECK(r.rows[0].mean_point == doctest::Approx(testing_support::mean(pts)));
    const double sd = testing_support::sd(pts);
    CHECK(r.rows[0].n_times_var == doctest::Approx(200.0 * sd * sd));
    CHECK(r.rows[0].mc_se == doctest::Approx(sd / std::sqrt(3.0)));
  }
}

TEST_CASE("true nuisances") {
  const DgmSpec spec = builtin_dgm(4);
  const Dataset ds = sample_dgm(spec, 500, 4);
  const NuisanceSet nu = true_nuisances(spec, ds);
  const Model m = hand_model(4);
  for (Index i = 0; i < ds.n(); ++i) {
    std::vector<int> x(4);
    for (Index j = 0; j < 4; ++j) x[static_cast<std::size_t>(j)] = static_cast<int>(ds.w()(i, j));
    CHECK(nu.e_s_w[i] == doctest::Approx(m.es(x)));
    CHECK(nu.f_hat[i] == doctest::Approx(m.f(x)));
    CHECK(nu.e_s_z[i] == doctest::Approx(x[3] ? 0.8 - 0.125 - 0.5 : 0.8 - 0.125));
  }
}

}  // TEST_SUITE
