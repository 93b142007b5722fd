#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "transport/cli.hpp"
#include "transport/error.hpp"
#include "transport/simulation.hpp"

using namespace transport;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "transport_cli_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Y = A, selection independent of covariates.
void write_constant_effect(const fs::path& data, const fs::path& schema) {
  const Dataset ds = testing_support::random_binary(
      300, 2, 21, [](int a, const auto&, auto&) { return static_cast<double>(a); });
  write_csv(data.string(), ds);
  write_text(schema, schema_to_json(default_schema(ds)));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate prints a table and writes metrics") {
  const fs::path out = scratch("sim.csv");
  const Run r = cli({"simulate", "--dgm", "3", "--n", "1000", "--reps", "20", "--seed", "7",
                     "--folds", "5", "--estimators", "lambda,theta,lambda_c", "--out",
                     out.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("rel_eff") != std::string::npos);
  std::istringstream lines(slurp(out));
  std::string header, line;
  std::getline(lines, header);
  CHECK(header.find("rel_eff") != std::string::npos);
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].rfind("lambda,", 0) == 0);
  // rel_eff of lambda is exactly one.
  CHECK(rows[0].find(",1,20,0") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
  const Run bad_id = cli({"simulate", "--dgm", "5", "--n", "10"});
  CHECK(bad_id.code == 2);
  CHECK(bad_id.err.find("1, 2, 3, 4") != std::string::npos);
  CHECK(cli({"bounds", "--dgm", "0"}).code == 2);
  CHECK(cli({"simulate", "--dgm", "1", "--estimators", "lambda,gamma"}).code == 2);
  CHECK(cli({"simulate", "--dgm", "1", "--clip", "0.9,0.1"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);
}

TEST_CASE("reruns are byte-identical and independent of the thread count") {
  auto run = [](const std::string& tag, const std::string& jobs) {
    const fs::path m = scratch("det_m_" + tag + ".csv"), r = scratch("det_r_" + tag + ".csv");
    const Run res = cli({"simulate", "--dgm", "4", "--n", "400", "--reps", "6", "--seed", "3",
                         "--estimators", "lambda,theta,lambda_c,theta_alt", "--jobs", jobs,
                         "--out", m.string(), "--reps-out", r.string()});
    REQUIRE(res.code == 0);
    return std::make_pair(slurp(m) + slurp(r), res.out);
  };
  const auto a = run("a", "1");
  const auto b = run("b", "1");
  const auto c = run("c", "3");
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("estimate on data with a known constant effect") {
  const fs::path data = scratch("const.csv"), schema = scratch("const.json");
  write_constant_effect(data, schema);
  for (const char* est : {"lambda", "lambda_c", "source_ate", "theta", "theta_alt"}) {
    CAPTURE(est);
    const fs::path out = scratch(std::string("est_") + est + ".json");
    std::vector<std::string> args{"estimate", "--data", data.string(), "--schema",
                                  schema.string(), "--estimator", est, "--out", out.string()};
    if (std::string(est).rfind("theta", 0) == 0) {
      args.insert(args.end(), {"--v", "w0,w1", "--z", "w1"});
    }
    const Run r = cli(args);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("point:") != std::string::npos);
    const auto doc = nlohmann::json::parse(slurp(out));
    CHECK(std::abs(doc.at("point").get<double>() - 1.0) < 1e-8);
    CHECK(doc.at("ci95")[0].get<double>() <= 1.0 + 1e-8);
    CHECK(doc.at("ci95")[1].get<double>() >= 1.0 - 1e-8);
    CHECK(doc.at("diagnostics").at("folds").get<int>() == 5);
  }
}

TEST_CASE("estimate argument checks") {
  const fs::path data = scratch("const2.csv"), schema = scratch("const2.json");
  write_constant_effect(data, schema);
  const std::vector<std::string> base{"estimate", "--data", data.string(), "--schema",
                                      schema.string()};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args).code;
  };
  CHECK(with({"--estimator", "theta"}) == 2);
  CHECK(with({"--estimator", "theta", "--v", "w0"}) == 2);
  CHECK(with({"--estimator", "lambda_c", "--v", "w0", "--z", "w0"}) == 2);
  CHECK(with({"--estimator", "theta", "--v", "w0,nope", "--z", "w0"}) == 2);
  CHECK(with({"--estimator", "oops"}) == 2);
  write_text(scratch("bad_schema.json"), R"({"s":"s","a":"a","y":"y","w":["missing"]})");
  CHECK(cli({"estimate", "--data", data.string(), "--schema", scratch("bad_schema.json").string(),
             "--estimator", "lambda"})
            .code == 2);
}

TEST_CASE("unmeasured effect modifiers in the target") {
  const DgmSpec spec = builtin_dgm(4);
  const IndexSet v_extra{1, 2};
  const Dataset ds = sample_dgm(spec, 2000, 12).mask_target_columns(v_extra);
  const fs::path data = scratch("masked.csv"), schema = scratch("masked.json");
  write_csv(data.string(), ds);
  write_text(schema, schema_to_json(default_schema(ds)));
  const std::vector<std::string> base{"estimate", "--data", data.string(), "--schema",
                                      schema.string(), "--v", "V1,V2,Z", "--z", "Z"};
  auto run = [&](const std::string& est) {
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--estimator", est});
    return cli(args);
  };
  const Run theta = run("theta");
  CHECK(theta.code == 1);
  CHECK(theta.err.find("V1") != std::string::npos);
  CHECK(theta.err.find("V2") != std::string::npos);
  CHECK(run("theta_alt").code == 0);
}

TEST_CASE("interpretable collaborative estimate on DGM 4") {
  const Dataset ds = sample_dgm(builtin_dgm(4), 10000, 44);
  const fs::path data = scratch("dgm4.csv"), schema = scratch("dgm4.json"),
                 out = scratch("dgm4_out.json");
  write_csv(data.string(), ds);
  write_text(schema, schema_to_json(default_schema(ds)));
  const Run r = cli({"estimate", "--data", data.string(), "--schema", schema.string(),
                     "--estimator", "lambda_c", "--interpretable", "--out", out.string()});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(slurp(out));
  const auto v = doc.at("selected_v").get<std::vector<std::string>>();
  const auto z = doc.at("selected_z").get<std::vector<std::string>>();
  for (const char* name : {"Z", "V1", "V2"})
    CHECK(std::find(v.begin(), v.end(), name) != v.end());
  CHECK(std::find(z.begin(), z.end(), "Z") != z.end());
  for (const auto& name : z) CHECK(std::find(v.begin(), v.end(), name) != v.end());
  CHECK(r.out.find("selected Z") != std::string::npos);
}

TEST_CASE("bounds") {
  const Run b3 = cli({"bounds", "--dgm", "3"});
  REQUIRE(b3.code == 0);
  CHECK(b3.out.find("first 0.000000") != std::string::npos);
  auto ratio = [](int id) {
    const fs::path out = scratch("bounds" + std::to_string(id) + ".json");
    REQUIRE(cli({"bounds", "--dgm", std::to_string(id), "--out", out.string()}).code == 0);
    const auto doc = nlohmann::json::parse(slurp(out));
    const double r = doc.at("ratio").get<double>();
    CHECK(r == doctest::Approx(doc.at("bound_theta").get<double>() /
                               doc.at("bound_lambda").get<double>()));
    CHECK(doc.at("tau2").size() == (id > 2 ? (id == 3 ? 4u : 16u) : 8u));
    return r;
  };
  CHECK(ratio(1) > 1.0);
  CHECK(ratio(2) < 1.0);
  CHECK(ratio(3) > 0.0);
  const Run b1 = cli({"bounds", "--dgm", "1"});
  CHECK(b1.out.find("tau^2") != std::string::npos);
}

TEST_CASE("learner configuration documents") {
  const NuisanceLearners l = parse_learner_config(
      R"({"selection": {"kind": "glm_twoway", "family": "binomial"},
          "outcome": [{"kind": "intercept", "family": "gaussian"},
                      {"kind": "glm_main", "family": "gaussian"}]})");
  REQUIRE(l.selection.candidates.size() == 1);
  CHECK(l.selection.candidates[0].kind == LearnerKind::glm_twoway);
  CHECK(l.outcome.candidates.size() == 2);
  CHECK_THROWS_AS(parse_learner_config(R"({"bogus": {}})"), ArgumentError);
  CHECK_THROWS_AS(parse_learner_config("[1,2"), ArgumentError);
}

}  // TEST_SUITE
