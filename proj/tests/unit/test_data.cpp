#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <doctest.h>

#include "ectr/data.hpp"
#include "ectr/error.hpp"

using namespace ectr;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ECTR_FIXTURES;

Schema two_feature_schema() { return parse_schema("a:feature,c:feature,y:label,env:env_id"); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double label_share(const Batch& b) {
  double ones = 0.0;
  for (double y : b.y) ones += y;
  return ones / static_cast<double>(b.size());
}

}  // namespace

TEST_CASE("three-row fixture parses exactly") {
  const auto t = load_delimited(kFixtures / "three_rows.csv", parse_schema("a:feature,b:feature,t:aux,y:label,env:env_id"));
  CHECK(t.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(t.aux_names == std::vector<std::string>{"t"});
  CHECK(t.batch.x == Matrix{{1.5, -2}, {0, 0.4}, {-3.25, 10}});
  CHECK(t.batch.aux == Matrix{{0.25}, {0.75}, {1}});
  CHECK(t.batch.y == Vector{1, 0, 1});
  CHECK(t.batch.env == std::vector<int>{3, 7, 3});
}

TEST_CASE("tab-delimited files and ignored columns") {
  const auto t = load_delimited(kFixtures / "tabbed.tsv", parse_schema("a:feature,b:ignore,t:aux,y:label,env:env_id"), '\t');
  CHECK(t.batch.x == Matrix{{1}});
  CHECK(t.batch.y == Vector{1});
}

TEST_CASE("malformed cells report row and column") {
  try {
    load_delimited(kFixtures / "malformed.csv", two_feature_schema());
    FAIL("no exception");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == 2);
  }
  CHECK_THROWS_AS(load_delimited(kFixtures / "quoted.csv", two_feature_schema()), ParseError);
}

TEST_CASE("schema problems") {
  CHECK_THROWS_AS(load_delimited(kFixtures / "no_label.csv", parse_schema("a:feature,c:feature,env:env_id")), SchemaError);
  CHECK_THROWS_AS(load_delimited(kFixtures / "three_rows.csv", two_feature_schema()), SchemaError);
  CHECK_THROWS_AS(parse_schema("a:feature,a:label"), SchemaError);
  CHECK_THROWS_AS(parse_schema("a:weight"), SchemaError);
  CHECK_THROWS_AS(parse_schema("a"), SchemaError);
  CHECK_THROWS_AS(load_delimited(kFixtures / "does_not_exist.csv", two_feature_schema()), InputError);
}

TEST_CASE("standardization uses training statistics and floors the spread") {
  const std::vector<fs::path> train{kFixtures / "constant_column.csv"};
  const std::vector<fs::path> test{kFixtures / "holdout.csv"};
  const auto d = load_dataset(train, test, two_feature_schema());
  // Column a = {1,2,3}: mean 2, population std sqrt(2/3).
  const double sd = std::sqrt(2.0 / 3.0);
  CHECK(d.train.x(0, 0) == doctest::Approx(-1.0 / sd));
  CHECK(d.train.x(2, 0) == doctest::Approx(1.0 / sd));
  for (std::size_t i = 0; i < 3; ++i) CHECK(d.train.x(i, 1) == 0.0);
  CHECK(d.test[0].x(0, 0) == doctest::Approx(2.0 / sd));
  CHECK(d.test[0].x(0, 1) == 0.0);
  CHECK(d.num_train_envs == 2);
  CHECK(d.train.env == std::vector<int>{0, 0, 1});
}

TEST_CASE("training environment ids are remapped in ascending order") {
  const std::vector<fs::path> train{kFixtures / "three_rows.csv"};
  const auto d = load_dataset(train, train, parse_schema("a:feature,b:feature,t:aux,y:label,env:env_id"));
  CHECK(d.num_train_envs == 2);
  CHECK(d.train.env == std::vector<int>{0, 1, 0});
  CHECK(d.train_env(0).size() == 2);
}

TEST_CASE("simulation: balance, reference rules and determinism") {
  SimulationSpec s;
  s.n_per_env = 5000;
  s.seed = 3;
  const auto d = generate_simulation(s);
  CHECK(d.num_train_envs == 2);
  CHECK(d.test.size() == 5);
  for (std::size_t e = 0; e < 2; ++e) CHECK(std::abs(label_share(d.train_env(e)) - 0.5) <= 0.05);
  for (const auto& t : d.test) {
    CHECK(std::abs(label_share(t) - 0.5) <= 0.05);
    CHECK(t.x.cols() == 2);
  }
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const double t = d.train.aux(i, 0);
    CHECK((d.train.env[i] == 0 ? (t >= 0.0 && t < 0.5) : (t >= 0.5 && t < 1.0)));
  }
  const auto r = split_metrics_oracle(d);
  CHECK(r.spurious_train[0] == doctest::Approx(0.999).epsilon(0.005));
  CHECK(std::abs(r.spurious_train[1] - 0.9) <= 0.02);
  CHECK(std::abs(r.spurious_test[2] - 0.5) <= 0.03);

  const auto again = generate_simulation(s);
  CHECK(again.train.x == d.train.x);
  CHECK(again.test[4].y == d.test[4].y);
  s.seed = 4;
  CHECK_FALSE(generate_simulation(s).train.x == d.train.x);
}

TEST_CASE("simulation: invariant rule is flat across environments, spurious rule tracks p_s") {
  SimulationSpec s;
  s.n_per_env = 20000;
  s.noise_std = 0.0;
  s.seed = 8;
  const auto d = generate_simulation(s);
  const auto r = split_metrics_oracle(d);
  std::vector<double> inv = r.invariant_train;
  inv.insert(inv.end(), r.invariant_test.begin(), r.invariant_test.end());
  const auto [lo, hi] = std::minmax_element(inv.begin(), inv.end());
  CHECK(*hi - *lo < 0.02);
  for (double a : inv) CHECK(std::abs(a - 0.8) <= 0.01);
  for (std::size_t k = 0; k < s.p_s_test.size(); ++k) CHECK(std::abs(r.spurious_test[k] - s.p_s_test[k]) <= 0.02);
  CHECK(std::abs(r.spurious_test[4] - 0.1) <= 0.01);
}

TEST_CASE("simulation: a noiseless invariant feature is perfectly predictive") {
  SimulationSpec s;
  s.n_per_env = 2000;
  s.p_v = 1.0;
  s.noise_std = 0.0;
  const auto r = split_metrics_oracle(generate_simulation(s));
  for (double a : r.invariant_test) CHECK(a == 1.0);
  for (double a : r.invariant_train) CHECK(a == 1.0);
}

TEST_CASE("simulation: invalid specs are config errors") {
  SimulationSpec s;
  s.n_per_env = 0;
  CHECK_THROWS_AS(generate_simulation(s), ConfigError);
  s = {};
  s.p_v = 0.4;
  CHECK_THROWS_AS(generate_simulation(s), ConfigError);
  s = {};
  s.p_s_test = {0.5, 1.2};
  CHECK_THROWS_AS(generate_simulation(s), ConfigError);
  s = {};
  s.noise_std = -1.0;
  CHECK_THROWS_AS(generate_simulation(s), ConfigError);
}

TEST_CASE("written files load back to the same numbers") {
  SimulationSpec s;
  s.n_per_env = 50;
  s.seed = 1;
  const auto d = generate_simulation(s);
  const auto dir = fs::temp_directory_path() / ("ectr_data_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  write_delimited(dir / "train_e0.csv", d.train_env(0), d.feature_names, d.aux_names);
  write_delimited(dir / "again.csv", d.train_env(0), d.feature_names, d.aux_names);
  CHECK(slurp(dir / "train_e0.csv") == slurp(dir / "again.csv"));
  const auto t = load_delimited(dir / "train_e0.csv", parse_schema("x_inv:feature,x_sp:feature,t:aux,y:label,env:env_id"));
  CHECK(t.batch.x == d.train_env(0).x);
  CHECK(t.batch.aux == d.train_env(0).aux);
  CHECK(t.batch.y == d.train_env(0).y);
  fs::remove_all(dir);
}

TEST_CASE("concat keeps environment ids only when every part has them") {
  Batch a, b;
  a.x = Matrix{{1}};
  a.y = {1};
  a.env = {0};
  b.x = Matrix{{2}};
  b.y = {0};
  const std::vector<Batch> parts{a, b};
  const auto c = concat(parts);
  CHECK(c.size() == 2);
  CHECK_FALSE(c.has_env_ids());
  const std::vector<Batch> both{a, a};
  CHECK(concat(both).env == std::vector<int>{0, 0});
}
