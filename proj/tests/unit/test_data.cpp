#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include <tsgbt/csv.hpp>
#include <tsgbt/data.hpp>
#include <tsgbt/rng.hpp>

using namespace tsgbt;
using Catch::Approx;

namespace {

csv::Table table_of(const std::string& text) {
  std::istringstream in(text);
  return csv::read_stream(in);
}

}  // namespace

TEST_CASE("rand_weight values", "[data]") {
  CHECK(rand_weight(1, 0.5).value == 2.0);
  CHECK(rand_weight(-1, 0.5).value == 2.0);
  CHECK(rand_weight(1, 0.25).value == Approx(4.0));
  CHECK(rand_weight(-1, 0.25).value == Approx(4.0 / 3.0));
  CHECK_THROWS_AS(rand_weight(1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rand_weight(1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rand_weight(0, 0.5), std::invalid_argument);
}

TEST_CASE("rand_weight weighted arm probabilities sum to two", "[data]") {
  for (int k = 1; k < 100; ++k) {
    double p = k / 100.0;
    CHECK(rand_weight(1, p).value * p + rand_weight(-1, p).value * (1 - p) == Approx(2.0).epsilon(1e-14));
  }
}

TEST_CASE("weighted mean of t is zero in expectation", "[data]") {
  Rng rng(42);
  for (double p : {0.25, 0.5, 0.7}) {
    std::bernoulli_distribution arm(p);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      int t = arm(rng) ? 1 : -1;
      double v = rand_weight(t, p).value * t;
      s += v;
      s2 += v * v;
    }
    double mean = s / n;
    double se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean) < 3 * se);
  }
}

TEST_CASE("TrialDataset validates its invariants", "[data]") {
  Matrix x(2, 1, 0.0);
  CHECK_NOTHROW(TrialDataset::make({1, 2}, {1, -1}, x, 0.5, OutcomeKind::continuous));
  CHECK_THROWS_AS(TrialDataset::make({1, 2}, {1, 0}, x, 0.5, OutcomeKind::continuous), std::invalid_argument);
  CHECK_THROWS_AS(TrialDataset::make({1, 2}, {1, -1}, x, 1.0, OutcomeKind::continuous), std::invalid_argument);
  CHECK_THROWS_AS(TrialDataset::make({1, 2}, {1, -1}, x, 0.5, OutcomeKind::binary), std::invalid_argument);
  CHECK_THROWS_AS(TrialDataset::make({1, 0}, {1, -1}, x, 0.5, OutcomeKind::binary, {1.0, 0.0}),
                  std::invalid_argument);
  Matrix bad(2, 1, std::nan(""));
  CHECK_THROWS_AS(TrialDataset::make({1, 2}, {1, -1}, bad, 0.5, OutcomeKind::continuous), std::invalid_argument);
  CHECK_THROWS_AS(TrialDataset::make({1}, {1, -1}, x, 0.5, OutcomeKind::continuous), std::invalid_argument);
}

TEST_CASE("combined weight multiplies randomization and sampling weights", "[data]") {
  Matrix x(2, 1, 0.0);
  auto d = TrialDataset::make({1, 0}, {1, -1}, x, 0.25, OutcomeKind::binary, {3.0, 0.5});
  CHECK(d.weights()[0] == Approx(12.0));
  CHECK(d.weights()[1] == Approx(0.5 * 4.0 / 3.0));
  CHECK(d.feature_names() == std::vector<std::string>{"x1"});
}

TEST_CASE("load three-row csv", "[data]") {
  auto t = table_of("y,t,a,b\n1.5,1,0,2\n-0.5,-1,1,3\n2,1,0.25,4\n");
  auto d = dataset_from_table(t, CsvSchema{});
  CHECK(d.n() == 3);
  CHECK(d.p() == 2);
  CHECK(d.feature_names() == std::vector<std::string>{"a", "b"});
  CHECK(d.x()(2, 0) == 0.25);
  CHECK(d.t() == std::vector<int>{1, -1, 1});
  CHECK(d.p_treat() == Approx(2.0 / 3.0));
}

TEST_CASE("zero-one treatment coding is remapped", "[data]") {
  auto t = table_of("y,t,x\n1,1,0\n0,0,1\n");
  CsvSchema s;
  s.coding = TreatmentCoding::zero_one;
  s.p_treat = 0.5;
  auto d = dataset_from_table(t, s);
  CHECK(d.t() == std::vector<int>{1, -1});
  s.coding = TreatmentCoding::plus_minus_one;
  CHECK_THROWS_AS(dataset_from_table(t, s), csv::ParseError);
}

TEST_CASE("csv errors name row and column", "[data]") {
  CsvSchema bin;
  bin.outcome_kind = OutcomeKind::binary;
  try {
    dataset_from_table(table_of("y,t,x\n1,1,0\n2,-1,1\n"), bin);
    FAIL("expected a parse error");
  } catch (const csv::ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == "y");
  }
  try {
    dataset_from_table(table_of("y,t,x\n1,1,abc\n"), CsvSchema{});
    FAIL("expected a parse error");
  } catch (const csv::ParseError& e) {
    CHECK(e.row() == 1);
    CHECK(e.column() == "x");
  }
  try {
    dataset_from_table(table_of("y,x\n1,1\n"), CsvSchema{});
    FAIL("expected a parse error");
  } catch (const csv::ParseError& e) {
    CHECK(e.column() == "t");
  }
  CHECK_THROWS_AS(table_of("y,t\n1\n"), csv::ParseError);
  CHECK_THROWS_AS(dataset_from_table(table_of("y,t,x\n1,1,\n"), CsvSchema{}), csv::ParseError);
}

TEST_CASE("csv details: quotes, BOM, excluded and weight columns", "[data]") {
  auto t = table_of("\xEF\xBB\xBFy,t,\"w\",true_tau,x\r\n1,1,2,9,\"3\"\r\n0,-1,1,9,4\r\n");
  CsvSchema s;
  s.weight = "w";
  auto d = dataset_from_table(t, s);
  CHECK(d.p() == 1);
  CHECK(d.feature_names()[0] == "x");
  CHECK(d.w_sample() == std::vector<double>{2, 1});
  CHECK(d.x()(0, 0) == 3.0);
}

TEST_CASE("format_double round-trips", "[data]") {
  Rng rng(3);
  std::normal_distribution<double> nd(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    double v = nd(rng);
    CHECK(*csv::parse_double(csv::format_double(v)) == v);
  }
  CHECK(!csv::parse_double("1.0x"));
  CHECK(!csv::parse_double(""));
}
