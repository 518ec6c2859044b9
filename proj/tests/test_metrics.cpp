#include <doctest.h>

#include <cmath>
#include <random>

#include "protolink/metrics.hpp"
#include "test_util.hpp"

using namespace protolink;
using testutil::field;

namespace {

std::vector<RecordId> ids(std::size_t n) {
  std::vector<RecordId> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back({1, static_cast<int>(k) + 1});
  return out;
}

PRScore score(const std::vector<int>& pred, const std::vector<int>& truth) {
  return pairwise_precision_recall(clusters_from_lambda(ids(pred.size()), pred),
                                   clusters_from_lambda(ids(truth.size()), truth));
}

Schema sex_schema() {
  Schema s;
  s.fields = {field("sex", FieldKind::Categorical), field("bp", FieldKind::Numeric)};
  return s;
}

}  // namespace

TEST_CASE("pairwise precision and recall") {
  SUBCASE("identical partitions") {
    const auto s = score({1, 1, 2, 3, 3}, {7, 7, 8, 9, 9});
    CHECK(s.tp == 2);
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
  }
  SUBCASE("{AB|C} against {A|BC}") {
    const auto s = score({1, 1, 2}, {1, 2, 2});
    CHECK(s.tp == 0);
    CHECK(s.fp == 1);
    CHECK(s.fn == 1);
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 0.0);
  }
  SUBCASE("one big cluster against {AB|C}") {
    const auto s = score({1, 1, 1}, {1, 1, 2});
    CHECK(s.precision == doctest::Approx(1.0 / 3));
    CHECK(s.recall == 1.0);
  }
  SUBCASE("no predicted or true links") {
    const auto s = score({1, 2, 3}, {1, 2, 3});
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(score({1, 2, 3}, {1, 1, 3}).recall == 0.0);
  }
  SUBCASE("mismatched record sets are rejected") {
    CHECK_THROWS_AS(pairwise_precision_recall(clusters_from_lambda(ids(3), std::vector<int>{1, 1, 2}),
                                              clusters_from_lambda(ids(2), std::vector<int>{1, 1})),
                    StructuralError);
    const std::vector<int> a{1, 2};
    const std::vector<std::int64_t> b{1};
    CHECK_THROWS_AS(precision_recall_from_labels(a, b), StructuralError);
  }
}

TEST_CASE("contingency counts agree with pair enumeration") {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + g() % 40;
    const auto pred = testutil::random_labels(g, n, 1 + static_cast<int>(g() % n));
    const auto tl = testutil::random_labels(g, n, 1 + static_cast<int>(g() % n));
    const std::vector<std::int64_t> truth(tl.begin(), tl.end());
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const bool p = pred[a] == pred[b], t = truth[a] == truth[b];
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
      }
    const auto s = precision_recall_from_labels(pred, truth);
    CHECK(s.tp == tp);
    CHECK(s.fp == fp);
    CHECK(s.fn == fn);
    if (tp + fp > 0) CHECK(s.precision == doctest::Approx(double(tp) / double(tp + fp)));
    if (tp + fn > 0) CHECK(s.recall == doctest::Approx(double(tp) / double(tp + fn)));
  }
}

TEST_CASE("KL divergence") {
  const std::vector<double> p{0.25, 0.75}, q{0.5, 0.5};
  CHECK(kl_divergence(p, q) == doctest::Approx(0.25 * std::log(0.5) + 0.75 * std::log(1.5)));
  CHECK(kl_divergence(p, p) == 0.0);
  const std::vector<double> zero_p{0, 1}, zero_q{0, 1};
  CHECK(kl_divergence(zero_p, zero_q) == 0.0);
  const std::vector<double> bad_q{1, 0};
  CHECK_THROWS(kl_divergence(p, bad_q));
}

TEST_CASE("empirical KL with smoothed truth histogram") {
  const Schema s = sex_schema();
  const Dataset truth = testutil::from_csv(s, "sex,bp\nF,1\nF,2\nF,3\nM,4\n");
  const Dataset rep = testutil::from_csv(s, "sex,bp\nF,1\nM,4\n");
  KlOptions only_sex;
  only_sex.fields = {"sex"};
  // Two cells, pseudo-count 1/4 each.
  const double qf = 3.25 / 4.5, qm = 1.25 / 4.5;
  CHECK(empirical_kl(rep, truth, only_sex) == doctest::Approx(0.5 * std::log(0.5 / qf) + 0.5 * std::log(0.5 / qm)));
  const std::vector<double> w{3, 1};
  CHECK(empirical_kl(rep, truth, only_sex, w) ==
        doctest::Approx(0.75 * std::log(0.75 / qf) + 0.25 * std::log(0.25 / qm)));
  CHECK(empirical_kl(truth, truth, only_sex) < 0.02);

  SUBCASE("a representative equal to a large truth sample is close to zero") {
    std::mt19937_64 g(2);
    std::string csv = "sex,bp\n";
    for (int k = 0; k < 2000; ++k)
      csv += std::string(g() % 2 ? "M" : "F") + "," + std::to_string(std::normal_distribution<double>(120, 15)(g)) + "\n";
    const Dataset big = testutil::from_csv(s, csv);
    KlOptions both;
    both.fields = {"sex", "bp"};
    CHECK(empirical_kl(big, big, both) < 1e-3);
  }
  SUBCASE("errors") {
    const std::vector<double> zeros{0, 0};
    CHECK_THROWS_AS(empirical_kl(rep, truth, only_sex, zeros), StructuralError);
    const std::vector<double> short_w{1};
    CHECK_THROWS_AS(empirical_kl(rep, truth, only_sex, short_w), StructuralError);
  }
}

TEST_CASE("mean squared error") {
  const std::vector<double> a{1, 2, 3}, b{1, 4, 0};
  CHECK(mse(a, b) == doctest::Approx((0 + 4 + 9) / 3.0));
  CHECK(mse(a, a) == 0.0);
  const std::vector<double> shorter{1};
  CHECK_THROWS_AS(mse(a, shorter), StructuralError);
  CHECK_THROWS_AS(mse(std::vector<double>{}, std::vector<double>{}), StructuralError);
}

TEST_CASE("interval coverage") {
  const std::vector<Interval> iv{{0, 1}, {2, 3}, {-1, -0.5}};
  const std::vector<double> truth{1, 2.5, 0};
  const auto c = coverage(iv, truth);
  CHECK(c.contained == std::vector<bool>{true, true, false});
  CHECK(c.rate == doctest::Approx(2.0 / 3));
  const std::vector<double> two{1, 2};
  CHECK_THROWS_AS(coverage(iv, two), StructuralError);
}
