#include <doctest.h>

#include <cmath>
#include <set>

#include "protolink/corruptor.hpp"
#include "protolink/io.hpp"
#include "protolink/string_distance.hpp"
#include "protolink/synthgen.hpp"

using namespace protolink;

namespace {

const FrequencyTables& tables() {
  static const FrequencyTables t = FrequencyTables::load(default_data_dir());
  return t;
}

GenConfig config(int n, std::uint64_t seed = 5) {
  GenConfig c;
  c.n_records = n;
  c.seed = seed;
  return c;
}

double residual_variance(const Dataset& ds) {
  const std::size_t bp = ds.schema.index_of("bp");
  double s = 0, ss = 0;
  for (const auto& r : ds.records) {
    const double e = r.number(bp) - bp_formula_mean(ds, r);
    s += e;
    ss += e * e;
  }
  const double n = static_cast<double>(ds.size());
  return (ss - s * s / n) / (n - 1);
}

}  // namespace

TEST_CASE("bp formula") {
  CHECK(simulate_bp(60, Sex::F, 0) == doctest::Approx(100));
  CHECK(simulate_bp(0, Sex::M, 0) == doctest::Approx(170));
  CHECK(simulate_bp(40, Sex::M, 2) == doctest::Approx(152));
}

TEST_CASE("high_bp logit and saturation") {
  CHECK(high_bp_logit(100, Sex::F, 0) == doctest::Approx(-70));
  CHECK(high_bp_logit(0, Sex::M, 0) == doctest::Approx(40));
  CHECK(high_bp_logit(80, Sex::M, 0) == 0.0);
  Rng rng = make_rng(3);
  int lo = 0, hi = 0, mid = 0;
  const int trials = 20000;
  for (int k = 0; k < trials; ++k) {
    lo += simulate_high_bp(100, Sex::F, 0, rng);
    hi += simulate_high_bp(0, Sex::M, 0, rng);
    mid += simulate_high_bp(80, Sex::M, 0, rng);
  }
  CHECK(lo == 0);
  CHECK(hi == trials);
  CHECK(std::abs(mid / double(trials) - 0.5) < 3 * 0.5 / std::sqrt(double(trials)));
}

TEST_CASE("truth data: size, distinct entities, schema validity, determinism") {
  const Dataset t = generate_truth(config(500), tables());
  CHECK(t.size() == 500);
  std::set<std::int64_t> ids;
  for (const auto& r : t.records) ids.insert(*r.truth_entity);
  CHECK(ids.size() == 500);
  CHECK(*ids.begin() == 1);
  CHECK(*ids.rbegin() == 500);
  CHECK(validate_dataset(t).empty());
  CHECK(format_csv(dataset_to_table(t)) == format_csv(dataset_to_table(generate_truth(config(500), tables()))));
  CHECK(format_csv(dataset_to_table(t)) != format_csv(dataset_to_table(generate_truth(config(500, 6), tables()))));
}

TEST_CASE("near noise-free bp equals the formula") {
  GenConfig c = config(200);
  c.noise_sigma = 1e-9;
  const Dataset t = generate_truth(c, tables());
  const std::size_t bp = t.schema.index_of("bp");
  for (const auto& r : t.records) CHECK(r.number(bp) == doctest::Approx(bp_formula_mean(t, r)).epsilon(1e-9));

  GenConfig one = config(1);
  one.noise_sigma = 1e-9;
  const Dataset single = generate_truth(one, tables());
  REQUIRE(single.size() == 1);
  CHECK(single.records[0].number(bp) == doctest::Approx(bp_formula_mean(single, single.records[0])));
}

TEST_CASE("duplicates") {
  const Dataset truth = generate_truth(config(500), tables());

  SUBCASE("rate 0 leaves the data unchanged") {
    GenConfig c = config(500);
    c.duplication_rate = 0;
    Rng rng = make_rng(1);
    const Dataset out = inject_duplicates(truth, c, tables(), rng);
    CHECK(format_csv(dataset_to_table(out)) == format_csv(dataset_to_table(truth)));
  }

  SUBCASE("150 entities duplicated with 1..5 copies each") {
    Rng rng = make_rng(2);
    const Dataset obs = inject_duplicates(truth, config(500), tables(), rng);
    CHECK(obs.size() >= 650);
    CHECK(obs.size() <= 1250);
    std::set<std::int64_t> dup_entities;
    std::map<std::int64_t, int> copies;
    for (const auto& r : obs.records)
      if (*r.is_duplicate) {
        dup_entities.insert(*r.truth_entity);
        ++copies[*r.truth_entity];
      }
    CHECK(dup_entities.size() == 150);
    for (const auto& [e, k] : copies) CHECK((k >= 1 && k <= 5));
    CHECK(validate_dataset(obs).empty());
    // Entity ids untouched: truth clustering rebuilds the planted partition.
    CHECK(truth_clustering(obs).cluster_count() == 500);

    const auto& s = obs.schema;
    const std::size_t first = s.index_of("first_name"), last = s.index_of("last_name"), sex = s.index_of("sex"),
                      high = s.index_of("high_bp");
    for (const auto& r : obs.records) {
      if (!*r.is_duplicate) continue;
      const Record& orig = truth.records[static_cast<std::size_t>(*r.truth_entity - 1)];
      CHECK(levenshtein(r.text(first), orig.text(first)) <= 2);
      CHECK(levenshtein(r.text(last), orig.text(last)) <= 2);
      CHECK((r.text(sex) == "M" || r.text(sex) == "F"));
      CHECK(r.values[high] == orig.values[high]);
    }
  }

  SUBCASE("exactly n_distorted_fields of the five may change") {
    Rng rng = make_rng(4);
    GenConfig c = config(500);
    c.n_distorted_fields = 2;
    const Dataset obs = inject_duplicates(truth, c, tables(), rng);
    const auto& s = obs.schema;
    const std::vector<std::size_t> cols{s.index_of("birthdate"), s.index_of("sex"), s.index_of("education"),
                                        s.index_of("income"), s.index_of("bp")};
    for (const auto& r : obs.records) {
      if (!*r.is_duplicate) continue;
      const Record& orig = truth.records[static_cast<std::size_t>(*r.truth_entity - 1)];
      int changed = 0;
      for (auto k : cols) changed += r.values[k] != orig.values[k];
      CHECK(changed <= 2);
    }
  }
}

TEST_CASE("birthdate noise has half-normal mean 5*sqrt(2/pi)") {
  GenConfig c = config(5000, 9);
  c.duplication_rate = 0.9;
  c.n_distorted_fields = 5;
  const Dataset truth = generate_truth(c, tables());
  Rng rng = make_rng(10);
  const Dataset obs = inject_duplicates(truth, c, tables(), rng);
  const std::size_t bd = obs.schema.index_of("birthdate");
  double sum = 0;
  int n = 0;
  for (const auto& r : obs.records) {
    if (!*r.is_duplicate) continue;
    sum += std::abs(r.number(bd) - truth.records[static_cast<std::size_t>(*r.truth_entity - 1)].number(bd));
    ++n;
  }
  REQUIRE(n >= 10000);
  CHECK(sum / n == doctest::Approx(5 * std::sqrt(2 / M_PI)).epsilon(0.03));
}

TEST_CASE("test set: deterministic, distinct, noise scales with sigma") {
  const Dataset a = generate_test_set(config(500), tables());
  CHECK(a.size() == 500);
  CHECK(format_csv(dataset_to_table(a)) == format_csv(dataset_to_table(generate_test_set(config(500), tables()))));
  CHECK(format_csv(dataset_to_table(a)) != format_csv(dataset_to_table(generate_truth(config(500), tables()))));
  std::set<std::int64_t> ids;
  for (const auto& r : a.records) ids.insert(*r.truth_entity);
  CHECK(ids.size() == a.size());

  GenConfig c5 = config(500);
  c5.noise_sigma = 5;
  CHECK(residual_variance(generate_test_set(c5, tables())) > residual_variance(a));
  CHECK(residual_variance(a) == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("database split keeps every record") {
  const Dataset truth = generate_truth(config(100), tables());
  Rng rng = make_rng(1);
  const Dataset split = shuffle_into_databases(truth, 3, rng);
  CHECK(split.size() == 100);
  CHECK(split.database_count() == 3);
  CHECK(validate_dataset(split).empty());
  CHECK(truth_clustering(split).cluster_count() == 100);
}

TEST_CASE("name corruption stays within the edit budget") {
  const auto& mis = tables().misspellings;
  Rng rng = make_rng(12);
  for (const std::string name : {"catherine", "li", "o", "smith", "thompson", "philip"})
    for (int budget = 0; budget <= 2; ++budget)
      for (int k = 0; k < 200; ++k) {
        const std::string out = corrupt_name(name, budget, rng, mis);
        CHECK(levenshtein(out, name) <= budget);
        CHECK(!out.empty());
      }
}

TEST_CASE("invalid generation settings are rejected") {
  GenConfig c;
  c.duplication_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GenConfig{};
  c.noise_sigma = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GenConfig{};
  c.max_duplicates = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
