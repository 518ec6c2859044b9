#include "protolink/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <set>

#include "protolink/io.hpp"

#ifndef PROTOLINK_DATA_DIR
#define PROTOLINK_DATA_DIR "data"
#endif

namespace protolink {

namespace {

constexpr std::uint64_t kTruthStream = 0x7472757468ULL;
constexpr std::uint64_t kTestStream = 0x74657374ULL;

// Reference date for age bands: 2017-01-01.
constexpr int kReferenceDay = 17167;
// Birthdates drawn uniformly from 1930-01-01 .. 1995-12-31.
constexpr int kFirstBirthday = -14610;
constexpr int kLastBirthday = 9495;

constexpr double kBirthdateNoiseSd = 5.0;  // Normal(0, 25) read as variance 25

double indicator(Sex s) { return s == Sex::M ? 1.0 : 0.0; }

int age_band(int birthdate) {
  double age = (kReferenceDay - birthdate) / 365.25;
  if (age < 45) return 0;
  if (age < 65) return 1;
  return 2;
}

const char* sex_label(Sex s) { return s == Sex::M ? "M" : "F"; }

}  // namespace

double simulate_bp(double income, Sex sex, double epsilon) {
  const double m = indicator(sex);
  return 160.0 + 10.0 * m - income + 0.5 * income * m + epsilon;
}

double high_bp_logit(double income, Sex sex, double epsilon) {
  const double m = indicator(sex);
  return 30.0 + 10.0 * m - income + 0.5 * income * m + epsilon;
}

int simulate_high_bp(double income, Sex sex, double epsilon, Rng& rng) {
  const double eta = high_bp_logit(income, sex, epsilon);
  const double p = 1.0 / (1.0 + std::exp(-eta));
  return uniform01(rng) < p ? 1 : 0;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("PROTOLINK_DATA_DIR"); env && *env) return env;
  return PROTOLINK_DATA_DIR;
}

FrequencyTables FrequencyTables::load(const std::filesystem::path& dir) {
  FrequencyTables t;
  auto number = [](const std::string& cell, const std::string& what) {
    double x = 0;
    if (!parse_number(cell, x)) throw StructuralError("table " + what + ": bad number '" + cell + "'");
    return x;
  };

  auto first = read_csv(dir / "first_names.csv");
  for (const auto& row : first.rows)
    t.first_names.push_back({row[first.column("name")], number(row[first.column("frequency")], "first_names"),
                             number(row[first.column("male_fraction")], "first_names")});

  auto last = read_csv(dir / "last_names.csv");
  for (const auto& row : last.rows)
    t.last_names.emplace_back(row[last.column("name")], number(row[last.column("frequency")], "last_names"));

  auto edu = read_csv(dir / "education.csv");
  const std::vector<std::string> bands{"25-44", "45-64", "65+"};
  for (const auto& row : edu.rows) {
    const auto& level = row[edu.column("level")];
    if (std::find(t.education_levels.begin(), t.education_levels.end(), level) == t.education_levels.end())
      t.education_levels.push_back(level);
  }
  const std::size_t L = t.education_levels.size();
  t.education.assign(2, std::vector<std::vector<double>>(bands.size(), std::vector<double>(L, 0.0)));
  for (const auto& row : edu.rows) {
    const auto& sex = row[edu.column("sex")];
    auto band = std::find(bands.begin(), bands.end(), row[edu.column("age_band")]);
    if (band == bands.end() || (sex != "M" && sex != "F")) throw StructuralError("education table: bad row");
    auto level = std::find(t.education_levels.begin(), t.education_levels.end(), row[edu.column("level")]);
    t.education[sex == "M" ? 1 : 0][static_cast<std::size_t>(band - bands.begin())]
               [static_cast<std::size_t>(level - t.education_levels.begin())] =
        number(row[edu.column("probability")], "education");
  }

  auto inc = read_csv(dir / "income.csv");
  t.median_income.assign(L, std::vector<double>(2, -1.0));
  for (const auto& row : inc.rows) {
    auto level = std::find(t.education_levels.begin(), t.education_levels.end(), row[inc.column("education")]);
    if (level == t.education_levels.end()) throw StructuralError("income table: unknown education level");
    const auto& sex = row[inc.column("sex")];
    t.median_income[static_cast<std::size_t>(level - t.education_levels.begin())][sex == "M" ? 1 : 0] =
        number(row[inc.column("median")], "income");
  }
  for (const auto& per_sex : t.median_income)
    for (double m : per_sex)
      if (m < 0) throw StructuralError("income table: missing education x sex median");

  if (t.first_names.empty() || t.last_names.empty() || L == 0)
    throw StructuralError("frequency tables in " + dir.string() + " are empty");
  t.misspellings = load_misspellings(dir / "misspellings.csv");
  return t;
}

void GenConfig::validate() const {
  if (n_records < 1) throw ConfigError("n_records must be >= 1");
  if (!(duplication_rate >= 0 && duplication_rate < 1)) throw ConfigError("duplication_rate must be in [0, 1)");
  if (max_duplicates < 1) throw ConfigError("max_duplicates must be >= 1");
  if (!(noise_sigma > 0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be finite and > 0");
  if (n_distorted_fields < 0 || n_distorted_fields > 5) throw ConfigError("n_distorted_fields must be in 0..5");
}

Schema person_schema(const std::vector<std::string>& education_levels) {
  Schema s;
  s.fields = {
      {"first_name", FieldKind::String, FieldRole::Linkage, {}, {}, false},
      {"last_name", FieldKind::String, FieldRole::Linkage, {}, {}, false},
      {"birthdate", FieldKind::Numeric, FieldRole::Linkage, {}, {}, true},
      {"sex", FieldKind::Categorical, FieldRole::Downstream, {}, {"F", "M"}, false},
      {"education", FieldKind::Ordinal, FieldRole::Downstream, education_levels, {}, false},
      {"income", FieldKind::Numeric, FieldRole::Downstream, {}, {}, false},
      {"bp", FieldKind::Numeric, FieldRole::Downstream, {}, {}, false},
      {"high_bp", FieldKind::Categorical, FieldRole::Downstream, {}, {"0", "1"}, false},
  };
  return s;
}

namespace {

enum Col : std::size_t { kFirst, kLast, kBirth, kSex, kEdu, kIncome, kBp, kHighBp };

Dataset generate_people(const GenConfig& config, const FrequencyTables& tables, std::uint64_t stream) {
  config.validate();
  Dataset ds;
  ds.schema = person_schema(tables.education_levels);

  std::vector<double> first_w;
  for (const auto& f : tables.first_names) first_w.push_back(f.frequency);
  std::vector<double> last_w;
  for (const auto& l : tables.last_names) last_w.push_back(l.second);
  std::discrete_distribution<std::size_t> first_dist(first_w.begin(), first_w.end());
  std::discrete_distribution<std::size_t> last_dist(last_w.begin(), last_w.end());

  ds.records.resize(static_cast<std::size_t>(config.n_records));
  // Each entity draws from its own stream so output does not depend on the
  // order (or thread) in which entities are produced.
#pragma omp parallel for schedule(static)
  for (int k = 0; k < config.n_records; ++k) {
    Rng rng = make_rng(config.seed, stream, static_cast<std::uint64_t>(k));
    auto fd = first_dist;
    auto ld = last_dist;
    const auto& first = tables.first_names[fd(rng)];
    const auto& last = tables.last_names[ld(rng)].first;
    const int birthdate = std::uniform_int_distribution<int>(kFirstBirthday, kLastBirthday)(rng);
    const double coin = uniform01(rng);
    Sex sex = first.male_fraction > 0.5 ? Sex::M : first.male_fraction < 0.5 ? Sex::F : (coin < 0.5 ? Sex::M : Sex::F);
    const auto& edu_p = tables.education[sex == Sex::M ? 1 : 0][static_cast<std::size_t>(age_band(birthdate))];
    const std::size_t level = categorical(rng, edu_p);
    const double median = tables.median_income[level][sex == Sex::M ? 1 : 0];
    const double income = std::round((median + 5.0 * standard_normal(rng)) * 100.0) / 100.0;
    const double eps_bp = config.noise_sigma * standard_normal(rng);
    const double eps_high = config.noise_sigma * standard_normal(rng);
    const double bp = simulate_bp(income, sex, eps_bp);
    const int high = simulate_high_bp(income, sex, eps_high, rng);

    Record& r = ds.records[static_cast<std::size_t>(k)];
    r.id = {1, k + 1};
    r.values = {first.name,
                last,
                static_cast<double>(birthdate),
                std::string(sex_label(sex)),
                tables.education_levels[level],
                income,
                bp,
                std::to_string(high)};
    r.truth_entity = k + 1;
    r.is_duplicate = false;
  }
  ds.provenance = "seed=" + std::to_string(config.seed) + ";stream=" + std::to_string(stream) +
                  ";n=" + std::to_string(config.n_records) + ";sigma=" + format_number(config.noise_sigma);
  return ds;
}

}  // namespace

Dataset generate_truth(const GenConfig& config, const FrequencyTables& tables) {
  return generate_people(config, tables, kTruthStream);
}

Dataset generate_truth(const GenConfig& config) { return generate_truth(config, FrequencyTables::load(config.data_dir)); }

Dataset generate_test_set(const GenConfig& config, const FrequencyTables& tables) {
  return generate_people(config, tables, kTestStream);
}

Dataset generate_test_set(const GenConfig& config) {
  return generate_test_set(config, FrequencyTables::load(config.data_dir));
}

Dataset inject_duplicates(const Dataset& truth, const GenConfig& config, const FrequencyTables& tables, Rng& rng) {
  config.validate();
  const auto& schema = truth.schema;
  const std::size_t n = truth.size();
  const auto n_dup = static_cast<std::size_t>(std::floor(config.duplication_rate * static_cast<double>(n)));
  const std::uint64_t dup_seed = rng();

  Dataset out = truth;
  if (n_dup == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng pick = make_rng(dup_seed, 0);
  for (std::size_t k = 0; k < n_dup; ++k) std::swap(order[k], order[k + uniform_index(pick, n - k)]);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_dup));
  std::sort(chosen.begin(), chosen.end());

  const std::size_t edu = schema.index_of("education");
  const std::size_t income = schema.index_of("income");
  const std::size_t bp = schema.index_of("bp");
  std::vector<double> incomes;
  std::vector<double> bps;
  std::set<int> level_set;
  for (const auto& r : truth.records) {
    incomes.push_back(r.number(income));
    bps.push_back(r.number(bp));
    level_set.insert(schema.fields[edu].ordinal_rank(r.text(edu)));
  }
  std::vector<int> levels(level_set.begin(), level_set.end());

  std::vector<std::vector<Record>> copies(n_dup);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < n_dup; ++c) {
    Rng erng = make_rng(dup_seed, 1, chosen[c]);
    const Record& original = truth.records[chosen[c]];
    const int k_copies = std::uniform_int_distribution<int>(1, config.max_duplicates)(erng);
    for (int copy = 0; copy < k_copies; ++copy) {
      Record r = original;
      r.is_duplicate = true;

      // (first, last) corruption counts uniform over {0,1,2}^2 minus (0,0).
      const std::size_t pair = 1 + uniform_index(erng, 8);
      const int n_first = static_cast<int>(pair / 3);
      const int n_last = static_cast<int>(pair % 3);
      r.values[kFirst] = corrupt_name(r.text(kFirst), n_first, erng, tables.misspellings);
      r.values[kLast] = corrupt_name(r.text(kLast), n_last, erng, tables.misspellings);

      std::array<int, 5> fields{kBirth, kSex, kEdu, kIncome, kBp};
      for (int f = 0; f < config.n_distorted_fields; ++f)
        std::swap(fields[static_cast<std::size_t>(f)], fields[static_cast<std::size_t>(f) + uniform_index(erng, 5 - static_cast<std::size_t>(f))]);
      std::sort(fields.begin(), fields.begin() + config.n_distorted_fields);
      for (int f = 0; f < config.n_distorted_fields; ++f) {
        switch (fields[static_cast<std::size_t>(f)]) {
          case kBirth:
            r.values[kBirth] = r.number(kBirth) + std::round(kBirthdateNoiseSd * standard_normal(erng));
            break;
          case kSex: r.values[kSex] = std::string(uniform01(erng) < 0.5 ? "M" : "F"); break;
          case kEdu:
            r.values[kEdu] = schema.fields[edu].ordinal_levels[static_cast<std::size_t>(levels[uniform_index(erng, levels.size())])];
            break;
          case kIncome: r.values[kIncome] = incomes[uniform_index(erng, incomes.size())]; break;
          case kBp: r.values[kBp] = bps[uniform_index(erng, bps.size())]; break;
          default: break;
        }
      }
      copies[c].push_back(std::move(r));
    }
  }
  for (auto& group : copies)
    for (auto& r : group) out.records.push_back(std::move(r));
  renumber_rows(out);
  out.provenance = truth.provenance + ";dup_rate=" + format_number(config.duplication_rate) +
                   ";max_dup=" + std::to_string(config.max_duplicates);
  return out;
}

Dataset shuffle_into_databases(const Dataset& observed, int k, Rng& rng) {
  if (k < 1) throw ConfigError("database split must be >= 1");
  Dataset out = observed;
  for (std::size_t i = out.records.size(); i > 1; --i) std::swap(out.records[i - 1], out.records[uniform_index(rng, i)]);
  for (auto& r : out.records) r.id.database = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(k)));
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const Record& a, const Record& b) { return a.id.database < b.id.database; });
  renumber_rows(out);
  return out;
}

double bp_formula_mean(const Dataset& ds, const Record& r) {
  const Sex sex = r.text(ds.schema.index_of("sex")) == "M" ? Sex::M : Sex::F;
  return simulate_bp(r.number(ds.schema.index_of("income")), sex, 0.0);
}

}  // namespace protolink
