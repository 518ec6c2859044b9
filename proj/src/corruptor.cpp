#include "protolink/corruptor.hpp"

#include <array>
#include <cctype>
#include <string_view>
#include <utility>

#include "protolink/io.hpp"
#include "protolink/string_distance.hpp"

namespace protolink {

namespace {

// Visually confusable lowercase letters.
constexpr std::array<std::pair<char, std::string_view>, 20> kOcr{{
    {'a', "o"},  {'b', "h"},  {'c', "eo"}, {'d', "a"},  {'e', "co"}, {'f', "t"},  {'g', "q"},
    {'h', "bn"}, {'i', "lj"}, {'j', "i"},  {'l', "it"}, {'m', "n"},  {'n', "hr"}, {'o', "ca"},
    {'q', "g"},  {'r', "n"},  {'t', "f"},  {'u', "vn"}, {'v', "u"},  {'y', "v"},
}};

constexpr std::array<std::string_view, 3> kKeyboardRows{"qwertyuiop", "asdfghjkl", "zxcvbnm"};

// Single-edit sound-alike rewrites.
constexpr std::array<std::pair<std::string_view, std::string_view>, 19> kPhonetic{{
    {"c", "k"},   {"k", "c"},   {"s", "z"},   {"z", "s"},  {"i", "y"},  {"y", "i"},   {"ck", "k"},
    {"gh", "g"},  {"th", "t"},  {"ll", "l"},  {"nn", "n"}, {"tt", "t"}, {"ss", "s"},  {"rr", "r"},
    {"ee", "ea"}, {"ou", "ow"}, {"au", "aw"}, {"ph", "f"}, {"mm", "m"},
}};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Restores the capitalization pattern of `original` on `edited` (first
// letter capitalized when the original's was).
std::string recase(const std::string& original, std::string edited) {
  if (!original.empty() && !edited.empty() && std::isupper(static_cast<unsigned char>(original[0])))
    edited[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(edited[0])));
  return edited;
}

std::string keyboard_neighbors(char c) {
  std::string out;
  for (std::size_t r = 0; r < kKeyboardRows.size(); ++r) {
    auto pos = kKeyboardRows[r].find(c);
    if (pos == std::string_view::npos) continue;
    if (pos > 0) out += kKeyboardRows[r][pos - 1];
    if (pos + 1 < kKeyboardRows[r].size()) out += kKeyboardRows[r][pos + 1];
    for (int dr : {-1, 1}) {
      int rr = static_cast<int>(r) + dr;
      if (rr < 0 || rr >= static_cast<int>(kKeyboardRows.size())) continue;
      const auto& row = kKeyboardRows[static_cast<std::size_t>(rr)];
      if (pos < row.size()) out += row[pos];
    }
  }
  return out;
}

std::string keyboard_edit(const std::string& s, Rng& rng) {
  std::string low = lower(s);
  std::vector<std::size_t> letters;
  for (std::size_t k = 0; k < low.size(); ++k)
    if (!keyboard_neighbors(low[k]).empty()) letters.push_back(k);
  if (letters.empty()) return s + "e";
  std::size_t pos = letters[uniform_index(rng, letters.size())];
  std::string nb = keyboard_neighbors(low[pos]);
  low[pos] = nb[uniform_index(rng, nb.size())];
  return recase(s, low);
}

bool ocr_edit(const std::string& s, Rng& rng, std::string& out) {
  std::string low = lower(s);
  std::vector<std::pair<std::size_t, std::string_view>> options;
  for (std::size_t k = 0; k < low.size(); ++k)
    for (const auto& [c, subs] : kOcr)
      if (low[k] == c) options.emplace_back(k, subs);
  if (options.empty()) return false;
  auto [pos, subs] = options[uniform_index(rng, options.size())];
  low[pos] = subs[uniform_index(rng, subs.size())];
  out = recase(s, low);
  return true;
}

bool phonetic_edit(const std::string& s, int budget, Rng& rng, std::string& out) {
  std::string low = lower(s);
  std::vector<std::pair<std::size_t, std::size_t>> options;  // (position, rule)
  for (std::size_t rule = 0; rule < kPhonetic.size(); ++rule) {
    const auto& pat = kPhonetic[rule].first;
    if (levenshtein(pat, kPhonetic[rule].second) > budget) continue;
    for (std::size_t pos = low.find(pat); pos != std::string::npos; pos = low.find(pat, pos + 1))
      options.emplace_back(pos, rule);
  }
  if (options.empty()) return false;
  auto [pos, rule] = options[uniform_index(rng, options.size())];
  low.replace(pos, kPhonetic[rule].first.size(), kPhonetic[rule].second);
  out = recase(s, low);
  return true;
}

}  // namespace

MisspellingTable load_misspellings(const std::filesystem::path& csv) {
  auto table = read_csv(csv);
  auto name_col = table.column("name");
  auto miss_col = table.column("misspelling");
  MisspellingTable out;
  for (const auto& row : table.rows) out[row[name_col]].push_back(row[miss_col]);
  return out;
}

std::string corrupt_once(const std::string& name, CorruptionMode mode, int budget, Rng& rng,
                         const MisspellingTable& misspellings, int& cost) {
  std::string out;
  switch (mode) {
    case CorruptionMode::Ocr:
      if (ocr_edit(name, rng, out)) break;
      out = keyboard_edit(name, rng);
      break;
    case CorruptionMode::Phonetic:
      if (phonetic_edit(name, budget, rng, out)) break;
      out = keyboard_edit(name, rng);
      break;
    case CorruptionMode::Misspelling: {
      std::vector<const std::string*> fits;
      if (auto it = misspellings.find(name); it != misspellings.end())
        for (const auto& m : it->second)
          if (levenshtein(name, m) <= budget) fits.push_back(&m);
      out = fits.empty() ? keyboard_edit(name, rng) : *fits[uniform_index(rng, fits.size())];
      break;
    }
    case CorruptionMode::Keyboard: out = keyboard_edit(name, rng); break;
  }
  cost = levenshtein(name, out);
  return out;
}

std::string corrupt_name(const std::string& name, int n_corruptions, Rng& rng, const MisspellingTable& misspellings) {
  std::string current = name;
  int budget = n_corruptions;
  while (budget > 0) {
    auto mode = static_cast<CorruptionMode>(uniform_index(rng, 4));
    int cost = 0;
    current = corrupt_once(current, mode, budget, rng, misspellings, cost);
    budget -= std::max(cost, 1);
  }
  return current;
}

}  // namespace protolink
