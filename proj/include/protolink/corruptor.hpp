#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "protolink/random.hpp"

namespace protolink {

enum class CorruptionMode { Ocr, Keyboard, Phonetic, Misspelling };

/// Name -> known misspellings.
using MisspellingTable = std::map<std::string, std::vector<std::string>>;

MisspellingTable load_misspellings(const std::filesystem::path& csv);

/// Applies one corruption in `mode` costing at most `budget` edits (budget
/// >= 1). Modes that cannot apply to `name` fall back to a keyboard edit.
/// Returns the corrupted string and writes the edit cost to `cost`.
std::string corrupt_once(const std::string& name, CorruptionMode mode, int budget, Rng& rng,
                         const MisspellingTable& misspellings, int& cost);

/// Applies up to `n_corruptions` corruptions, each in a uniformly chosen
/// mode. The result is within `n_corruptions` Levenshtein edits of `name`.
std::string corrupt_name(const std::string& name, int n_corruptions, Rng& rng, const MisspellingTable& misspellings);

}  // namespace protolink
