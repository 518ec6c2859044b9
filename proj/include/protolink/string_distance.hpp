#pragma once

#include <string_view>

namespace protolink {

/// Unit-cost edit distance (insert, delete, substitute).
int levenshtein(std::string_view a, std::string_view b);

/// levenshtein / max(|a|, |b|); 0 for two empty strings.
double normalized_levenshtein(std::string_view a, std::string_view b);

double jaro_similarity(std::string_view a, std::string_view b);

/// Jaro-Winkler similarity with prefix scale `p` over at most `max_prefix`
/// leading characters.
double jaro_winkler_similarity(std::string_view a, std::string_view b, double p = 0.1, int max_prefix = 4);

/// 1 - jaro_winkler_similarity, in [0, 1].
double jaro_winkler_distance(std::string_view a, std::string_view b);

enum class StringMetric { JaroWinkler, NormalizedLevenshtein };

double string_distance(StringMetric metric, std::string_view a, std::string_view b);

}  // namespace protolink
