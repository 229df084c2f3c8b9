#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "kiosk/domain.hpp"

namespace kiosk::match {

struct MatchResult {
  std::string dish_id;
  double distance = 0.0;  // in [0, 1]
};

/// Edit distance over Unicode scalar values.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

/// levenshtein / max length. Throws BothEmpty.
double normalized_levenshtein(std::string_view a, std::string_view b);

/// Catalog dish whose normalized name is closest to the normalized query;
/// ties go to the smaller dish id. Throws EmptyCatalog, InvalidArgument for
/// a query with no tokens.
MatchResult nearest_dish(std::string_view name, const Catalog& catalog);

}  // namespace kiosk::match
