#include "kiosk/catalog_match.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "kiosk/error.hpp"
#include "kiosk/text.hpp"

namespace kiosk::match {

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 0; i < a.size(); ++i) {
    cur[0] = i + 1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      cur[j + 1] = std::min({prev[j + 1] + 1, cur[j] + 1, prev[j] + (a[i] == b[j] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(text::decode_utf8(a), text::decode_utf8(b));
}

namespace {

double normalized(const std::u32string& a, const std::u32string& b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) throw BothEmpty();
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

}  // namespace

double normalized_levenshtein(std::string_view a, std::string_view b) {
  return normalized(text::decode_utf8(a), text::decode_utf8(b));
}

MatchResult nearest_dish(std::string_view name, const Catalog& catalog) {
  if (catalog.empty()) throw EmptyCatalog();
  const auto query = text::decode_utf8(text::normalized_name(name));
  if (query.empty()) throw InvalidArgument("query name is empty after normalization");
  const Dish* best = nullptr;
  double best_distance = 2.0;
  for (const auto& dish : catalog.dishes()) {
    const double d = normalized(query, text::decode_utf8(text::normalized_name(dish.name)));
    if (d < best_distance || (d == best_distance && dish.id < best->id)) {
      best = &dish;
      best_distance = d;
    }
  }
  return {best->id, best_distance};
}

}  // namespace kiosk::match
