#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace kiosk {

/// Exact amount in minor currency units (cents). Catalog prices are never
/// negative; margins computed from them may be.
struct Money {
  std::int64_t amount = 0;

  friend constexpr Money operator+(Money a, Money b) { return {a.amount + b.amount}; }
  friend constexpr Money operator-(Money a, Money b) { return {a.amount - b.amount}; }
  friend constexpr Money operator*(Money a, std::int64_t n) { return {a.amount * n}; }
  Money& operator+=(Money o) {
    amount += o.amount;
    return *this;
  }
  friend constexpr auto operator<=>(Money, Money) = default;
};

/// Parses "3", "3.5" or "3.00" into minor units. At most two fractional
/// digits; a leading '-' is rejected.
Money parse_money(std::string_view text);
/// Always two fractional digits ("3.00", "-1.05").
std::string format_money(Money m);

/// UTC instant with second precision.
struct Timestamp {
  std::int64_t seconds = 0;  // since 1970-01-01T00:00:00Z
  friend constexpr auto operator<=>(Timestamp, Timestamp) = default;
};

inline constexpr std::int64_t kSecondsPerDay = 86400;

Timestamp parse_timestamp(std::string_view text);  // "YYYY-MM-DDThh:mm:ssZ"
std::string format_timestamp(Timestamp ts);
Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour = 0,
                         int minute = 0, int second = 0);
inline Timestamp add_days(Timestamp ts, std::int64_t days) {
  return {ts.seconds + days * kSecondsPerDay};
}

/// Half-open interval [from, to).
struct Window {
  Timestamp from;
  Timestamp to;
  bool contains(Timestamp ts) const { return from <= ts && ts < to; }
  friend constexpr bool operator==(const Window&, const Window&) = default;
};

struct Dish {
  std::string id;
  std::string name;
  std::array<std::string, 3> category;  // coarse to fine
  Money unit_price;
  Money unit_cost;
  Money unit_tax;
};

struct OrderLine {
  std::string dish_id;
  std::string name;  // as recorded at sale time
  int qty = 1;
  Money unit_price;
  Money unit_cost;
  Money unit_tax;
  bool from_recommendation = false;
};

struct Order {
  std::string order_id;
  std::string session_id;
  std::string restaurant_id;
  Timestamp ts;
  std::vector<OrderLine> lines;
};

bool operator==(const OrderLine& a, const OrderLine& b);
bool operator==(const Order& a, const Order& b);

class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<Dish> dishes);

  /// Throws InvalidArgument on a duplicate or empty id.
  void add(Dish dish);
  const Dish* find(std::string_view id) const;
  /// Throws UnknownDish.
  const Dish& at(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  /// Dishes in insertion order.
  const std::vector<Dish>& dishes() const { return dishes_; }
  std::size_t size() const { return dishes_.size(); }
  bool empty() const { return dishes_.empty(); }

 private:
  std::vector<Dish> dishes_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// G = R - C - T.
constexpr Money gross_margin(Money revenue, Money cost, Money tax) {
  return revenue - cost - tax;
}

/// Sum over lines of qty * margin, with unit money taken from the catalog.
Money order_gross_margin(const Order& order, const Catalog& catalog);

struct Violation {
  enum class Kind { EmptyOrder, NonPositiveQty, EmptyName, EmptyDishId };
  Kind kind;
  std::size_t line_index = 0;  // unused for EmptyOrder
  friend bool operator==(const Violation&, const Violation&) = default;
};

std::string describe(const Violation& v);

struct ValidationResult {
  std::optional<Order> order;
  std::vector<Violation> violations;
  bool ok() const { return order.has_value(); }
};

/// Merges lines per dish_id (qty summed, from_recommendation OR-ed, first
/// line's name and prices kept) or reports every violation found.
ValidationResult validate_order(const Order& order);

// JSON mapping shared by the catalog file, the order log and the service.
nlohmann::ordered_json dish_to_json(const Dish& d);
Dish dish_from_json(const nlohmann::json& j);
nlohmann::ordered_json catalog_to_json(const Catalog& c);
Catalog catalog_from_json(const nlohmann::json& j);
Catalog load_catalog(const std::filesystem::path& path);

nlohmann::ordered_json order_to_json(const Order& o);
/// Throws FormatError when fields are missing or mistyped.
Order order_from_json(const nlohmann::json& j);

}  // namespace kiosk
