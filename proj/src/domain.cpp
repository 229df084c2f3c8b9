#include "kiosk/domain.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kiosk/error.hpp"
#include "kiosk/text.hpp"

namespace kiosk {

Money parse_money(std::string_view text) {
  auto fail = [&] { return FormatError("invalid money amount: \"" + std::string(text) + "\""); };
  if (text.empty() || text.front() == '-' || text.front() == '+') throw fail();
  const auto dot = text.find('.');
  const auto whole = text.substr(0, dot);
  if (whole.empty()) throw fail();
  std::int64_t units = 0;
  for (char c : whole) {
    if (c < '0' || c > '9') throw fail();
    units = units * 10 + (c - '0');
    if (units > 1'000'000'000'000LL) throw fail();
  }
  std::int64_t cents = 0;
  if (dot != std::string_view::npos) {
    const auto frac = text.substr(dot + 1);
    if (frac.empty() || frac.size() > 2) throw fail();
    for (char c : frac) {
      if (c < '0' || c > '9') throw fail();
    }
    cents = (frac[0] - '0') * 10 + (frac.size() == 2 ? frac[1] - '0' : 0);
  }
  return {units * 100 + cents};
}

std::string format_money(Money m) {
  const bool negative = m.amount < 0;
  const std::int64_t abs = negative ? -m.amount : m.amount;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%lld.%02lld", negative ? "-" : "",
                static_cast<long long>(abs / 100), static_cast<long long>(abs % 100));
  return buf;
}

namespace {

// Howard Hinnant's days_from_civil / civil_from_days.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return (m == 2 && is_leap(y)) ? 29 : kDays[m - 1];
}

}  // namespace

Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour, int minute,
                         int second) {
  return {days_from_civil(year, month, day) * kSecondsPerDay + hour * 3600 + minute * 60 +
          second};
}

Timestamp parse_timestamp(std::string_view t) {
  auto fail = [&] { return FormatError("invalid timestamp: \"" + std::string(t) + "\""); };
  // YYYY-MM-DDThh:mm:ssZ
  if (t.size() != 20 || t[4] != '-' || t[7] != '-' || t[10] != 'T' || t[13] != ':' ||
      t[16] != ':' || t[19] != 'Z') {
    throw fail();
  }
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    const auto* first = t.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc() || ptr != first + len) throw fail();
    return v;
  };
  const int y = num(0, 4);
  const int mo = num(5, 2);
  const int d = num(8, 2);
  const int h = num(11, 2);
  const int mi = num(14, 2);
  const int s = num(17, 2);
  if (mo < 1 || mo > 12 || d < 1 || static_cast<unsigned>(d) > days_in_month(y, mo) ||
      h > 23 || mi > 59 || s > 59) {
    throw fail();
  }
  return make_timestamp(y, mo, d, h, mi, s);
}

std::string format_timestamp(Timestamp ts) {
  std::int64_t days = ts.seconds / kSecondsPerDay;
  std::int64_t rem = ts.seconds % kSecondsPerDay;
  if (rem < 0) {
    rem += kSecondsPerDay;
    --days;
  }
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                static_cast<long long>(rem / 60 % 60), static_cast<long long>(rem % 60));
  return buf;
}

bool operator==(const OrderLine& a, const OrderLine& b) {
  return a.dish_id == b.dish_id && a.name == b.name && a.qty == b.qty &&
         a.unit_price == b.unit_price && a.unit_cost == b.unit_cost &&
         a.unit_tax == b.unit_tax && a.from_recommendation == b.from_recommendation;
}

bool operator==(const Order& a, const Order& b) {
  return a.order_id == b.order_id && a.session_id == b.session_id &&
         a.restaurant_id == b.restaurant_id && a.ts == b.ts && a.lines == b.lines;
}

Catalog::Catalog(std::vector<Dish> dishes) {
  for (auto& d : dishes) add(std::move(d));
}

void Catalog::add(Dish dish) {
  if (dish.id.empty()) throw InvalidArgument("dish id must be non-empty");
  if (text::normalize(dish.name).empty()) {
    throw InvalidArgument("dish " + dish.id + " has an empty name");
  }
  if (dish.unit_price.amount < 0 || dish.unit_cost.amount < 0 || dish.unit_tax.amount < 0) {
    throw InvalidArgument("dish " + dish.id + " has a negative money field");
  }
  if (index_.contains(dish.id)) throw InvalidArgument("duplicate dish id: " + dish.id);
  index_.emplace(dish.id, dishes_.size());
  dishes_.push_back(std::move(dish));
}

const Dish* Catalog::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &dishes_[it->second];
}

const Dish& Catalog::at(std::string_view id) const {
  if (const Dish* d = find(id)) return *d;
  throw UnknownDish(std::string(id));
}

Money order_gross_margin(const Order& order, const Catalog& catalog) {
  Money total;
  for (const auto& line : order.lines) {
    const Dish& d = catalog.at(line.dish_id);
    total += gross_margin(d.unit_price, d.unit_cost, d.unit_tax) * line.qty;
  }
  return total;
}

std::string describe(const Violation& v) {
  switch (v.kind) {
    case Violation::Kind::EmptyOrder:
      return "order has no lines";
    case Violation::Kind::NonPositiveQty:
      return "line " + std::to_string(v.line_index) + ": qty must be positive";
    case Violation::Kind::EmptyName:
      return "line " + std::to_string(v.line_index) + ": name is empty";
    case Violation::Kind::EmptyDishId:
      return "line " + std::to_string(v.line_index) + ": dish_id is empty";
  }
  return "unknown violation";
}

ValidationResult validate_order(const Order& order) {
  ValidationResult result;
  if (order.lines.empty()) {
    result.violations.push_back({Violation::Kind::EmptyOrder, 0});
    return result;
  }
  for (std::size_t i = 0; i < order.lines.size(); ++i) {
    const auto& line = order.lines[i];
    if (line.dish_id.empty()) result.violations.push_back({Violation::Kind::EmptyDishId, i});
    if (line.qty < 1) result.violations.push_back({Violation::Kind::NonPositiveQty, i});
    if (text::normalize(line.name).empty()) {
      result.violations.push_back({Violation::Kind::EmptyName, i});
    }
  }
  if (!result.violations.empty()) return result;

  Order merged = order;
  merged.lines.clear();
  std::map<std::string, std::size_t, std::less<>> seen;
  for (const auto& line : order.lines) {
    auto [it, inserted] = seen.emplace(line.dish_id, merged.lines.size());
    if (inserted) {
      merged.lines.push_back(line);
    } else {
      auto& target = merged.lines[it->second];
      target.qty += line.qty;
      target.from_recommendation = target.from_recommendation || line.from_recommendation;
    }
  }
  result.order = std::move(merged);
  return result;
}

nlohmann::ordered_json dish_to_json(const Dish& d) {
  nlohmann::ordered_json j;
  j["id"] = d.id;
  j["name"] = d.name;
  j["category"] = {d.category[0], d.category[1], d.category[2]};
  j["unit_price"] = format_money(d.unit_price);
  j["unit_cost"] = format_money(d.unit_cost);
  j["unit_tax"] = format_money(d.unit_tax);
  return j;
}

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object()) throw FormatError("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field \"") + key + "\"");
  return *it;
}

std::string string_field(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) throw FormatError(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

Money money_field(const nlohmann::json& j, const char* key) {
  return parse_money(string_field(j, key));
}

}  // namespace

Dish dish_from_json(const nlohmann::json& j) {
  Dish d;
  d.id = string_field(j, "id");
  d.name = string_field(j, "name");
  const auto& cat = field(j, "category");
  if (!cat.is_array() || cat.size() != 3) {
    throw FormatError("dish " + d.id + ": category must have exactly 3 levels");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (!cat[i].is_string()) throw FormatError("dish " + d.id + ": category levels are strings");
    d.category[i] = cat[i].get<std::string>();
  }
  d.unit_price = money_field(j, "unit_price");
  d.unit_cost = money_field(j, "unit_cost");
  d.unit_tax = money_field(j, "unit_tax");
  return d;
}

nlohmann::ordered_json catalog_to_json(const Catalog& c) {
  nlohmann::ordered_json j;
  j["dishes"] = nlohmann::ordered_json::array();
  for (const auto& d : c.dishes()) j["dishes"].push_back(dish_to_json(d));
  return j;
}

Catalog catalog_from_json(const nlohmann::json& j) {
  const auto& dishes = field(j, "dishes");
  if (!dishes.is_array()) throw FormatError("\"dishes\" must be an array");
  Catalog c;
  for (const auto& d : dishes) {
    try {
      c.add(dish_from_json(d));
    } catch (const InvalidArgument& e) {
      throw FormatError(e.what());
    }
  }
  return c;
}

Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open catalog file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("catalog " + path.string() + ": " + e.what());
  }
  return catalog_from_json(j);
}

nlohmann::ordered_json order_to_json(const Order& o) {
  nlohmann::ordered_json j;
  j["order_id"] = o.order_id;
  j["session_id"] = o.session_id;
  j["restaurant_id"] = o.restaurant_id;
  j["ts"] = format_timestamp(o.ts);
  auto& lines = j["lines"] = nlohmann::ordered_json::array();
  for (const auto& l : o.lines) {
    nlohmann::ordered_json lj;
    lj["dish_id"] = l.dish_id;
    lj["name"] = l.name;
    lj["qty"] = l.qty;
    lj["unit_price"] = format_money(l.unit_price);
    lj["unit_cost"] = format_money(l.unit_cost);
    lj["unit_tax"] = format_money(l.unit_tax);
    lj["from_recommendation"] = l.from_recommendation;
    lines.push_back(std::move(lj));
  }
  return j;
}

Order order_from_json(const nlohmann::json& j) {
  Order o;
  o.order_id = string_field(j, "order_id");
  o.session_id = string_field(j, "session_id");
  o.restaurant_id = string_field(j, "restaurant_id");
  o.ts = parse_timestamp(string_field(j, "ts"));
  const auto& lines = field(j, "lines");
  if (!lines.is_array()) throw FormatError("\"lines\" must be an array");
  for (const auto& lj : lines) {
    OrderLine l;
    l.dish_id = string_field(lj, "dish_id");
    l.name = string_field(lj, "name");
    const auto& qty = field(lj, "qty");
    if (!qty.is_number_integer()) throw FormatError("field \"qty\" must be an integer");
    const auto q = qty.get<std::int64_t>();
    if (q < INT32_MIN || q > INT32_MAX) throw FormatError("field \"qty\" out of range");
    l.qty = static_cast<int>(q);
    l.unit_price = money_field(lj, "unit_price");
    l.unit_cost = money_field(lj, "unit_cost");
    l.unit_tax = money_field(lj, "unit_tax");
    const auto& flag = field(lj, "from_recommendation");
    if (!flag.is_boolean()) throw FormatError("field \"from_recommendation\" must be a boolean");
    l.from_recommendation = flag.get<bool>();
    o.lines.push_back(std::move(l));
  }
  return o;
}

}  // namespace kiosk
