#include "kiosk/corpus.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kiosk/error.hpp"
#include "kiosk/rng.hpp"

namespace kiosk::corpus {

namespace {

bool is_gzip_path(const std::filesystem::path& path) { return path.extension() == ".gz"; }

std::string read_all(const std::filesystem::path& path) {
  if (is_gzip_path(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw Error("cannot open order log " + path.string());
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw Error("corrupt gzip stream in " + path.string());
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open order log " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\r';
  });
}

Order parse_line(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, e.what());
  }
  Order order;
  try {
    order = order_from_json(j);
  } catch (const FormatError& e) {
    throw ParseError(line_no, e.what());
  }
  auto validated = validate_order(order);
  if (!validated.ok()) throw ParseError(line_no, describe(validated.violations.front()));
  return std::move(*validated.order);
}

OrderLog load_impl(const std::filesystem::path& path, std::optional<Window> window) {
  if (window && !(window->from < window->to)) {
    throw InvalidArgument("load window must satisfy from < to");
  }
  const std::string data = read_all(path);
  OrderLog log;
  log.source = path.string();
  log.window = window;

  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    ++line_no;
    const auto nl = data.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string_view line(data.data() + pos, (terminated ? nl : data.size()) - pos);
    pos = terminated ? nl + 1 : data.size();
    if (blank(line)) continue;
    try {
      Order order = parse_line(line, line_no);
      if (!window || window->contains(order.ts)) log.orders.push_back(std::move(order));
    } catch (const ParseError& e) {
      if (terminated) throw;
      spdlog::warn("{}: skipping torn final line {} ({})", path.string(), line_no, e.what());
    }
  }
  std::stable_sort(log.orders.begin(), log.orders.end(),
                   [](const Order& a, const Order& b) { return a.ts < b.ts; });
  return log;
}

}  // namespace

Window OrderLog::span() const {
  if (window) return *window;
  if (orders.empty()) return {};
  return {orders.front().ts, {orders.back().ts.seconds + 1}};
}

OrderLog load_orders(const std::filesystem::path& path, Window window) {
  return load_impl(path, window);
}

OrderLog load_orders(const std::filesystem::path& path) { return load_impl(path, std::nullopt); }

std::string serialize_order(const Order& order) { return order_to_json(order).dump(); }

void save_orders(const OrderLog& log, const std::filesystem::path& path) {
  std::string data;
  for (const auto& o : log.orders) {
    data += serialize_order(o);
    data += '\n';
  }
  if (is_gzip_path(path)) {
    // mtime is not stored by gzwrite, so output is stable across runs.
    gzFile f = gzopen(path.c_str(), "wb9");
    if (!f) throw Error("cannot write " + path.string());
    const int written = gzwrite(f, data.data(), static_cast<unsigned>(data.size()));
    gzclose(f);
    if (written != static_cast<int>(data.size())) throw Error("short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << data;
  if (!out) throw Error("short write to " + path.string());
}

OrderLog slice(const OrderLog& log, Window window) {
  OrderLog out;
  out.source = log.source;
  out.window = window;
  for (const auto& o : log.orders) {
    if (window.contains(o.ts)) out.orders.push_back(o);
  }
  return out;
}

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
  return w;
}

namespace {

void check_spec(const GeneratorSpec& spec) {
  if (spec.menu.empty()) throw InvalidSpec("menu is empty");
  if (spec.n_orders == 0) throw InvalidSpec("n_orders must be positive");
  if (spec.popularity.size() != spec.menu.size()) {
    throw InvalidSpec("popularity needs one weight per menu dish");
  }
  bool any_positive = false;
  for (double w : spec.popularity) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidSpec("popularity weights must be >= 0");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) throw InvalidSpec("at least one popularity weight must be positive");
  auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!probability(spec.rec_flag_rate)) throw InvalidSpec("rec_flag_rate must be in [0,1]");
  for (const auto& r : spec.rules) {
    if (!probability(r.probability)) throw InvalidSpec("rule probability must be in [0,1]");
    if (!spec.menu.contains(r.consequent)) {
      throw InvalidSpec("rule consequent not on the menu: " + r.consequent);
    }
    for (const auto& t : r.trigger) {
      if (!spec.menu.contains(t)) throw InvalidSpec("rule trigger not on the menu: " + t);
    }
  }
  if (!(spec.date_range.from < spec.date_range.to)) {
    throw InvalidSpec("date_range must satisfy start < end");
  }
  if (spec.max_cart_size < 1) throw InvalidSpec("max_cart_size must be >= 1");
  if (spec.restaurants < 1) throw InvalidSpec("restaurants must be >= 1");
}

OrderLine line_for(const Dish& d, bool flagged) {
  return {d.id, d.name, 1, d.unit_price, d.unit_cost, d.unit_tax, flagged};
}

std::string padded(const char* prefix, std::uint64_t n, int width) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%0*llu", prefix, width, static_cast<unsigned long long>(n));
  return buf;
}

}  // namespace

OrderLog generate_orders(const GeneratorSpec& spec) {
  check_spec(spec);
  Rng rng(spec.seed);

  std::vector<double> cumulative(spec.popularity.size());
  double total = 0.0;
  for (std::size_t i = 0; i < spec.popularity.size(); ++i) {
    total += spec.popularity[i];
    cumulative[i] = total;
  }
  auto draw_dish = [&]() -> const Dish& {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    auto idx = static_cast<std::size_t>(it - cumulative.begin());
    if (idx >= cumulative.size()) idx = cumulative.size() - 1;
    while (spec.popularity[idx] <= 0.0) --idx;  // u landed on a zero-width slot
    return spec.menu.dishes()[idx];
  };

  const std::int64_t span = spec.date_range.to.seconds - spec.date_range.from.seconds;
  std::vector<Order> orders;
  orders.reserve(spec.n_orders);
  for (std::size_t n = 0; n < spec.n_orders; ++n) {
    Order o;
    o.ts = {spec.date_range.from.seconds + static_cast<std::int64_t>(rng.below(span))};
    o.session_id = padded("s", rng.next() & 0xFFFFFFFFFFull, 13);
    o.restaurant_id = padded("r", rng.below(spec.restaurants) + 1, 3);

    const int size = 1 + static_cast<int>(rng.below(spec.max_cart_size));
    std::map<std::string, std::size_t> position;
    for (int i = 0; i < size; ++i) {
      const Dish& d = draw_dish();
      auto [it, inserted] = position.emplace(d.id, o.lines.size());
      if (inserted) {
        o.lines.push_back(line_for(d, false));
      } else {
        ++o.lines[it->second].qty;
      }
    }
    for (const auto& rule : spec.rules) {
      const bool triggered = std::all_of(rule.trigger.begin(), rule.trigger.end(),
                                         [&](const std::string& id) { return position.contains(id); });
      if (!triggered || position.contains(rule.consequent)) continue;
      if (!rng.bernoulli(rule.probability)) continue;
      const bool flagged = rng.bernoulli(spec.rec_flag_rate);
      position.emplace(rule.consequent, o.lines.size());
      o.lines.push_back(line_for(spec.menu.at(rule.consequent), flagged));
    }
    orders.push_back(std::move(o));
  }
  std::stable_sort(orders.begin(), orders.end(),
                   [](const Order& a, const Order& b) { return a.ts < b.ts; });
  for (std::size_t i = 0; i < orders.size(); ++i) orders[i].order_id = padded("o", i + 1, 8);

  OrderLog log;
  log.orders = std::move(orders);
  log.source = "generator(seed=" + std::to_string(spec.seed) + ")";
  log.window = spec.date_range;
  return log;
}

std::vector<PlantedRule> planted_rules_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rules") || !j["rules"].is_array()) {
    throw FormatError("planted rules file needs a \"rules\" array");
  }
  std::vector<PlantedRule> rules;
  for (const auto& r : j["rules"]) {
    try {
      PlantedRule rule;
      rule.trigger = r.at("if").get<std::vector<std::string>>();
      rule.consequent = r.at("then").get<std::string>();
      rule.probability = r.at("p").get<double>();
      rules.push_back(std::move(rule));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad planted rule: ") + e.what());
    }
  }
  return rules;
}

std::vector<PlantedRule> load_planted_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open rules file " + path.string());
  try {
    return planted_rules_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("rules file " + path.string() + ": " + e.what());
  }
}

std::vector<std::string> top_k_dishes(const OrderLog& log, std::size_t k) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& o : log.orders) {
    for (const auto& l : o.lines) counts[l.dish_id] += l.qty;
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already id-ordered, so stable_sort keeps the tie rule.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
  return out;
}

}  // namespace kiosk::corpus
