#include "kiosk/corpus.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "kiosk/error.hpp"
#include "kiosk/rng.hpp"
#include "test_util.hpp"

namespace kiosk::corpus {
namespace {

using testing::dish;
using testing::line_of;
using testing::TempDir;

const Timestamp kStart = make_timestamp(2024, 1, 1, 0, 0, 0);

Catalog small_menu() {
  return Catalog({dish("burger", "Burger", "burgers", 300, 100, 30), dish("cola", "Cola", "drinks", 170, 30, 17),
                  dish("fries", "Fries", "sides", 200, 50, 20), dish("pie", "Cherry Pie", "desserts", 150, 40, 15)});
}

Order order_at(const std::string& id, Timestamp ts, const Catalog& menu, const std::string& dish_id) {
  return {id, "s-" + id, "r1", ts, {line_of(menu.at(dish_id))}};
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines, bool final_newline = true) {
  std::ofstream out(p, std::ios::binary);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out << lines[i];
    if (i + 1 < lines.size() || final_newline) out << '\n';
  }
}

TEST(LoadOrders, WindowFiltersAndSorts) {
  TempDir dir;
  const auto menu = small_menu();
  std::vector<std::string> lines;
  // Deliberately out of order; days 0..4.
  for (int d : {3, 0, 4, 1, 2}) {
    lines.push_back(serialize_order(order_at("o" + std::to_string(d), add_days(kStart, d), menu, "burger")));
  }
  write_lines(dir / "orders.jsonl", lines);

  const auto log = load_orders(dir / "orders.jsonl", {add_days(kStart, 1), add_days(kStart, 3)});
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log.orders[0].order_id, "o1");
  EXPECT_EQ(log.orders[1].order_id, "o2");
  EXPECT_EQ(load_orders(dir / "orders.jsonl").size(), 5u);
  EXPECT_TRUE(load_orders(dir / "orders.jsonl", {add_days(kStart, 10), add_days(kStart, 11)}).empty());
}

TEST(LoadOrders, MalformedLineReportsLineNumber) {
  TempDir dir;
  const auto menu = small_menu();
  std::vector<std::string> lines;
  for (int i = 0; i < 10; ++i) lines.push_back(serialize_order(order_at("o" + std::to_string(i), kStart, menu, "pie")));
  lines[6] = "{\"order_id\": \"broken\"";
  write_lines(dir / "orders.jsonl", lines);
  try {
    load_orders(dir / "orders.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
  }
}

TEST(LoadOrders, InvalidOrderIsParseError) {
  TempDir dir;
  const auto menu = small_menu();
  auto o = order_at("o1", kStart, menu, "pie");
  o.lines[0].qty = 0;
  write_lines(dir / "orders.jsonl", {serialize_order(order_at("o0", kStart, menu, "pie")), serialize_order(o)});
  try {
    load_orders(dir / "orders.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadOrders, TornFinalLineIsSkipped) {
  TempDir dir;
  const auto menu = small_menu();
  const auto full = serialize_order(order_at("o1", kStart, menu, "cola"));
  write_lines(dir / "orders.jsonl", {serialize_order(order_at("o0", kStart, menu, "cola")), full.substr(0, full.size() / 2)},
              false);
  EXPECT_EQ(load_orders(dir / "orders.jsonl").size(), 1u);
}

TEST(LoadOrders, MissingFile) {
  EXPECT_THROW(load_orders("/nonexistent/orders.jsonl"), Error);
}

TEST(SaveOrders, RoundTripPlainAndGzip) {
  TempDir dir;
  GeneratorSpec spec{small_menu(), 300, 5, zipf_weights(4), {}, 0.5, {kStart, add_days(kStart, 7)}};
  const auto log = generate_orders(spec);
  for (const char* name : {"o.jsonl", "o.jsonl.gz"}) {
    save_orders(log, dir / name);
    EXPECT_EQ(load_orders(dir / name).orders, log.orders) << name;
  }
  // The gz variant is actually compressed.
  std::ifstream gz(dir / "o.jsonl.gz", std::ios::binary);
  unsigned char magic[2]{};
  gz.read(reinterpret_cast<char*>(magic), 2);
  EXPECT_EQ(magic[0], 0x1f);
  EXPECT_EQ(magic[1], 0x8b);
}

TEST(Generator, DeterministicForSeed) {
  GeneratorSpec spec{small_menu(), 500, 42, zipf_weights(4), {{{"burger"}, "cola", 0.5}}, 0.5,
                     {kStart, add_days(kStart, 30)}};
  const auto a = generate_orders(spec);
  const auto b = generate_orders(spec);
  EXPECT_EQ(a.orders, b.orders);
  spec.seed = 43;
  EXPECT_NE(generate_orders(spec).orders, a.orders);
}

TEST(Generator, OrdersAreValidAndInRange) {
  GeneratorSpec spec{small_menu(), 2000, 3, zipf_weights(4), {}, 0.5, {kStart, add_days(kStart, 30)}};
  const auto log = generate_orders(spec);
  ASSERT_EQ(log.size(), 2000u);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& o = log.orders[i];
    EXPECT_TRUE(spec.date_range.contains(o.ts));
    if (i > 0) EXPECT_LE(log.orders[i - 1].ts, o.ts);
    EXPECT_TRUE(validate_order(o).ok());
    int units = 0;
    for (const auto& l : o.lines) units += l.qty;
    EXPECT_LE(units, spec.max_cart_size);
  }
}

bool has(const Order& o, const std::string& id) {
  for (const auto& l : o.lines) {
    if (l.dish_id == id) return true;
  }
  return false;
}

TEST(Generator, CertainRuleAlwaysFires) {
  GeneratorSpec spec{small_menu(), 3000, 8, zipf_weights(4), {{{"burger"}, "cola", 1.0}}, 0.5,
                     {kStart, add_days(kStart, 30)}};
  std::size_t triggered = 0;
  for (const auto& o : generate_orders(spec).orders) {
    if (has(o, "burger")) {
      ++triggered;
      EXPECT_TRUE(has(o, "cola"));
    }
  }
  EXPECT_GT(triggered, 500u);
}

TEST(Generator, RuleProbabilityIsHonoured) {
  // cola is never drawn on its own, so every cola comes from the rule.
  GeneratorSpec spec{small_menu(), 10000, 17, {1.0, 0.0, 1.0, 1.0}, {{{"burger"}, "cola", 0.8}}, 0.5,
                     {kStart, add_days(kStart, 30)}};
  std::size_t triggered = 0, fired = 0;
  for (const auto& o : generate_orders(spec).orders) {
    if (!has(o, "burger")) {
      EXPECT_FALSE(has(o, "cola"));
      continue;
    }
    ++triggered;
    fired += has(o, "cola");
  }
  ASSERT_GT(triggered, 3000u);
  EXPECT_NEAR(static_cast<double>(fired) / triggered, 0.8, 0.02);
}

TEST(Generator, ZipfHeadCarriesVolume) {
  std::vector<Dish> dishes;
  for (int i = 0; i < 200; ++i) dishes.push_back(dish("d" + std::to_string(1000 + i), "Dish " + std::to_string(i), "x", 100, 10, 1));
  GeneratorSpec spec{Catalog(dishes), 10000, 1, zipf_weights(200), {}, 0.5, {kStart, add_days(kStart, 30)}};
  const auto log = generate_orders(spec);
  std::map<std::string, long> qty;
  long total = 0;
  for (const auto& o : log.orders) {
    for (const auto& l : o.lines) {
      qty[l.dish_id] += l.qty;
      total += l.qty;
    }
  }
  long head = 0;
  for (const auto& id : top_k_dishes(log, 20)) head += qty[id];
  EXPECT_GE(static_cast<double>(head) / total, 0.35);
}

TEST(Generator, InvalidSpecs) {
  const Window range{kStart, add_days(kStart, 1)};
  EXPECT_THROW(generate_orders({Catalog{}, 10, 1, {}, {}, 0.5, range}), InvalidSpec);
  EXPECT_THROW(generate_orders({small_menu(), 10, 1, {1, 1}, {}, 0.5, range}), InvalidSpec);
  EXPECT_THROW(generate_orders({small_menu(), 10, 1, {0, 0, 0, 0}, {}, 0.5, range}), InvalidSpec);
  EXPECT_THROW(generate_orders({small_menu(), 10, 1, zipf_weights(4), {{{"burger"}, "soup", 0.5}}, 0.5, range}),
               InvalidSpec);
  EXPECT_THROW(generate_orders({small_menu(), 10, 1, zipf_weights(4), {{{"burger"}, "cola", 1.5}}, 0.5, range}),
               InvalidSpec);
  EXPECT_THROW(generate_orders({small_menu(), 10, 1, zipf_weights(4), {}, 0.5, {kStart, kStart}}), InvalidSpec);
}

TEST(PlantedRules, ShippedFileParses) {
  const auto rules = load_planted_rules(testing::data_dir() / "planted_rules.json");
  ASSERT_EQ(rules.size(), 3u);
  EXPECT_EQ(rules[0].trigger, std::vector<std::string>{"burger"});
  EXPECT_EQ(rules[0].consequent, "cola");
  EXPECT_DOUBLE_EQ(rules[0].probability, 0.8);
}

OrderLog log_of(const std::vector<std::vector<std::pair<std::string, int>>>& carts) {
  OrderLog log;
  int n = 0;
  for (const auto& cart : carts) {
    Order o{"o" + std::to_string(n++), "s", "r", kStart, {}};
    for (const auto& [id, q] : cart) o.lines.push_back({id, id, q, {}, {}, {}, false});
    log.orders.push_back(o);
  }
  return log;
}

TEST(TopK, Examples) {
  const auto log = log_of({{{"a", 3}}, {{"b", 1}, {"c", 2}}, {{"b", 1}}});
  EXPECT_EQ(top_k_dishes(log, 2), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(top_k_dishes(log, 10), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(top_k_dishes(OrderLog{}, 3).empty());
}

TEST(TopK, MatchesSortOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<std::pair<std::string, int>>> carts;
    std::map<std::string, long> totals;
    for (int o = 0; o < 30; ++o) {
      std::vector<std::pair<std::string, int>> cart;
      const std::string id(1, static_cast<char>('a' + rng.below(8)));
      const int q = 1 + static_cast<int>(rng.below(3));
      cart.emplace_back(id, q);
      totals[id] += q;
      carts.push_back(cart);
    }
    std::vector<std::pair<long, std::string>> ranked;
    for (const auto& [id, q] : totals) ranked.emplace_back(-q, id);
    std::sort(ranked.begin(), ranked.end());
    const std::size_t k = 1 + rng.below(8);
    std::vector<std::string> oracle;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) oracle.push_back(ranked[i].second);
    EXPECT_EQ(top_k_dishes(log_of(carts), k), oracle);
  }
}

}  // namespace
}  // namespace kiosk::corpus
