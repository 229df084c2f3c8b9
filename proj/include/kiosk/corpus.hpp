#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kiosk/domain.hpp"

namespace kiosk::corpus {

struct OrderLog {
  std::vector<Order> orders;  // sorted by ts, validated
  std::string source;
  std::optional<Window> window;

  bool empty() const { return orders.empty(); }
  std::size_t size() const { return orders.size(); }
  /// The load window when known, else [first ts, last ts + 1s).
  Window span() const;
};

/// Orders with window.from <= ts < window.to, validated and sorted. A final
/// line without a trailing newline that fails to parse is treated as a torn
/// append: it is skipped with a warning. Any other bad line is a ParseError.
/// Paths ending in ".gz" are read through zlib.
OrderLog load_orders(const std::filesystem::path& path, Window window);
/// Every order in the file.
OrderLog load_orders(const std::filesystem::path& path);

/// One JSON object per line in the field order of the log schema.
std::string serialize_order(const Order& order);
void save_orders(const OrderLog& log, const std::filesystem::path& path);

/// Orders of `log` inside `window`, preserving order.
OrderLog slice(const OrderLog& log, Window window);

struct PlantedRule {
  std::vector<std::string> trigger;  // dish ids, all must be in the cart
  std::string consequent;
  double probability = 0.0;
};

struct GeneratorSpec {
  Catalog menu;
  std::size_t n_orders = 1000;
  std::uint64_t seed = 1;
  std::vector<double> popularity;  // one weight per menu dish, menu order
  std::vector<PlantedRule> rules;
  double rec_flag_rate = 0.5;
  Window date_range;
  int max_cart_size = 6;
  std::size_t restaurants = 10;
};

/// Weights proportional to 1 / rank^exponent over the menu order.
std::vector<double> zipf_weights(std::size_t n, double exponent = 1.0);

/// Throws InvalidSpec. Rules are applied in list order, so a rule may
/// trigger on a consequent planted by an earlier one.
OrderLog generate_orders(const GeneratorSpec& spec);

std::vector<PlantedRule> planted_rules_from_json(const nlohmann::json& j);
std::vector<PlantedRule> load_planted_rules(const std::filesystem::path& path);

/// Ids with the highest total purchased quantity; ties by id.
std::vector<std::string> top_k_dishes(const OrderLog& log, std::size_t k);

}  // namespace kiosk::corpus
