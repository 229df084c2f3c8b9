#include "kiosk/eval.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "kiosk/catalog_match.hpp"
#include "kiosk/error.hpp"
#include "kiosk/text.hpp"

namespace kiosk::eval {

std::vector<EvalCase> build_eval_cases(const corpus::OrderLog& log) {
  std::vector<EvalCase> cases;
  for (const auto& order : log.orders) {
    if (order.lines.size() < 2) continue;
    for (std::size_t held = 0; held < order.lines.size(); ++held) {
      if (!order.lines[held].from_recommendation) continue;
      EvalCase c;
      c.truth = order.lines[held].dish_id;
      c.order_ref = order.order_id;
      for (std::size_t i = 0; i < order.lines.size(); ++i) {
        if (i == held) continue;
        const auto& l = order.lines[i];
        c.input_cart.push_back({l.dish_id, l.name, l.qty});
      }
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

double average_precision_at_k(std::span<const std::string> slate, std::string_view truth,
                              std::size_t k) {
  const std::size_t limit = std::min(k, slate.size());
  for (std::size_t r = 0; r < limit; ++r) {
    if (slate[r] == truth) return 1.0 / static_cast<double>(r + 1);
  }
  return 0.0;
}

EvalReport evaluate(const Recommender& recommender, std::span<const EvalCase> cases,
                    const corpus::OrderLog& full_log, const Catalog& catalog) {
  EvalReport report;
  report.n_cases = cases.size();
  report.o_a = full_log.size();
  report.window = full_log.span();

  std::array<double, 4> sums{};
  for (const auto& c : cases) {
    const auto ids = recommender(c.input_cart).ids();
    for (std::size_t k = 1; k <= 4; ++k) sums[k - 1] += average_precision_at_k(ids, c.truth, k);
    if (average_precision_at_k(ids, c.truth, 4) > 0.0) ++report.o_g;
  }
  if (!cases.empty()) {
    std::array<double, 4> map{};
    for (std::size_t k = 0; k < 4; ++k) map[k] = sums[k] / static_cast<double>(cases.size());
    report.map_at = map;
    if (report.o_a > 0) {
      report.rec_percent = static_cast<double>(report.o_g) / static_cast<double>(report.o_a);
    }
  }
  try {
    report.gross_margin_percent = gross_margin_percent(full_log, catalog);
  } catch (const ZeroTotalMargin&) {
    report.gross_margin_percent.reset();
  }
  return report;
}

double gross_margin_percent(const corpus::OrderLog& log, const Catalog& catalog) {
  Money flagged;
  Money total;
  for (const auto& order : log.orders) {
    for (const auto& line : order.lines) {
      const Dish& d = catalog.at(line.dish_id);
      const Money m = gross_margin(d.unit_price, d.unit_cost, d.unit_tax) * line.qty;
      total += m;
      if (line.from_recommendation) flagged += m;
    }
  }
  if (total.amount == 0) throw ZeroTotalMargin();
  return 100.0 * static_cast<double>(flagged.amount) / static_cast<double>(total.amount);
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n_cases"] = r.n_cases;
  nlohmann::ordered_json map;
  for (std::size_t k = 0; k < 4; ++k) {
    map[std::to_string(k + 1)] = r.map_at ? nlohmann::ordered_json((*r.map_at)[k]) : nullptr;
  }
  j["map"] = map;
  j["o_g"] = r.o_g;
  j["o_a"] = r.o_a;
  j["rec_percent"] = r.rec_percent ? nlohmann::ordered_json(*r.rec_percent) : nullptr;
  j["gross_margin_percent"] =
      r.gross_margin_percent ? nlohmann::ordered_json(*r.gross_margin_percent) : nullptr;
  j["window"] = {format_timestamp(r.window.from), format_timestamp(r.window.to)};
  j["model_version"] = r.model_version;
  return j;
}

const char* const kDefaultBaselineRules = R"({
  "rules": [
    {"if_categories": ["burgers", "drinks"], "recommend": "fries"},
    {"if_categories": ["burgers"], "recommend": "cola"}
  ]
})";

RuleBaseline baseline_from_json(const nlohmann::json& j) {
  RuleBaseline b;
  try {
    for (const auto& r : j.at("rules")) {
      b.rules.push_back({r.at("if_categories").get<std::vector<std::string>>(),
                         r.at("recommend").get<std::string>()});
    }
    if (j.contains("popularity")) b.popularity = j["popularity"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("baseline rules: ") + e.what());
  }
  return b;
}

RuleBaseline load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open rules file " + path.string());
  try {
    return baseline_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("rules file " + path.string() + ": " + e.what());
  }
}

RuleBaseline default_baseline() { return baseline_from_json(nlohmann::json::parse(kDefaultBaselineRules)); }

rec::Slate baseline_recommend(const RuleBaseline& rules, std::span<const rec::CartLine> cart,
                              const Catalog& catalog) {
  std::set<std::string, std::less<>> in_cart;
  std::set<std::string, std::less<>> categories;
  for (const auto& line : cart) {
    const Dish* d = line.dish_id.empty() ? nullptr : catalog.find(line.dish_id);
    if (d == nullptr && !catalog.empty() && !text::normalize(line.name).empty()) {
      d = &catalog.at(match::nearest_dish(line.name, catalog).dish_id);
    }
    if (d == nullptr) continue;
    in_cart.insert(d->id);
    categories.insert(d->category[0]);
  }

  rec::Slate slate;
  std::set<std::string, std::less<>> chosen;
  auto offer = [&](const std::string& id, double score) {
    if (slate.items.size() >= rules.slate_size) return;
    const Dish* d = catalog.find(id);
    if (d == nullptr || in_cart.contains(id) || chosen.contains(id)) return;
    chosen.insert(id);
    slate.items.push_back({id, d->name, score});
  };
  for (const auto& rule : rules.rules) {
    const bool match = std::all_of(rule.categories.begin(), rule.categories.end(),
                                   [&](const std::string& c) { return categories.contains(c); });
    if (match) offer(rule.dish_id, 1.0);
  }
  if (rules.popularity.empty()) {
    for (const auto& d : catalog.dishes()) offer(d.id, 0.0);
  } else {
    for (const auto& id : rules.popularity) offer(id, 0.0);
  }
  return slate;
}

}  // namespace kiosk::eval
