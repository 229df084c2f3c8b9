#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kiosk/corpus.hpp"
#include "kiosk/domain.hpp"
#include "kiosk/recommender.hpp"

namespace kiosk::eval {

struct EvalCase {
  std::vector<rec::CartLine> input_cart;
  std::string truth;  // held-out from_recommendation dish
  std::string order_ref;
};

/// One case per flagged line of every order with at least two lines. The
/// flagged line is removed from the cart entirely.
std::vector<EvalCase> build_eval_cases(const corpus::OrderLog& log);

/// Single-relevant-item AP@k: 1/rank when truth sits at rank <= k, else 0.
double average_precision_at_k(std::span<const std::string> slate, std::string_view truth,
                              std::size_t k);

struct EvalReport {
  std::size_t n_cases = 0;
  std::optional<std::array<double, 4>> map_at;  // MAP@1..4; empty without cases
  std::size_t o_g = 0;  // cases whose truth is in the top 4
  std::size_t o_a = 0;  // all orders in the evaluation log
  std::optional<double> rec_percent;
  std::optional<double> gross_margin_percent;
  Window window;
  std::string model_version;
};

using Recommender = std::function<rec::Slate(std::span<const rec::CartLine>)>;

EvalReport evaluate(const Recommender& recommender, std::span<const EvalCase> cases,
                    const corpus::OrderLog& full_log, const Catalog& catalog);

/// X = 100 * G_rec / G_total over line units, money from the catalog.
/// Throws ZeroTotalMargin, UnknownDish.
double gross_margin_percent(const corpus::OrderLog& log, const Catalog& catalog);

nlohmann::ordered_json report_to_json(const EvalReport& r);

/// "If the cart holds every listed level-1 category, recommend dish_id."
struct BaselineRule {
  std::vector<std::string> categories;
  std::string dish_id;
};

struct RuleBaseline {
  std::vector<BaselineRule> rules;
  // Backfill order, most popular first. Empty means catalog order: the menu
  // file lists dishes by popularity.
  std::vector<std::string> popularity;
  std::size_t slate_size = 4;
};

RuleBaseline baseline_from_json(const nlohmann::json& j);
RuleBaseline load_baseline(const std::filesystem::path& path);
/// burgers+drinks -> fries, burgers -> cola.
RuleBaseline default_baseline();
extern const char* const kDefaultBaselineRules;

/// Matching rules fire in list order; remaining slots come from popularity.
/// Dishes already in the cart are never recommended.
rec::Slate baseline_recommend(const RuleBaseline& rules, std::span<const rec::CartLine> cart,
                              const Catalog& catalog);

}  // namespace kiosk::eval
