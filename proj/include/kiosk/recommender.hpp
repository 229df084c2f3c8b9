#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kiosk/classifier.hpp"
#include "kiosk/corpus.hpp"
#include "kiosk/domain.hpp"
#include "kiosk/embedder.hpp"
#include "kiosk/text.hpp"

namespace kiosk::rec {

struct BundleConfig {
  embed::TrainConfig embedder;
  text::NgramConfig ngrams;
  clf::FitConfig classifier;
  std::vector<std::size_t> hidden = {128, 64};
  std::size_t k = 20;
  std::size_t slate_size = 4;
  bool exclude_in_cart = true;
  /// Single run seed; the embedder and classifier seeds are derived from it.
  std::uint64_t seed = 1;
  int embedding_window_days = 90;
  int classifier_window_days = 14;
};

nlohmann::ordered_json config_to_json(const BundleConfig& c);

struct Label {
  std::string dish_id;
  std::string name;
};

struct Manifest {
  int format_version = 1;
  std::string version;
  Timestamp created_at;
  Window embedding_window;
  Window classifier_window;
  std::size_t k = 0;
  std::size_t slate_size = 4;
  bool exclude_in_cart = true;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config;
  std::vector<Label> labels;  // class order, most popular first
};

nlohmann::ordered_json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

struct ModelBundle {
  embed::EmbeddingModel embedding;
  clf::ClassifierModel classifier;
  Manifest manifest;
};

/// Throws FormatError when the parts do not fit together.
void validate_bundle(const ModelBundle& bundle);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

/// Vectorizer window [until - embed_days, until) and classifier window
/// [until - clf_days, until).
struct TrainingWindows {
  Window embedding;
  Window classifier;
};
TrainingWindows training_windows(Timestamp until, int embedding_days, int classifier_days);

/// Leave-one-out samples: for each order holding at least two units and
/// each line whose dish is in `label_set`, the cart minus one unit of that
/// dish, labelled with the dish's class (its position in `label_set`).
std::vector<clf::TrainSample> build_training_samples(const corpus::OrderLog& log,
                                                     std::span<const std::string> label_set,
                                                     const embed::EmbeddingModel& embedding);

/// Trains the vectorizer on `vectorizer_log`, picks the label set from
/// `classifier_log` and fits the classifier on its samples.
ModelBundle train_bundle(const corpus::OrderLog& vectorizer_log,
                         const corpus::OrderLog& classifier_log, const BundleConfig& config);

struct CartLine {
  std::string dish_id;  // optional; empty when unknown
  std::string name;
  int qty = 1;
};

struct SlateItem {
  std::string dish_id;
  std::string name;
  double score = 0.0;
};

struct Slate {
  std::vector<SlateItem> items;  // descending score
  std::vector<std::string> ids() const;
};

/// Top-scored label dishes for the cart, resolved against the serving
/// catalog. An empty cart yields the most popular label dishes.
Slate recommend(const ModelBundle& bundle, std::span<const CartLine> cart, const Catalog& catalog);

/// Cart lines (dish_id, name, qty) of an order.
std::vector<CartLine> cart_of(const Order& order);

}  // namespace kiosk::rec
