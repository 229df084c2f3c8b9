#include "kiosk/recommender.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "kiosk/catalog_match.hpp"
#include "kiosk/error.hpp"
#include "kiosk/rng.hpp"

namespace kiosk::rec {

namespace fs = std::filesystem;

nlohmann::ordered_json config_to_json(const BundleConfig& c) {
  nlohmann::ordered_json j;
  j["embedder"] = {{"dim", c.embedder.dim},
                   {"epochs", c.embedder.epochs},
                   {"learning_rate", c.embedder.learning_rate},
                   {"window_size", c.embedder.window_size},
                   {"negatives", c.embedder.negatives}};
  j["ngrams"] = {{"n_min", c.ngrams.n_min}, {"n_max", c.ngrams.n_max}, {"buckets", c.ngrams.buckets}};
  j["classifier"] = {{"hidden", c.hidden},
                     {"epochs", c.classifier.epochs},
                     {"batch_size", c.classifier.batch_size},
                     {"step_size", c.classifier.step_size},
                     {"beta1", c.classifier.beta1},
                     {"beta2", c.classifier.beta2},
                     {"epsilon", c.classifier.epsilon},
                     {"test_fraction", c.classifier.test_fraction}};
  j["embedding_window_days"] = c.embedding_window_days;
  j["classifier_window_days"] = c.classifier_window_days;
  return j;
}

namespace {

nlohmann::ordered_json window_json(Window w) {
  return nlohmann::ordered_json::array({format_timestamp(w.from), format_timestamp(w.to)});
}

Window window_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw FormatError("window must be [from, to]");
  return {parse_timestamp(j[0].get<std::string>()), parse_timestamp(j[1].get<std::string>())};
}

std::string compact(Timestamp ts) {
  std::string s = format_timestamp(ts);  // YYYY-MM-DDThh:mm:ssZ
  std::string out;
  for (char c : s) {
    if (c != '-' && c != ':') out.push_back(c);
  }
  return out;
}

}  // namespace

nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["format_version"] = m.format_version;
  j["version"] = m.version;
  j["created_at"] = format_timestamp(m.created_at);
  j["embedding_window"] = window_json(m.embedding_window);
  j["classifier_window"] = window_json(m.classifier_window);
  j["k"] = m.k;
  j["slate_size"] = m.slate_size;
  j["exclude_in_cart"] = m.exclude_in_cart;
  j["seed"] = m.seed;
  j["config"] = m.config;
  auto& labels = j["labels"] = nlohmann::ordered_json::array();
  for (const auto& l : m.labels) labels.push_back({{"dish_id", l.dish_id}, {"name", l.name}});
  return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) throw FormatError("unsupported manifest format_version");
    m.version = j.at("version").get<std::string>();
    m.created_at = parse_timestamp(j.at("created_at").get<std::string>());
    m.embedding_window = window_from(j.at("embedding_window"));
    m.classifier_window = window_from(j.at("classifier_window"));
    m.k = j.at("k").get<std::size_t>();
    m.slate_size = j.at("slate_size").get<std::size_t>();
    m.exclude_in_cart = j.at("exclude_in_cart").get<bool>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    for (const auto& l : j.at("labels")) {
      m.labels.push_back({l.at("dish_id").get<std::string>(), l.at("name").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

void validate_bundle(const ModelBundle& b) {
  const auto& clf = b.classifier;
  if (clf.layers.empty()) throw FormatError("bundle classifier has no layers");
  if (clf.input_dim() != b.embedding.dim) {
    throw FormatError("classifier input width does not match embedding dim");
  }
  if (b.embedding.input_matrix.size() != b.embedding.rows() * b.embedding.dim) {
    throw FormatError("embedding matrix has the wrong size");
  }
  if (b.manifest.k != clf.label_map.size() || clf.label_map.size() != clf.classes()) {
    throw FormatError("manifest k does not match the label map");
  }
  if (b.manifest.labels.size() != clf.label_map.size()) {
    throw FormatError("manifest labels do not match the label map");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < clf.label_map.size(); ++i) {
    if (!seen.insert(clf.label_map[i]).second) throw FormatError("label map is not bijective");
    if (b.manifest.labels[i].dish_id != clf.label_map[i]) {
      throw FormatError("manifest labels disagree with the label map");
    }
  }
  if (b.manifest.slate_size < 1) throw FormatError("slate_size must be positive");
  for (float x : b.embedding.input_matrix) {
    if (!std::isfinite(x)) throw FormatError("non-finite embedding entry");
  }
  for (const auto& layer : clf.layers) {
    for (double x : layer.weights) {
      if (!std::isfinite(x)) throw FormatError("non-finite classifier weight");
    }
    for (double x : layer.biases) {
      if (!std::isfinite(x)) throw FormatError("non-finite classifier bias");
    }
  }
}

void save_bundle(const ModelBundle& bundle, const fs::path& dir) {
  validate_bundle(bundle);
  fs::create_directories(dir);
  embed::save_embeddings(bundle.embedding, dir / "embeddings.bin");
  clf::save_classifier(bundle.classifier, dir / "classifier.bin");
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest_to_json(bundle.manifest).dump(2) << '\n';
  if (!out) throw Error("short write to " + (dir / "manifest.json").string());
}

ModelBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("model bundle not found: " + dir.string());
  ModelBundle b;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error("cannot open " + (dir / "manifest.json").string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest: " + std::string(e.what()));
    }
    b.manifest = manifest_from_json(j);
  }
  b.embedding = embed::load_embeddings(dir / "embeddings.bin");
  b.embedding.trained_at = b.manifest.created_at;
  b.embedding.corpus_window = b.manifest.embedding_window;
  b.classifier = clf::load_classifier(dir / "classifier.bin");
  b.classifier.trained_at = b.manifest.created_at;
  b.classifier.train_window = b.manifest.classifier_window;
  validate_bundle(b);
  return b;
}

TrainingWindows training_windows(Timestamp until, int embedding_days, int classifier_days) {
  if (embedding_days < 1 || classifier_days < 1) throw InvalidArgument("window days must be >= 1");
  return {{add_days(until, -embedding_days), until}, {add_days(until, -classifier_days), until}};
}

std::vector<CartLine> cart_of(const Order& order) {
  std::vector<CartLine> cart;
  for (const auto& l : order.lines) cart.push_back({l.dish_id, l.name, l.qty});
  return cart;
}

std::vector<clf::TrainSample> build_training_samples(const corpus::OrderLog& log,
                                                     std::span<const std::string> label_set,
                                                     const embed::EmbeddingModel& embedding) {
  std::map<std::string, int, std::less<>> class_of;
  for (std::size_t i = 0; i < label_set.size(); ++i) class_of.emplace(label_set[i], static_cast<int>(i));

  std::vector<clf::TrainSample> samples;
  std::vector<embed::CartEntry> cart;
  for (const auto& order : log.orders) {
    int units = 0;
    for (const auto& l : order.lines) units += l.qty;
    if (units < 2) continue;
    for (std::size_t held = 0; held < order.lines.size(); ++held) {
      auto cls = class_of.find(order.lines[held].dish_id);
      if (cls == class_of.end()) continue;
      cart.clear();
      for (std::size_t i = 0; i < order.lines.size(); ++i) {
        const int qty = order.lines[i].qty - (i == held ? 1 : 0);
        if (qty > 0) cart.push_back({order.lines[i].name, qty});
      }
      samples.push_back({embed::cart_vector(embedding, cart), cls->second});
    }
  }
  return samples;
}

ModelBundle train_bundle(const corpus::OrderLog& vectorizer_log,
                         const corpus::OrderLog& classifier_log, const BundleConfig& config) {
  if (vectorizer_log.empty() || classifier_log.empty()) throw EmptyCorpus();
  if (config.k < 1) throw InvalidArgument("k must be >= 1");
  if (config.slate_size < 1) throw InvalidArgument("slate_size must be >= 1");

  Rng seeds(config.seed);
  embed::TrainConfig embed_config = config.embedder;
  embed_config.seed = seeds.next();
  clf::FitConfig fit_config = config.classifier;
  fit_config.seed = seeds.next();

  ModelBundle bundle;
  const auto sentences = embed::build_corpus(vectorizer_log);
  bundle.embedding = embed::train_embedder(sentences, config.ngrams, embed_config).model;

  const auto labels = corpus::top_k_dishes(classifier_log, config.k);
  const auto samples = build_training_samples(classifier_log, labels, bundle.embedding);

  std::vector<std::size_t> dims{bundle.embedding.dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(labels.size());
  bundle.classifier = clf::fit(samples, dims, fit_config).model;
  bundle.classifier.label_map = labels;

  const Window embedding_window = vectorizer_log.span();
  const Window classifier_window = classifier_log.span();
  bundle.embedding.corpus_window = embedding_window;
  bundle.classifier.train_window = classifier_window;

  Manifest& m = bundle.manifest;
  m.created_at = classifier_window.to;
  m.version = "bundle-" + compact(m.created_at);
  m.embedding_window = embedding_window;
  m.classifier_window = classifier_window;
  m.k = labels.size();
  m.slate_size = config.slate_size;
  m.exclude_in_cart = config.exclude_in_cart;
  m.seed = config.seed;
  m.config = config_to_json(config);
  std::map<std::string, std::string> names;
  for (const auto& o : classifier_log.orders) {
    for (const auto& l : o.lines) names.emplace(l.dish_id, l.name);
  }
  for (const auto& id : labels) m.labels.push_back({id, names.at(id)});
  bundle.embedding.trained_at = m.created_at;
  bundle.classifier.trained_at = m.created_at;

  validate_bundle(bundle);
  return bundle;
}

std::vector<std::string> Slate::ids() const {
  std::vector<std::string> out;
  for (const auto& item : items) out.push_back(item.dish_id);
  return out;
}

namespace {

// Serving-catalog dish for a label; stale ids fall back to name matching.
const Dish* resolve_label(const Label& label, const Catalog& catalog) {
  if (const Dish* d = catalog.find(label.dish_id)) return d;
  if (catalog.empty()) return nullptr;
  return &catalog.at(match::nearest_dish(label.name, catalog).dish_id);
}

}  // namespace

Slate recommend(const ModelBundle& bundle, std::span<const CartLine> cart, const Catalog& catalog) {
  const Manifest& m = bundle.manifest;
  std::set<std::string, std::less<>> in_cart;
  std::vector<embed::CartEntry> entries;
  for (const auto& line : cart) {
    if (line.qty < 1) throw InvalidArgument("cart quantities must be positive");
    entries.push_back({line.name, line.qty});
    if (!line.dish_id.empty()) {
      in_cart.insert(line.dish_id);
    } else {
      const std::string wanted = text::normalized_name(line.name);
      for (const auto& d : catalog.dishes()) {
        if (text::normalized_name(d.name) == wanted) in_cart.insert(d.id);
      }
    }
  }

  std::vector<std::pair<int, double>> ranked;
  std::vector<float> vec;
  bool cold_start = entries.empty();
  if (!cold_start) {
    try {
      vec = embed::cart_vector(bundle.embedding, entries);
    } catch (const EmptyCart&) {
      cold_start = true;
    }
  }
  if (cold_start) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) ranked.emplace_back(static_cast<int>(i), 0.0);
  } else {
    ranked = clf::top_k(bundle.classifier, vec, bundle.classifier.classes());
  }

  Slate slate;
  std::set<std::string, std::less<>> chosen;
  for (const auto& [cls, score] : ranked) {
    if (slate.items.size() >= m.slate_size) break;
    const Dish* dish = resolve_label(m.labels[static_cast<std::size_t>(cls)], catalog);
    if (dish == nullptr || chosen.contains(dish->id)) continue;
    if (m.exclude_in_cart && in_cart.contains(dish->id)) continue;
    chosen.insert(dish->id);
    slate.items.push_back({dish->id, dish->name, score});
  }
  return slate;
}

}  // namespace kiosk::rec
