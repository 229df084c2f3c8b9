#include "kiosk/cli.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "kiosk/corpus.hpp"
#include "kiosk/error.hpp"
#include "kiosk/eval.hpp"
#include "kiosk/recommender.hpp"
#include "kiosk/service.hpp"

namespace kiosk::cli {

namespace fs = std::filesystem;

namespace {

struct GenArgs {
  std::string catalog;
  std::size_t orders = 10000;
  std::uint64_t seed = 1;
  int days = 30;
  std::string out;
  std::string rules;
  std::string start = "2024-01-01T00:00:00Z";
  double rec_flag_rate = 0.5;
  double zipf = 1.0;
};

struct TrainArgs {
  std::string orders;
  std::string catalog;
  std::string out;
  int embed_days = 90;
  int clf_days = 14;
  std::uint32_t dim = 100;
  std::size_t k = 20;
  int epochs = 10;
  int embed_epochs = 5;
  std::uint64_t seed = 1;
  std::string until;
};

struct EvalArgs {
  std::string model;
  std::string orders;
  std::string catalog;
  std::string report;
  std::string rules;
};

struct ServeArgs {
  std::string config;
  std::string listen;
  std::string model;
  std::string catalog;
  std::string orders_log;
  std::string models_root;
  std::string retrain_at;
  std::optional<int> embed_days;
  std::optional<int> clf_days;
  std::optional<std::size_t> k;
  std::optional<std::size_t> slate_size;
  std::optional<bool> exclude_in_cart;
  std::optional<std::uint64_t> seed;
};

struct RecommendArgs {
  std::string model;
  std::string catalog;
  std::string cart;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("short write to " + path.string());
}

int cmd_gen(const GenArgs& a, std::ostream& out) {
  corpus::GeneratorSpec spec;
  spec.menu = load_catalog(a.catalog);
  spec.n_orders = a.orders;
  spec.seed = a.seed;
  spec.popularity = corpus::zipf_weights(spec.menu.size(), a.zipf);
  if (!a.rules.empty()) spec.rules = corpus::load_planted_rules(a.rules);
  spec.rec_flag_rate = a.rec_flag_rate;
  const Timestamp start = parse_timestamp(a.start);
  spec.date_range = {start, add_days(start, a.days)};
  const auto log = corpus::generate_orders(spec);
  corpus::save_orders(log, a.out);
  out << "wrote " << log.size() << " orders to " << a.out << " (seed " << a.seed << ")\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.clf_days > a.embed_days) throw InvalidArgument("--clf-days must not exceed --embed-days");
  const auto all = corpus::load_orders(a.orders);
  if (all.empty()) throw EmptyCorpus();
  const Timestamp until = a.until.empty() ? Timestamp{all.orders.back().ts.seconds + 1}
                                          : parse_timestamp(a.until);
  const auto windows = rec::training_windows(until, a.embed_days, a.clf_days);
  const auto vectorizer_log = corpus::slice(all, windows.embedding);
  const auto classifier_log = corpus::slice(all, windows.classifier);

  rec::BundleConfig cfg;
  cfg.embedder.dim = a.dim;
  cfg.embedder.epochs = a.embed_epochs;
  cfg.classifier.epochs = a.epochs;
  cfg.k = a.k;
  cfg.seed = a.seed;
  cfg.embedding_window_days = a.embed_days;
  cfg.classifier_window_days = a.clf_days;
  const auto bundle = rec::train_bundle(vectorizer_log, classifier_log, cfg);
  if (!a.catalog.empty()) {
    const auto catalog = load_catalog(a.catalog);
    for (const auto& label : bundle.manifest.labels) {
      if (!catalog.contains(label.dish_id)) {
        std::cerr << "warning: label dish " << label.dish_id << " is not in the catalog\n";
      }
    }
  }
  rec::save_bundle(bundle, a.out);
  out << "trained " << bundle.manifest.version << " on " << vectorizer_log.size()
      << " vectorizer orders and " << classifier_log.size() << " classifier orders (seed "
      << a.seed << ") -> " << a.out << "\n";
  return kExitOk;
}

eval::EvalReport evaluate_model(const rec::ModelBundle& bundle, const corpus::OrderLog& log,
                                const Catalog& catalog, std::span<const eval::EvalCase> cases) {
  auto report = eval::evaluate(
      [&](std::span<const rec::CartLine> cart) { return rec::recommend(bundle, cart, catalog); },
      cases, log, catalog);
  report.model_version = bundle.manifest.version;
  return report;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto bundle = rec::load_bundle(a.model);
  const auto catalog = load_catalog(a.catalog);
  const auto log = corpus::load_orders(a.orders);
  const auto cases = eval::build_eval_cases(log);
  const auto report = evaluate_model(bundle, log, catalog, cases);
  const std::string text = eval::report_to_json(report).dump(2) + "\n";
  if (a.report.empty()) {
    out << text;
  } else {
    write_text(a.report, text);
    out << "evaluated " << report.n_cases << " cases -> " << a.report << "\n";
  }
  return kExitOk;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << *v;
  return s.str();
}

int cmd_compare(const EvalArgs& a, std::ostream& out) {
  const auto bundle = rec::load_bundle(a.model);
  const auto catalog = load_catalog(a.catalog);
  const auto log = corpus::load_orders(a.orders);
  const auto cases = eval::build_eval_cases(log);
  auto baseline = a.rules.empty() ? eval::default_baseline() : eval::load_baseline(a.rules);
  const auto model_report = evaluate_model(bundle, log, catalog, cases);
  auto baseline_report = eval::evaluate(
      [&](std::span<const rec::CartLine> cart) { return eval::baseline_recommend(baseline, cart, catalog); },
      cases, log, catalog);
  baseline_report.model_version = "rule-baseline";

  out << std::left << std::setw(24) << "Name" << std::setw(8) << "MAP@1" << std::setw(8) << "MAP@2"
      << std::setw(8) << "MAP@3" << std::setw(8) << "MAP@4" << "rec percent\n";
  auto row = [&](const std::string& name, const eval::EvalReport& r) {
    out << std::setw(24) << name;
    for (std::size_t k = 0; k < 4; ++k) {
      out << std::setw(8) << cell(r.map_at ? std::optional<double>((*r.map_at)[k]) : std::nullopt);
    }
    out << cell(r.rec_percent) << "\n";
  };
  row("subword + MLP", model_report);
  row("rule baseline", baseline_report);
  out << "cases " << model_report.n_cases << ", orders " << model_report.o_a << "\n";
  if (!a.report.empty()) {
    nlohmann::ordered_json j;
    j["model"] = eval::report_to_json(model_report);
    j["baseline"] = eval::report_to_json(baseline_report);
    write_text(a.report, j.dump(2) + "\n");
  }
  return kExitOk;
}

std::vector<rec::CartLine> parse_cart(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("--cart is not valid JSON: ") + e.what());
  }
  if (j.is_object() && j.contains("cart")) j = j["cart"];
  if (!j.is_array()) throw InvalidArgument("--cart must be a JSON array or {\"cart\": [...]}");
  std::vector<rec::CartLine> cart;
  try {
    for (const auto& item : j) {
      rec::CartLine line;
      line.name = item.at("name").get<std::string>();
      line.qty = item.value("qty", 1);
      line.dish_id = item.value("dish_id", std::string());
      cart.push_back(std::move(line));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad --cart item: ") + e.what());
  }
  return cart;
}

int cmd_recommend(const RecommendArgs& a, std::ostream& out) {
  const auto bundle = rec::load_bundle(a.model);
  const auto catalog = load_catalog(a.catalog);
  const auto cart = parse_cart(a.cart);
  const auto slate = rec::recommend(bundle, cart, catalog);
  nlohmann::ordered_json j;
  j["model_version"] = bundle.manifest.version;
  j["items"] = nlohmann::ordered_json::array();
  for (const auto& item : slate.items) {
    j["items"].push_back({{"dish_id", item.dish_id}, {"name", item.name}, {"score", item.score}});
  }
  out << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  service::ServiceConfig cfg;
  if (!a.config.empty()) cfg = service::load_config(a.config);
  nlohmann::json overrides = nlohmann::json::object();
  if (!a.listen.empty()) overrides["listen"] = a.listen;
  if (!a.model.empty()) overrides["model"] = a.model;
  if (!a.catalog.empty()) overrides["catalog"] = a.catalog;
  if (!a.orders_log.empty()) overrides["orders_log"] = a.orders_log;
  if (!a.models_root.empty()) overrides["models_root"] = a.models_root;
  if (!a.retrain_at.empty()) overrides["retrain_at"] = a.retrain_at;
  if (a.embed_days) overrides["embedding_window_days"] = *a.embed_days;
  if (a.clf_days) overrides["classifier_window_days"] = *a.clf_days;
  if (a.k) overrides["k"] = *a.k;
  if (a.slate_size) overrides["slate_size"] = *a.slate_size;
  if (a.exclude_in_cart) overrides["exclude_in_cart"] = *a.exclude_in_cart;
  if (a.seed) overrides["seed"] = *a.seed;
  cfg = service::config_from_json(overrides, cfg);
  if (cfg.catalog_path.empty()) throw InvalidArgument("a catalog path is required (--catalog)");
  service::validate_config(cfg);

  // Handle termination signals synchronously on this thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::RecommendationService svc(cfg, load_catalog(cfg.catalog_path));
  if (!svc.load_initial_model()) out << "no initial model; serving 503 until the first retrain\n";
  const int port = svc.start();
  svc.start_scheduler();
  out << "serving on " << cfg.host << ":" << port << "\n" << std::flush;
  int sig = 0;
  sigwait(&signals, &sig);
  svc.stop();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shopping-cart recommender for self-service kiosks", "kiosk"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic order log");
  g->add_option("--catalog", gen.catalog, "Menu catalog JSON")->required()->check(CLI::ExistingFile);
  g->add_option("--orders", gen.orders, "Number of orders")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--days", gen.days, "Days covered by the log")->check(CLI::PositiveNumber);
  g->add_option("--out", gen.out, "Output JSONL path (.gz compresses)")->required();
  g->add_option("--rules", gen.rules, "Planted association rules JSON");
  g->add_option("--start", gen.start, "First day, YYYY-MM-DDThh:mm:ssZ");
  g->add_option("--rec-flag-rate", gen.rec_flag_rate, "Probability a planted line is flagged")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--zipf", gen.zipf, "Popularity exponent over menu order");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model bundle");
  t->add_option("--orders", train.orders, "Order log")->required()->check(CLI::ExistingFile);
  t->add_option("--catalog", train.catalog, "Catalog used to check label dishes");
  t->add_option("--out", train.out, "Bundle directory")->required();
  t->add_option("--embed-days", train.embed_days, "Vectorizer window in days")->check(CLI::PositiveNumber);
  t->add_option("--clf-days", train.clf_days, "Classifier window in days")->check(CLI::PositiveNumber);
  t->add_option("--dim", train.dim, "Embedding dimension")->check(CLI::Range(2u, 4096u));
  t->add_option("--k", train.k, "Number of classes")->check(CLI::PositiveNumber);
  t->add_option("--epochs", train.epochs, "Classifier epochs")->check(CLI::PositiveNumber);
  t->add_option("--embed-epochs", train.embed_epochs, "Vectorizer epochs")->check(CLI::PositiveNumber);
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--until", train.until, "Window end (default: just after the last order)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Offline metrics for a bundle");
  e->add_option("--model", ev.model, "Bundle directory")->required();
  e->add_option("--orders", ev.orders, "Evaluation order log")->required();
  e->add_option("--catalog", ev.catalog, "Catalog JSON")->required();
  e->add_option("--report", ev.report, "Report path (default: stdout)");

  EvalArgs cmp;
  auto* c = app.add_subcommand("compare", "Bundle vs rule baseline");
  c->add_option("--model", cmp.model, "Bundle directory")->required();
  c->add_option("--orders", cmp.orders, "Evaluation order log")->required();
  c->add_option("--catalog", cmp.catalog, "Catalog JSON")->required();
  c->add_option("--report", cmp.report, "Write both reports as JSON");
  c->add_option("--rules", cmp.rules, "Baseline rules JSON (default: built-in burger rules)");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Run the HTTP service");
  s->add_option("--config", serve.config, "Service config JSON");
  s->add_option("--listen", serve.listen, "host:port");
  s->add_option("--model", serve.model, "Initial bundle directory");
  s->add_option("--catalog", serve.catalog, "Catalog JSON");
  s->add_option("--orders-log", serve.orders_log, "Order log to append to");
  s->add_option("--models-root", serve.models_root, "Directory for retrained bundles");
  s->add_option("--retrain-at", serve.retrain_at, "Local HH:MM of the nightly retrain");
  s->add_option("--embed-days", serve.embed_days, "Vectorizer window in days");
  s->add_option("--clf-days", serve.clf_days, "Classifier window in days");
  s->add_option("--k", serve.k, "Number of classes");
  s->add_option("--slate-size", serve.slate_size, "Items per slate");
  s->add_option("--exclude-in-cart", serve.exclude_in_cart, "Never recommend cart items");
  s->add_option("--seed", serve.seed, "Retrain seed");

  RecommendArgs recommend;
  auto* r = app.add_subcommand("recommend", "One-shot slate for a cart");
  r->add_option("--model", recommend.model, "Bundle directory")->required();
  r->add_option("--catalog", recommend.catalog, "Catalog JSON")->required();
  r->add_option("--cart", recommend.cart, "Cart JSON, e.g. '[{\"name\":\"Burger\",\"qty\":1}]'")
      ->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    const CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    err << target->help();
    return kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (c->parsed()) return cmd_compare(cmp, out);
    if (s->parsed()) return cmd_serve(serve, out);
    if (r->parsed()) return cmd_recommend(recommend, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace kiosk::cli
