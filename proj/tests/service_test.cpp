#include "kiosk/service.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>

#include "kiosk/error.hpp"
#include "service_env.hpp"

namespace kiosk::service {
namespace {

using nlohmann::json;
using testing::ServiceEnv;

struct UtcZone {
  UtcZone() {
    setenv("TZ", "UTC", 1);
    tzset();
  }
};

ServiceEnv& env() {
  static ServiceEnv e;
  return e;
}

std::string order_body(const std::string& id, bool flagged, const Catalog& menu) {
  const Dish& burger = menu.at("burger");
  const Dish& cola = menu.at("cola");
  Order o{id, "sess", "r1", make_timestamp(2024, 3, 1, 8, 0, 0),
          {{burger.id, burger.name, 1, burger.unit_price, burger.unit_cost, burger.unit_tax, false},
           {cola.id, cola.name, 2, cola.unit_price, cola.unit_cost, cola.unit_tax, flagged}}};
  return corpus::serialize_order(o);
}

TEST(Recommend, ValidCartGetsFourItems) {
  auto svc = env().make();
  const auto r = svc->handle_recommend(R"({"cart":[{"dish_id":"burger","name":"Burger","qty":1}]})");
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = json::parse(r.body);
  EXPECT_EQ(j["items"].size(), 4u);
  EXPECT_EQ(j["model_version"], 1);
  for (const auto& item : j["items"]) {
    EXPECT_TRUE(env().menu.contains(item["dish_id"].get<std::string>()));
    EXPECT_NE(item["dish_id"], "burger");
  }
}

TEST(Recommend, NameOnlyAndEmptyCart) {
  auto svc = env().make();
  const auto by_name = svc->handle_recommend(R"({"cart":[{"name":"cheesburger xl","qty":2}]})");
  ASSERT_EQ(by_name.status, 200);
  EXPECT_EQ(json::parse(by_name.body)["items"].size(), 4u);

  const auto empty = svc->handle_recommend(R"({"cart":[]})");
  ASSERT_EQ(empty.status, 200);
  const auto j = json::parse(empty.body);
  ASSERT_EQ(j["items"].size(), 4u);
  const auto bundle = svc->slot().current().bundle;
  for (int i = 0; i < 4; ++i) EXPECT_EQ(j["items"][i]["dish_id"], bundle->manifest.labels[i].dish_id);
}

TEST(Recommend, BadPayloads) {
  auto svc = env().make();
  for (const char* body : {"garbage", "[]", R"({"cart":{}})", R"({"cart":[{"qty":1}]})",
                           R"({"cart":[{"name":"Burger","qty":0}]})", R"({"cart":[{"name":"Burger","qty":"2"}]})"}) {
    const auto r = svc->handle_recommend(body);
    EXPECT_EQ(r.status, 400) << body;
    EXPECT_TRUE(json::parse(r.body).contains("error")) << body;
  }
}

TEST(Recommend, NoModelIs503) {
  auto svc = env().make(false);
  EXPECT_EQ(svc->handle_recommend(R"({"cart":[]})").status, 503);
  EXPECT_EQ(svc->handle_model_info().status, 503);
  EXPECT_EQ(svc->handle_health().status, 200);
}

TEST(Orders, AcceptDuplicateAndPreserveFlags) {
  auto e = std::make_unique<ServiceEnv>(400);
  auto svc = e->make(false);
  const auto body = order_body("kiosk-1", true, e->menu);
  EXPECT_EQ(svc->handle_order_submit(body).status, 201);
  EXPECT_EQ(svc->handle_order_submit(body).status, 409);
  EXPECT_EQ(svc->handle_order_submit(order_body("kiosk-2", false, e->menu)).status, 201);

  const auto log = corpus::load_orders(e->config.order_log_path);
  EXPECT_EQ(log.size(), 402u);
  std::ifstream in(e->config.order_log_path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  EXPECT_EQ(lines[lines.size() - 2], body);

  // A restarted service still knows the ids on disk.
  auto again = e->make(false);
  EXPECT_EQ(again->handle_order_submit(body).status, 409);
}

TEST(Orders, InvalidOrders) {
  auto svc = env().make(false);
  EXPECT_EQ(svc->handle_order_submit("nope").status, 400);
  auto j = json::parse(order_body("x", false, env().menu));
  j["lines"] = json::array();
  EXPECT_EQ(svc->handle_order_submit(j.dump()).status, 400);
  j = json::parse(order_body("y", false, env().menu));
  j["lines"][0]["qty"] = -1;
  EXPECT_EQ(svc->handle_order_submit(j.dump()).status, 400);
}

TEST(OrderStore, CutsTornTail) {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "o.jsonl");
    out << order_body("a", false, env().menu) << "\n" << R"({"order_id":"b","sess)";
  }
  OrderStore store(dir / "o.jsonl");
  EXPECT_TRUE(store.contains("a"));
  EXPECT_EQ(store.append(order_from_json(json::parse(order_body("c", false, env().menu)))),
            OrderStore::Result::Accepted);
  EXPECT_EQ(store.append(order_from_json(json::parse(order_body("a", false, env().menu)))),
            OrderStore::Result::Duplicate);
  EXPECT_EQ(corpus::load_orders(dir / "o.jsonl").size(), 2u);
}

TEST(Scheduler, FiresOncePerDayAtLocalTime) {
  UtcZone utc;
  const auto day = make_timestamp(2024, 5, 10, 0, 0, 0);
  RetrainScheduler s(3, 0, make_timestamp(2024, 5, 10, 1, 0, 0));
  EXPECT_EQ(s.next_after(make_timestamp(2024, 5, 10, 1, 0, 0)), make_timestamp(2024, 5, 10, 3, 0, 0));
  EXPECT_EQ(s.next_after(make_timestamp(2024, 5, 10, 3, 0, 0)), make_timestamp(2024, 5, 11, 3, 0, 0));
  EXPECT_FALSE(s.due(make_timestamp(2024, 5, 10, 2, 59, 59)));
  EXPECT_TRUE(s.due(make_timestamp(2024, 5, 10, 3, 0, 0)));
  s.mark(make_timestamp(2024, 5, 10, 3, 0, 30));
  EXPECT_FALSE(s.due(make_timestamp(2024, 5, 10, 23, 0, 0)));
  EXPECT_TRUE(s.due(Timestamp{add_days(day, 1).seconds + 3 * 3600}));
}

TEST(Retrain, TickBeforeScheduleDoesNothing) {
  UtcZone utc;
  auto e = std::make_unique<ServiceEnv>(800);
  auto svc = e->make();
  // The scheduler starts at construction time (the real clock); a tick at
  // that instant is never due.
  EXPECT_FALSE(svc->retrain_tick(now_utc()).has_value());
  EXPECT_EQ(svc->slot().current().version, 1u);
}

TEST(Retrain, SuccessSwapsAndPublishes) {
  auto e = std::make_unique<ServiceEnv>(1500);
  auto svc = e->make();
  const auto before = json::parse(svc->handle_model_info().body);
  const auto version = svc->retrain_now(Timestamp{e->now.seconds + 3600});
  ASSERT_TRUE(version.has_value());
  EXPECT_EQ(*version, 2u);
  EXPECT_EQ(svc->slot().current().version, 2u);
  const auto after = json::parse(svc->handle_model_info().body);
  EXPECT_EQ(after["model_version"], 2);
  EXPECT_NE(after["created_at"], before["created_at"]);
  EXPECT_EQ(after["created_at"], format_timestamp(Timestamp{e->now.seconds + 3600}));
  EXPECT_TRUE(std::filesystem::exists(e->config.models_root / after["version"].get<std::string>() / "manifest.json"));
  // No staging directories are left behind.
  for (const auto& entry : std::filesystem::directory_iterator(e->config.models_root)) {
    EXPECT_EQ(entry.path().filename().string().rfind("bundle-", 0), 0u) << entry.path();
  }
  EXPECT_NE(svc->handle_metrics().body.find("retrains_ok 1"), std::string::npos);
}

TEST(Retrain, CorruptLogKeepsOldModel) {
  auto e = std::make_unique<ServiceEnv>(800);
  auto svc = e->make();
  e->corrupt_log();
  EXPECT_FALSE(svc->retrain_now(Timestamp{e->now.seconds + 3600}).has_value());
  EXPECT_EQ(svc->slot().current().version, 1u);
  EXPECT_EQ(svc->handle_recommend(R"({"cart":[{"name":"Burger","qty":1}]})").status, 200);
  EXPECT_NE(svc->handle_metrics().body.find("retrains_failed 1"), std::string::npos);
}

TEST(Config, JsonAndValidation) {
  const auto c = config_from_json(json::parse(R"({"listen":"0.0.0.0:9000","retrain_at":"04:30",
      "embedding_window_days":60,"classifier_window_days":7,"k":15,"seed_policy":"per_run"})"));
  EXPECT_EQ(c.host, "0.0.0.0");
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.retrain_hour, 4);
  EXPECT_EQ(c.retrain_minute, 30);
  EXPECT_EQ(c.bundle.embedding_window_days, 60);
  EXPECT_EQ(c.bundle.k, 15u);
  EXPECT_EQ(c.seed_policy, SeedPolicy::PerRun);
  auto bad = c;
  bad.bundle.classifier_window_days = 90;
  EXPECT_THROW(validate_config(bad), InvalidArgument);
  EXPECT_THROW(config_from_json(json::parse(R"({"retrain_at":"25:00"})")), Error);
  EXPECT_NO_THROW(load_config(testing::data_dir() / "service.json"));
}

TEST(Http, EndpointsOverTheWire) {
  auto svc = env().make();
  const int port = svc->start();
  httplib::Client client("127.0.0.1", port);

  auto health = client.Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  auto menu = client.Get("/v1/menu");
  ASSERT_TRUE(menu);
  EXPECT_EQ(catalog_from_json(json::parse(menu->body)).size(), env().menu.size());

  auto rec = client.Post("/v1/recommend", R"({"cart":[{"name":"Cherry Pie","qty":1}]})", "application/json");
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->status, 200);
  EXPECT_EQ(json::parse(rec->body)["items"].size(), 4u);

  auto bad = client.Post("/v1/recommend", "{", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  auto info = client.Get("/v1/model/info");
  ASSERT_TRUE(info);
  EXPECT_EQ(json::parse(info->body)["k"], 10);

  auto metrics = client.Get("/v1/metrics");
  ASSERT_TRUE(metrics);
  EXPECT_NE(metrics->body.find("recommend_ok 1"), std::string::npos);
  svc->stop();
}

}  // namespace
}  // namespace kiosk::service
