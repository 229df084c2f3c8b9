#include "kiosk/embedder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "kiosk/corpus.hpp"
#include "kiosk/error.hpp"
#include "kiosk/rng.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace kiosk::embed {
namespace {

using testing::line_of;

const Timestamp kStart = make_timestamp(2024, 1, 1, 0, 0, 0);

// Shared model trained on generated orders with the shipped rules.
struct GeneratedFixture {
  Catalog menu = load_catalog(testing::data_dir() / "menu.json");
  corpus::OrderLog log;
  TrainResult trained;

  GeneratedFixture() {
    corpus::GeneratorSpec spec{menu, 4000, 7, corpus::zipf_weights(menu.size()),
                               corpus::load_planted_rules(testing::data_dir() / "planted_rules.json"), 0.5,
                               {kStart, add_days(kStart, 30)}};
    log = corpus::generate_orders(spec);
    const auto sentences = build_corpus(log);
    TrainConfig cfg;
    cfg.dim = 32;
    cfg.seed = 3;
    trained = train_embedder(sentences, {}, cfg);
  }
  static const GeneratedFixture& get() {
    static const GeneratedFixture f;
    return f;
  }
};

TEST(BuildCorpus, TokensRepeatedByQtyInIdOrder) {
  const Dish cola = testing::dish("cola", "Cola 0,5", "drinks", 1, 0, 0);
  const Dish burger = testing::dish("burger", "Burger", "burgers", 1, 0, 0);
  corpus::OrderLog log;
  log.orders.push_back({"o1", "s", "r", kStart, {line_of(cola, 1), line_of(burger, 2)}});
  EXPECT_EQ(build_corpus(log), (std::vector<Sentence>{{"burger", "burger", "cola", "0", "5"}}));
  EXPECT_TRUE(build_corpus(corpus::OrderLog{}).empty());
}

TEST(TrainEmbedder, CooccurrenceIsReflectedInCosine) {
  std::vector<Sentence> corpus;
  for (int i = 0; i < 500; ++i) {
    if (i % 2 == 0) {
      corpus.push_back({"burger", "cola"});
    } else {
      corpus.push_back({"pie", "tea"});
    }
  }
  TrainConfig cfg;
  cfg.dim = 24;
  cfg.seed = 5;
  const auto m = train_embedder(corpus, {}, cfg).model;
  const auto burger = word_vector(m, "burger");
  EXPECT_GT(cosine(burger, word_vector(m, "cola")), cosine(burger, word_vector(m, "pie")));
}

TEST(TrainEmbedder, DeterministicForSeed) {
  const std::vector<Sentence> corpus(200, Sentence{"fries", "cola", "nuggets"});
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.seed = 77;
  const auto a = train_embedder(corpus, {}, cfg);
  const auto b = train_embedder(corpus, {}, cfg);
  EXPECT_EQ(a.model.input_matrix, b.model.input_matrix);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  cfg.seed = 78;
  EXPECT_NE(train_embedder(corpus, {}, cfg).model.input_matrix, a.model.input_matrix);
}

TEST(TrainEmbedder, LossDecreases) {
  const auto& loss = GeneratedFixture::get().trained.epoch_loss;
  ASSERT_EQ(loss.size(), 5u);
  EXPECT_LT(loss.back(), loss.front());
}

TEST(TrainEmbedder, Errors) {
  EXPECT_THROW(train_embedder(std::vector<Sentence>{}, {}, {}), EmptyCorpus);
  EXPECT_THROW(train_embedder(std::vector<Sentence>{{}, {}}, {}, {}), EmptyCorpus);
  TrainConfig zero_dim;
  zero_dim.dim = 0;
  EXPECT_THROW(train_embedder(std::vector<Sentence>{{"a", "b"}}, {}, zero_dim), InvalidArgument);
}

TEST(WordVector, OovTypoIsCloseToKnownWord) {
  const auto& m = GeneratedFixture::get().trained.model;
  ASSERT_TRUE(m.vocab.index("cheeseburger").has_value());
  ASSERT_FALSE(m.vocab.index("cheesburger").has_value());
  EXPECT_GT(cosine(word_vector(m, "cheesburger"), word_vector(m, "cheeseburger")), 0.8);
}

TEST(WordVector, FiniteAndNonZero) {
  const auto& m = GeneratedFixture::get().trained.model;
  for (const float v : m.input_matrix) ASSERT_TRUE(std::isfinite(v));
  for (const char* w : {"burger", "cola", "qqq", "x", "кола"}) {
    const auto v = word_vector(m, w);
    double norm = 0;
    for (float x : v) norm += double(x) * x;
    EXPECT_GT(norm, 0.0) << w;
  }
}

TEST(CartVector, Properties) {
  const auto& m = GeneratedFixture::get().trained.model;
  const std::vector<CartEntry> one{{"Burger", 1}};
  EXPECT_EQ(cart_vector(m, one), word_vector(m, "burger"));

  // Doubling every quantity leaves the mean unchanged.
  const std::vector<CartEntry> cart{{"Burger", 1}, {"Cola 0,5", 2}, {"Cherry Pie", 1}};
  const std::vector<CartEntry> doubled{{"Burger", 2}, {"Cola 0,5", 4}, {"Cherry Pie", 2}};
  const auto v = cart_vector(m, cart);
  const auto d = cart_vector(m, doubled);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], d[i], 1e-6);

  // Explicit token mean: burger, cola, 0, 5 twice, cherry, pie.
  const std::vector<std::string> tokens{"burger", "cola", "0", "5", "cola", "0", "5", "cherry", "pie"};
  for (std::size_t i = 0; i < v.size(); ++i) {
    double sum = 0;
    for (const auto& t : tokens) sum += word_vector(m, t)[i];
    EXPECT_NEAR(v[i], sum / tokens.size(), 1e-6);
  }

  const std::vector<CartEntry> reversed(cart.rbegin(), cart.rend());
  const auto r = cart_vector(m, reversed);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], r[i], 1e-6);

  EXPECT_THROW(cart_vector(m, std::vector<CartEntry>{}), EmptyCart);
  EXPECT_THROW(cart_vector(m, std::vector<CartEntry>{{"!!", 1}}), EmptyCart);
}

TEST(Embeddings, PlantedPairsCloserThanRandomPairs) {
  // Five meal groups of four dishes; each cart takes three dishes from one
  // group plus one arbitrary dish. Same-group pairs are the planted pairs.
  const int groups = 5, per_group = 4, n = groups * per_group;
  Rng rng(4);
  std::vector<std::string> words;
  for (int i = 0; i < n; ++i) {
    std::string w;
    for (int j = 0; j < 7; ++j) w.push_back(static_cast<char>('a' + rng.below(26)));
    words.push_back(w);
  }
  std::vector<Sentence> corpus;
  for (int s = 0; s < 2000; ++s) {
    const auto g = static_cast<int>(rng.below(groups));
    Sentence sent;
    for (int j = 0; j < 3; ++j) sent.push_back(words[g * per_group + rng.below(per_group)]);
    sent.push_back(words[rng.below(n)]);
    rng.shuffle(sent);
    corpus.push_back(sent);
  }
  TrainConfig cfg;
  cfg.dim = 32;
  cfg.seed = 3;
  const auto m = train_embedder(corpus, {}, cfg).model;

  double planted = 0, other = 0;
  int n_planted = 0, n_other = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double c = cosine(word_vector(m, words[i]), word_vector(m, words[j]));
      if (i / per_group == j / per_group) {
        planted += c;
        ++n_planted;
      } else {
        other += c;
        ++n_other;
      }
    }
  }
  planted /= n_planted;
  other /= n_other;
  EXPECT_GE(planted - other, 0.2) << planted << " vs " << other;
}

TEST(SgnsGradient, MatchesCentralDifferences) {
  const auto r = testing::check_sgns_gradient(31, 20, 1e-4);
  EXPECT_GE(r.probes, 100);
  EXPECT_EQ(r.failures, 0) << "worst relative error " << r.worst;
}

TEST(SgnsGradient, LossValue) {
  // h = (1, 0), positive u0 = (2, 0), negative u1 = (0, 3): -log s(2) - log s(0).
  const std::vector<double> h{1, 0}, u0{2, 0}, u1{0, 3};
  const std::vector<const double*> outs{u0.data(), u1.data()};
  std::vector<double> gh(2), g0(2), g1(2);
  const std::vector<double*> gouts{g0.data(), g1.data()};
  const double loss = detail::sgns_loss_and_grad<double>(h, outs, gh, gouts);
  EXPECT_NEAR(loss, std::log1p(std::exp(-2.0)) + std::log(2.0), 1e-12);
}

TEST(Embeddings, SaveLoadRoundTrip) {
  testing::TempDir dir;
  const std::vector<Sentence> corpus(50, Sentence{"wrap", "salad"});
  TrainConfig cfg;
  cfg.dim = 6;
  auto m = train_embedder(corpus, {3, 5, 1024}, cfg).model;
  save_embeddings(m, dir / "e.bin");
  const auto back = load_embeddings(dir / "e.bin");
  EXPECT_EQ(back.dim, m.dim);
  EXPECT_EQ(back.input_matrix, m.input_matrix);
  EXPECT_EQ(back.vocab.size(), m.vocab.size());
  EXPECT_EQ(back.ngram_config.buckets, 1024u);
  EXPECT_EQ(word_vector(back, "wrap"), word_vector(m, "wrap"));

  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "NOPE";
  }
  EXPECT_THROW(load_embeddings(dir / "bad.bin"), FormatError);
  std::filesystem::resize_file(dir / "e.bin", std::filesystem::file_size(dir / "e.bin") / 2);
  EXPECT_THROW(load_embeddings(dir / "e.bin"), FormatError);
}

}  // namespace
}  // namespace kiosk::embed
