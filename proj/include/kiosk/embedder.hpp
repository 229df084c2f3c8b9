#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kiosk/corpus.hpp"
#include "kiosk/domain.hpp"
#include "kiosk/text.hpp"

namespace kiosk::embed {

using Sentence = std::vector<std::string>;

struct TrainConfig {
  std::uint32_t dim = 100;
  int epochs = 5;
  double learning_rate = 0.05;  // decays linearly to 0 over all epochs
  int window_size = 5;
  int negatives = 5;
  std::uint64_t seed = 1;
};

/// Subword embedding table. Rows [0, |vocab|) are word rows; row
/// |vocab| + b is hash bucket b.
struct EmbeddingModel {
  std::uint32_t dim = 0;
  text::Vocab vocab;
  text::NgramConfig ngram_config;
  std::vector<float> input_matrix;
  Timestamp trained_at;
  Window corpus_window;

  std::size_t rows() const { return vocab.size() + ngram_config.buckets; }
  std::span<const float> row(std::size_t r) const {
    return {input_matrix.data() + r * dim, dim};
  }
  /// Word row (when in vocabulary) followed by one bucket row per n-gram.
  std::vector<std::uint32_t> rows_for(std::string_view word) const;
};

/// One token sentence per order: each line's normalized name tokens
/// repeated qty times, lines visited in dish_id order.
std::vector<Sentence> build_corpus(const corpus::OrderLog& log);

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> epoch_loss;  // mean negative-sampling objective per pair
};

/// Skip-gram with negative sampling over subword-composed inputs.
/// Single-threaded and deterministic for a fixed seed. Throws EmptyCorpus.
TrainResult train_embedder(std::span<const Sentence> corpus, const text::NgramConfig& ngram_config,
                           const TrainConfig& config);

/// Mean of the word's rows; OOV words use their bucket rows only.
std::vector<float> word_vector(const EmbeddingModel& model, std::string_view word);

struct CartEntry {
  std::string name;
  int qty = 1;
};

/// Mean word vector over all name tokens, each dish's tokens counted qty
/// times. Throws EmptyCart when there is nothing to average.
std::vector<float> cart_vector(const EmbeddingModel& model, std::span<const CartEntry> cart);
/// cart_vector of a single dish name.
std::vector<float> name_vector(const EmbeddingModel& model, std::string_view name);

double cosine(std::span<const float> a, std::span<const float> b);

void save_embeddings(const EmbeddingModel& model, const std::filesystem::path& path);
/// Throws FormatError on a bad magic, version or truncated file.
EmbeddingModel load_embeddings(const std::filesystem::path& path);

namespace detail {

template <typename T>
T log_sigmoid(T x) {
  // -softplus(-x)
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// Objective -log s(u0.h) - sum_{i>0} log s(-ui.h) for one center/context
/// pair, where outputs[0] is the context row and the rest are negatives.
/// Writes dL/dh and dL/du_i; returns L.
template <typename T>
T sgns_loss_and_grad(std::span<const T> hidden, std::span<const T* const> outputs,
                     std::span<T> grad_hidden, std::span<T* const> grad_outputs) {
  const std::size_t dim = hidden.size();
  std::fill(grad_hidden.begin(), grad_hidden.end(), T(0));
  T loss = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const T* u = outputs[i];
    T score = 0;
    for (std::size_t d = 0; d < dim; ++d) score += u[d] * hidden[d];
    const bool positive = i == 0;
    loss -= positive ? log_sigmoid(score) : log_sigmoid(-score);
    const T g = positive ? sigmoid(score) - T(1) : sigmoid(score);
    T* gu = grad_outputs[i];
    for (std::size_t d = 0; d < dim; ++d) {
      grad_hidden[d] += g * u[d];
      gu[d] = g * hidden[d];
    }
  }
  return loss;
}

}  // namespace detail

}  // namespace kiosk::embed
