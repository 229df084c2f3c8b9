#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kiosk/domain.hpp"

namespace kiosk::clf {

/// Affine map with weights stored outputs x inputs, row-major.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out)
      : inputs(in), outputs(out), weights(in * out, 0.0), biases(out, 0.0) {}
  double& w(std::size_t o, std::size_t i) { return weights[o * inputs + i]; }
  double w(std::size_t o, std::size_t i) const { return weights[o * inputs + i]; }
};

/// ReLU between layers, softmax after the last one.
struct ClassifierModel {
  std::vector<DenseLayer> layers;
  std::vector<std::string> label_map;  // class index -> dish id
  Timestamp trained_at;
  Window train_window;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().inputs; }
  std::size_t classes() const { return layers.empty() ? 0 : layers.back().outputs; }
  std::vector<std::size_t> dims() const;
};

/// All-zero network with the given layer widths [d_in, h1, ..., K].
ClassifierModel make_model(std::span<const std::size_t> dims);

struct TrainSample {
  std::vector<float> input;
  int target = 0;
};

struct FitConfig {
  int epochs = 10;
  std::size_t batch_size = 256;
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  double test_fraction = 0.1;
};

struct FitResult {
  ClassifierModel model;
  std::vector<double> train_loss;  // mean per epoch
  std::vector<double> test_loss;   // empty when there is no test split
};

/// Class probabilities. Throws DimMismatch.
std::vector<double> forward(const ClassifierModel& model, std::span<const double> input);
std::vector<double> forward(const ClassifierModel& model, std::span<const float> input);
/// Pre-softmax scores.
std::vector<double> logits(const ClassifierModel& model, std::span<const double> input);

inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(max(p[target], 1e-12)). Throws TargetOutOfRange.
double cross_entropy(std::span<const double> probabilities, int target);

/// He-initialized, Adam-trained on mini-batches; deterministic for a fixed
/// seed. Parameters are rounded to float precision on return so the model
/// equals its serialized form. Throws TooFewSamples, DimMismatch,
/// TargetOutOfRange.
FitResult fit(std::span<const TrainSample> samples, std::span<const std::size_t> dims,
              const FitConfig& config);

/// Highest-probability classes, ties by lower index. Throws DimMismatch,
/// KOutOfRange.
std::vector<std::pair<int, double>> top_k(const ClassifierModel& model,
                                          std::span<const float> input, std::size_t k);
std::vector<std::pair<int, double>> top_k(std::span<const double> probabilities, std::size_t k);

void save_classifier(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_classifier(const std::filesystem::path& path);

namespace detail {

struct Example {
  std::span<const double> input;
  int target;
};

/// Mean cross-entropy over the batch; `gradient` receives its gradient with
/// the same layer shapes as the model.
double loss_and_gradient(const ClassifierModel& model, std::span<const Example> batch,
                         std::vector<DenseLayer>& gradient);

}  // namespace detail

}  // namespace kiosk::clf
