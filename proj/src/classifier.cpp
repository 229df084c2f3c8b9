#include "kiosk/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "kiosk/error.hpp"
#include "kiosk/rng.hpp"

namespace kiosk::clf {

namespace {

constexpr char kMagic[] = "MLPC";
constexpr std::uint32_t kFormatVersion = 1;

void affine(const DenseLayer& layer, std::span<const double> in, std::span<double> out) {
  for (std::size_t o = 0; o < layer.outputs; ++o) {
    const double* row = layer.weights.data() + o * layer.inputs;
    double z = layer.biases[o];
    for (std::size_t i = 0; i < layer.inputs; ++i) z += row[i] * in[i];
    out[o] = z;
  }
}

void softmax_in_place(std::vector<double>& z) {
  const double max = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& x : z) {
    x = std::exp(x - max);
    sum += x;
  }
  for (auto& x : z) x /= sum;
}

// Activations of every layer for one input; acts[0] is the input and
// acts.back() the logits. Hidden activations are post-ReLU.
void run_layers(const ClassifierModel& model, std::span<const double> input,
                std::vector<std::vector<double>>& acts) {
  const std::size_t n = model.layers.size();
  acts.resize(n + 1);
  acts[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = model.layers[l];
    acts[l + 1].resize(layer.outputs);
    affine(layer, acts[l], acts[l + 1]);
    if (l + 1 < n) {
      for (auto& x : acts[l + 1]) x = std::max(0.0, x);
    }
  }
}

void check_input(const ClassifierModel& model, std::size_t size) {
  if (model.layers.empty()) throw InvalidArgument("classifier has no layers");
  if (size != model.input_dim()) throw DimMismatch(model.input_dim(), size);
}

double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

std::vector<std::size_t> ClassifierModel::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().inputs);
  for (const auto& l : layers) d.push_back(l.outputs);
  return d;
}

ClassifierModel make_model(std::span<const std::size_t> dims) {
  if (dims.size() < 2) throw InvalidArgument("a classifier needs at least two layer widths");
  ClassifierModel m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw InvalidArgument("layer widths must be positive");
    m.layers.emplace_back(dims[i], dims[i + 1]);
  }
  return m;
}

std::vector<double> logits(const ClassifierModel& model, std::span<const double> input) {
  check_input(model, input.size());
  std::vector<std::vector<double>> acts;
  run_layers(model, input, acts);
  return std::move(acts.back());
}

std::vector<double> forward(const ClassifierModel& model, std::span<const double> input) {
  auto z = logits(model, input);
  softmax_in_place(z);
  return z;
}

std::vector<double> forward(const ClassifierModel& model, std::span<const float> input) {
  std::vector<double> x(input.begin(), input.end());
  return forward(model, x);
}

double cross_entropy(std::span<const double> probabilities, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= probabilities.size()) {
    throw TargetOutOfRange("target " + std::to_string(target) + " outside [0, " +
                           std::to_string(probabilities.size()) + ")");
  }
  return -std::log(std::max(probabilities[static_cast<std::size_t>(target)], kProbabilityFloor));
}

namespace detail {

double loss_and_gradient(const ClassifierModel& model, std::span<const Example> batch,
                         std::vector<DenseLayer>& gradient) {
  const std::size_t n_layers = model.layers.size();
  gradient.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = model.layers[l];
    if (gradient[l].inputs != layer.inputs || gradient[l].outputs != layer.outputs) {
      gradient[l] = DenseLayer(layer.inputs, layer.outputs);
    } else {
      std::fill(gradient[l].weights.begin(), gradient[l].weights.end(), 0.0);
      std::fill(gradient[l].biases.begin(), gradient[l].biases.end(), 0.0);
    }
  }
  if (batch.empty()) return 0.0;

  std::vector<std::vector<double>> acts;
  std::vector<double> delta, prev_delta;
  double loss = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    check_input(model, ex.input.size());
    run_layers(model, ex.input, acts);
    std::vector<double>& probs = acts.back();
    softmax_in_place(probs);
    loss += cross_entropy(probs, ex.target);

    // dL/dz of the softmax + cross-entropy head.
    delta = probs;
    delta[static_cast<std::size_t>(ex.target)] -= 1.0;
    for (std::size_t l = n_layers; l-- > 0;) {
      const auto& layer = model.layers[l];
      auto& g = gradient[l];
      const auto& below = acts[l];
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double d = delta[o] * scale;
        g.biases[o] += d;
        double* grow = g.weights.data() + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) grow[i] += d * below[i];
      }
      if (l == 0) break;
      prev_delta.assign(layer.inputs, 0.0);
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double* row = layer.weights.data() + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) prev_delta[i] += row[i] * delta[o];
      }
      // ReLU derivative, using the post-activation value of layer l-1.
      for (std::size_t i = 0; i < layer.inputs; ++i) {
        if (below[i] <= 0.0) prev_delta[i] = 0.0;
      }
      std::swap(delta, prev_delta);
    }
  }
  return loss * scale;
}

}  // namespace detail

FitResult fit(std::span<const TrainSample> samples, std::span<const std::size_t> dims,
              const FitConfig& config) {
  if (config.epochs < 1 || config.batch_size < 1 || !(config.test_fraction >= 0.0) ||
      !(config.test_fraction < 1.0)) {
    throw InvalidArgument("invalid fit config");
  }
  if (samples.size() < 10) throw TooFewSamples(samples.size());
  FitResult result;
  result.model = make_model(dims);
  ClassifierModel& model = result.model;
  const std::size_t d_in = dims.front();
  const auto k = static_cast<int>(dims.back());

  std::vector<double> inputs(samples.size() * d_in);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& sample = samples[s];
    if (sample.input.size() != d_in) throw DimMismatch(d_in, sample.input.size());
    if (sample.target < 0 || sample.target >= k) {
      throw TargetOutOfRange("sample target " + std::to_string(sample.target));
    }
    std::copy(sample.input.begin(), sample.input.end(), inputs.begin() + s * d_in);
  }
  auto example = [&](std::size_t s) {
    return detail::Example{std::span<const double>(inputs.data() + s * d_in, d_in),
                           samples[s].target};
  };

  Rng rng(config.seed);
  for (auto& layer : model.layers) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(layer.inputs));
    for (auto& w : layer.weights) w = rng.normal() * stddev;
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::floor(config.test_fraction *
                                                          static_cast<double>(samples.size())));
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());

  std::vector<DenseLayer> grad, m1, m2;
  for (const auto& layer : model.layers) {
    m1.emplace_back(layer.inputs, layer.outputs);
    m2.emplace_back(layer.inputs, layer.outputs);
  }
  std::vector<detail::Example> batch;
  std::int64_t step = 0;
  auto adam = [&](std::vector<double>& param, const std::vector<double>& g, std::vector<double>& m,
                  std::vector<double>& v, double c1, double c2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      param[i] -= config.step_size * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.epsilon);
    }
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(train);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
      const std::size_t end = std::min(train.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(example(train[i]));
      loss_sum += detail::loss_and_gradient(model, batch, grad) * static_cast<double>(batch.size());
      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        adam(model.layers[l].weights, grad[l].weights, m1[l].weights, m2[l].weights, c1, c2);
        adam(model.layers[l].biases, grad[l].biases, m1[l].biases, m2[l].biases, c1, c2);
      }
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
    if (!test.empty()) {
      double test_sum = 0.0;
      for (auto s : test) {
        const auto ex = example(s);
        test_sum += cross_entropy(forward(model, ex.input), ex.target);
      }
      result.test_loss.push_back(test_sum / static_cast<double>(test.size()));
    }
  }
  for (auto& layer : model.layers) {
    for (auto& w : layer.weights) w = round_to_float(w);
    for (auto& b : layer.biases) b = round_to_float(b);
  }
  return result;
}

std::vector<std::pair<int, double>> top_k(std::span<const double> probabilities, std::size_t k) {
  if (k < 1 || k > probabilities.size()) {
    throw KOutOfRange("k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(probabilities.size()) + "]");
  }
  std::vector<int> idx(probabilities.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return probabilities[static_cast<std::size_t>(a)] > probabilities[static_cast<std::size_t>(b)];
  });
  std::vector<std::pair<int, double>> out;
  for (std::size_t i = 0; i < k; ++i) {
    out.emplace_back(idx[i], probabilities[static_cast<std::size_t>(idx[i])]);
  }
  return out;
}

std::vector<std::pair<int, double>> top_k(const ClassifierModel& model,
                                          std::span<const float> input, std::size_t k) {
  check_input(model, input.size());
  if (k < 1 || k > model.classes()) {
    throw KOutOfRange("k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(model.classes()) + "]");
  }
  const auto p = forward(model, input);
  return top_k(p, k);
}

void save_classifier(const ClassifierModel& model, const std::filesystem::path& path) {
  io::Writer w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    w.u32(static_cast<std::uint32_t>(layer.outputs));
    w.u32(static_cast<std::uint32_t>(layer.inputs));
    for (double x : layer.weights) w.f32(static_cast<float>(x));
    for (double x : layer.biases) w.f32(static_cast<float>(x));
  }
  for (const auto& id : model.label_map) w.str(id);
  w.write_file(path);
}

ClassifierModel load_classifier(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  if (r.raw(4) != std::string_view(kMagic, 4)) r.fail("bad magic");
  if (r.u32() != kFormatVersion) r.fail("unsupported format version");
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 64) r.fail("invalid layer count");
  ClassifierModel m;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) r.fail("empty layer");
    if (!m.layers.empty() && m.layers.back().outputs != cols) r.fail("layer widths do not chain");
    if (r.remaining() / 4 < static_cast<std::size_t>(rows) * (cols + 1)) r.fail("truncated file");
    DenseLayer layer(cols, rows);
    for (auto& x : layer.weights) x = r.f32();
    for (auto& x : layer.biases) x = r.f32();
    for (double x : layer.weights) {
      if (!std::isfinite(x)) r.fail("non-finite weight");
    }
    for (double x : layer.biases) {
      if (!std::isfinite(x)) r.fail("non-finite bias");
    }
    m.layers.push_back(std::move(layer));
  }
  for (std::size_t c = 0; c < m.classes(); ++c) m.label_map.push_back(r.str());
  if (!r.at_end()) r.fail("trailing bytes");
  return m;
}

}  // namespace kiosk::clf
