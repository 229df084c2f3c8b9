#include "kiosk/embedder.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "binary_io.hpp"
#include "kiosk/error.hpp"
#include "kiosk/rng.hpp"

namespace kiosk::embed {

namespace {

constexpr char kMagic[] = "FTVE";
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

std::vector<std::uint32_t> EmbeddingModel::rows_for(std::string_view word) const {
  std::vector<std::uint32_t> out;
  const auto v = static_cast<std::uint32_t>(vocab.size());
  if (auto idx = vocab.index(word)) out.push_back(*idx);
  for (const auto& g : text::ngrams(word, ngram_config)) {
    out.push_back(v + text::hash_ngram(g, ngram_config.buckets));
  }
  return out;
}

std::vector<Sentence> build_corpus(const corpus::OrderLog& log) {
  std::vector<Sentence> sentences;
  sentences.reserve(log.size());
  for (const auto& order : log.orders) {
    std::vector<const OrderLine*> lines;
    for (const auto& l : order.lines) lines.push_back(&l);
    std::sort(lines.begin(), lines.end(),
              [](const OrderLine* a, const OrderLine* b) { return a->dish_id < b->dish_id; });
    Sentence s;
    for (const OrderLine* l : lines) {
      const auto tokens = text::normalize(l->name);
      for (int q = 0; q < l->qty; ++q) s.insert(s.end(), tokens.begin(), tokens.end());
    }
    sentences.push_back(std::move(s));
  }
  return sentences;
}

TrainResult train_embedder(std::span<const Sentence> corpus, const text::NgramConfig& ngram_config,
                           const TrainConfig& config) {
  if (config.dim < 2) throw InvalidArgument("embedding dim must be >= 2");
  if (config.epochs < 1 || !(config.learning_rate > 0) || config.negatives < 1 ||
      config.window_size < 1) {
    throw InvalidArgument("invalid embedder training config");
  }
  if (ngram_config.n_min < 1 || ngram_config.n_max < ngram_config.n_min ||
      ngram_config.buckets < 1) {
    throw InvalidArgument("invalid n-gram config");
  }
  const bool trainable = std::any_of(corpus.begin(), corpus.end(),
                                     [](const Sentence& s) { return s.size() >= 2; });
  if (!trainable) throw EmptyCorpus();

  TrainResult result;
  EmbeddingModel& model = result.model;
  model.dim = config.dim;
  model.ngram_config = ngram_config;
  model.vocab = text::Vocab::build(corpus, 1);
  const std::size_t dim = config.dim;
  const std::size_t vocab_size = model.vocab.size();

  Rng rng(config.seed);
  model.input_matrix.resize(model.rows() * dim);
  const double bound = 1.0 / (2.0 * static_cast<double>(dim));
  for (auto& x : model.input_matrix) x = static_cast<float>(rng.uniform(-bound, bound));
  std::vector<float> output(vocab_size * dim, 0.0f);

  std::vector<std::vector<std::uint32_t>> subwords(vocab_size);
  for (std::uint32_t w = 0; w < vocab_size; ++w) subwords[w] = model.rows_for(model.vocab.word(w));

  std::vector<std::vector<std::uint32_t>> encoded;
  std::size_t total_tokens = 0;
  for (const auto& s : corpus) {
    if (s.size() < 2) continue;
    std::vector<std::uint32_t> ids;
    ids.reserve(s.size());
    for (const auto& w : s) ids.push_back(*model.vocab.index(w));
    total_tokens += ids.size();
    encoded.push_back(std::move(ids));
  }

  // Unigram^(3/4) sampling table as a cumulative distribution.
  std::vector<double> cumulative(vocab_size);
  double mass = 0.0;
  for (std::uint32_t w = 0; w < vocab_size; ++w) {
    mass += std::pow(static_cast<double>(model.vocab.count(w)), 0.75);
    cumulative[w] = mass;
  }
  auto draw_negative = [&](std::uint32_t avoid) {
    std::uint32_t w = avoid;
    for (int attempt = 0; attempt < 16 && w == avoid; ++attempt) {
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), rng.uniform() * mass);
      w = static_cast<std::uint32_t>(std::min<std::ptrdiff_t>(
          it - cumulative.begin(), static_cast<std::ptrdiff_t>(vocab_size) - 1));
    }
    return w;
  };

  const auto n_outputs = static_cast<std::size_t>(config.negatives) + 1;
  std::vector<float> hidden(dim), grad_hidden(dim), grad_buffer(n_outputs * dim);
  std::vector<const float*> out_rows(n_outputs);
  std::vector<float*> out_rows_mut(n_outputs);
  std::vector<float*> grad_rows(n_outputs);
  for (std::size_t i = 0; i < n_outputs; ++i) grad_rows[i] = grad_buffer.data() + i * dim;

  const double total_work = static_cast<double>(total_tokens) * config.epochs;
  std::size_t processed = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t pairs = 0;
    for (const auto& sentence : encoded) {
      const auto len = static_cast<std::ptrdiff_t>(sentence.size());
      for (std::ptrdiff_t i = 0; i < len; ++i) {
        const float lr =
            static_cast<float>(config.learning_rate * (1.0 - static_cast<double>(processed) / total_work));
        ++processed;
        const auto& rows = subwords[sentence[i]];
        const float inv = 1.0f / static_cast<float>(rows.size());
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - config.window_size);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len - 1, i + config.window_size);
        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          std::fill(hidden.begin(), hidden.end(), 0.0f);
          for (auto r : rows) {
            const float* src = model.input_matrix.data() + static_cast<std::size_t>(r) * dim;
            for (std::size_t d = 0; d < dim; ++d) hidden[d] += src[d];
          }
          for (auto& h : hidden) h *= inv;

          const std::uint32_t target = sentence[j];
          for (std::size_t k = 0; k < n_outputs; ++k) {
            const std::uint32_t w = k == 0 ? target : draw_negative(target);
            out_rows_mut[k] = output.data() + static_cast<std::size_t>(w) * dim;
            out_rows[k] = out_rows_mut[k];
          }
          loss_sum += detail::sgns_loss_and_grad<float>(hidden, out_rows, grad_hidden, grad_rows);
          ++pairs;

          for (std::size_t k = 0; k < n_outputs; ++k) {
            float* u = out_rows_mut[k];
            const float* g = grad_rows[k];
            for (std::size_t d = 0; d < dim; ++d) u[d] -= lr * g[d];
          }
          // Every composing row receives the full hidden-layer gradient.
          for (auto r : rows) {
            float* dst = model.input_matrix.data() + static_cast<std::size_t>(r) * dim;
            for (std::size_t d = 0; d < dim; ++d) dst[d] -= lr * grad_hidden[d];
          }
        }
      }
    }
    result.epoch_loss.push_back(pairs ? loss_sum / static_cast<double>(pairs) : 0.0);
  }
  return result;
}

std::vector<float> word_vector(const EmbeddingModel& model, std::string_view word) {
  if (word.empty()) throw InvalidArgument("word_vector needs a non-empty word");
  const auto rows = model.rows_for(word);
  std::vector<float> v(model.dim, 0.0f);
  for (auto r : rows) {
    const auto src = model.row(r);
    for (std::size_t d = 0; d < model.dim; ++d) v[d] += src[d];
  }
  const float inv = 1.0f / static_cast<float>(rows.size());
  for (auto& x : v) x *= inv;
  return v;
}

std::vector<float> cart_vector(const EmbeddingModel& model, std::span<const CartEntry> cart) {
  std::vector<double> acc(model.dim, 0.0);
  std::int64_t weight = 0;
  for (const auto& entry : cart) {
    if (entry.qty < 1) throw InvalidArgument("cart quantities must be positive");
    for (const auto& tok : text::normalize(entry.name)) {
      const auto wv = word_vector(model, tok);
      for (std::size_t d = 0; d < model.dim; ++d) acc[d] += static_cast<double>(entry.qty) * wv[d];
      weight += entry.qty;
    }
  }
  if (weight == 0) throw EmptyCart();
  std::vector<float> v(model.dim);
  for (std::size_t d = 0; d < model.dim; ++d) {
    v[d] = static_cast<float>(acc[d] / static_cast<double>(weight));
  }
  return v;
}

std::vector<float> name_vector(const EmbeddingModel& model, std::string_view name) {
  const CartEntry entry{std::string(name), 1};
  return cart_vector(model, std::span(&entry, 1));
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimMismatch(a.size(), b.size());
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

void save_embeddings(const EmbeddingModel& model, const std::filesystem::path& path) {
  io::Writer w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kFormatVersion);
  w.u32(model.dim);
  w.u32(static_cast<std::uint32_t>(model.vocab.size()));
  w.u32(model.ngram_config.buckets);
  w.u32(static_cast<std::uint32_t>(model.ngram_config.n_min));
  w.u32(static_cast<std::uint32_t>(model.ngram_config.n_max));
  for (std::uint32_t i = 0; i < model.vocab.size(); ++i) {
    w.str(model.vocab.word(i));
    w.u64(model.vocab.count(i));
  }
  for (float x : model.input_matrix) w.f32(x);
  w.write_file(path);
}

EmbeddingModel load_embeddings(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  if (r.raw(4) != std::string_view(kMagic, 4)) r.fail("bad magic");
  if (r.u32() != kFormatVersion) r.fail("unsupported format version");
  EmbeddingModel m;
  m.dim = r.u32();
  const std::uint32_t vocab_size = r.u32();
  m.ngram_config.buckets = r.u32();
  m.ngram_config.n_min = static_cast<int>(r.u32());
  m.ngram_config.n_max = static_cast<int>(r.u32());
  if (m.dim < 2 || m.ngram_config.buckets < 1 || m.ngram_config.n_min < 1 ||
      m.ngram_config.n_max < m.ngram_config.n_min) {
    r.fail("invalid header");
  }
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  entries.reserve(vocab_size);
  for (std::uint32_t i = 0; i < vocab_size; ++i) {
    std::string word = r.str();
    const std::uint64_t count = r.u64();
    entries.emplace_back(std::move(word), count);
  }
  m.vocab = text::Vocab::from_entries(std::move(entries));
  if (m.vocab.size() != vocab_size) r.fail("duplicate vocabulary entries");
  const std::size_t n = m.rows() * m.dim;
  if (r.remaining() != n * 4) r.fail("matrix size does not match header");
  m.input_matrix.resize(n);
  for (auto& x : m.input_matrix) {
    x = r.f32();
    if (!std::isfinite(x)) r.fail("non-finite matrix entry");
  }
  return m;
}

}  // namespace kiosk::embed
