#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kiosk::text {

std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

/// Lowercases, turns punctuation into separators and splits on whitespace.
/// Lowercasing covers Latin, Greek and Cyrillic letters.
std::vector<std::string> normalize(std::string_view text);

/// normalize() joined by single spaces.
std::string normalized_name(std::string_view text);

struct NgramConfig {
  int n_min = 3;
  int n_max = 6;
  std::uint32_t buckets = 1u << 16;
};

/// Character n-grams of "<word>", shortest first, left to right.
std::vector<std::string> ngrams(std::string_view word, const NgramConfig& config);

/// 32-bit FNV-1a of the UTF-8 bytes, reduced modulo buckets.
std::uint32_t fnv1a(std::string_view bytes);
inline std::uint32_t hash_ngram(std::string_view gram, std::uint32_t buckets) {
  return fnv1a(gram) % buckets;
}

/// Word table with dense indices. Words are ordered by descending count,
/// ties by byte order, so a given corpus always yields the same indices.
class Vocab {
 public:
  Vocab() = default;

  static Vocab build(std::span<const std::vector<std::string>> sentences,
                     std::uint64_t min_count = 1);
  /// Rebuilds from a stored table (order preserved).
  static Vocab from_entries(std::vector<std::pair<std::string, std::uint64_t>> entries);

  std::optional<std::uint32_t> index(std::string_view word) const;
  const std::string& word(std::uint32_t i) const { return words_[i]; }
  std::uint64_t count(std::uint32_t i) const { return counts_[i]; }
  std::size_t size() const { return words_.size(); }
  std::uint64_t min_count() const { return min_count_; }

 private:
  std::vector<std::string> words_;
  std::vector<std::uint64_t> counts_;
  std::map<std::string, std::uint32_t, std::less<>> index_;
  std::uint64_t min_count_ = 1;
};

}  // namespace kiosk::text
