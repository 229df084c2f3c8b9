#include "kiosk/text.hpp"

#include <algorithm>

namespace kiosk::text {

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t len;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      out.push_back(char32_t{0xFFFD});
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(char32_t{0xFFFD});
      break;
    }
    bool ok = true;
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(char32_t{0xFFFD});
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

namespace {

bool in(char32_t c, char32_t lo, char32_t hi) { return c >= lo && c <= hi; }

char32_t to_lower(char32_t c) {
  if (in(c, U'A', U'Z')) return c + 32;
  if (c < 0x80) return c;
  if (in(c, 0xC0, 0xDE) && c != 0xD7) return c + 32;
  if (in(c, 0x100, 0x137) || in(c, 0x14A, 0x177)) return (c % 2 == 0) ? c + 1 : c;
  if (in(c, 0x139, 0x148) || in(c, 0x179, 0x17E)) return (c % 2 == 1) ? c + 1 : c;
  if (c == 0x178) return 0xFF;
  // Greek
  if (in(c, 0x391, 0x3A9) && c != 0x3A2) return c + 32;
  if (c == 0x386) return 0x3AC;
  if (in(c, 0x388, 0x38A)) return c + 37;
  if (c == 0x38C) return 0x3CC;
  if (c == 0x38E || c == 0x38F) return c + 63;
  // Cyrillic
  if (in(c, 0x400, 0x40F)) return c + 80;
  if (in(c, 0x410, 0x42F)) return c + 32;
  if (in(c, 0x460, 0x481) || in(c, 0x48A, 0x4BF) || in(c, 0x4D0, 0x4FF)) {
    return (c % 2 == 0) ? c + 1 : c;
  }
  if (in(c, 0x4C1, 0x4CE)) return (c % 2 == 1) ? c + 1 : c;
  if (in(c, 0x1E00, 0x1EFF)) return (c % 2 == 0) ? c + 1 : c;
  return c;
}

// Anything that is not a letter or digit splits tokens.
bool is_separator(char32_t c) {
  if (c < 0x80) {
    return !(in(c, U'a', U'z') || in(c, U'A', U'Z') || in(c, U'0', U'9'));
  }
  return in(c, 0x80, 0xBF) || c == 0xD7 || c == 0xF7 || in(c, 0x2000, 0x206F) ||
         in(c, 0x20A0, 0x20CF) || in(c, 0x2190, 0x23FF) || in(c, 0x2500, 0x27BF) ||
         in(c, 0x3000, 0x303F) || in(c, 0xFF01, 0xFF0F) || in(c, 0xFF1A, 0xFF20) ||
         in(c, 0xFF3B, 0xFF40) || in(c, 0xFF5B, 0xFF65) || c == 0xFEFF ||
         c == 0xFFFD;
}

}  // namespace

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> tokens;
  std::u32string current;
  for (char32_t c : decode_utf8(text)) {
    if (is_separator(c)) {
      if (!current.empty()) {
        tokens.push_back(encode_utf8(current));
        current.clear();
      }
    } else {
      current.push_back(to_lower(c));
    }
  }
  if (!current.empty()) tokens.push_back(encode_utf8(current));
  return tokens;
}

std::string normalized_name(std::string_view text) {
  std::string out;
  for (const auto& tok : normalize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::vector<std::string> ngrams(std::string_view word, const NgramConfig& config) {
  std::u32string bounded = U"<";
  bounded += decode_utf8(word);
  bounded += U'>';
  std::vector<std::string> grams;
  const auto len = static_cast<int>(bounded.size());
  for (int n = config.n_min; n <= config.n_max && n <= len; ++n) {
    for (int start = 0; start + n <= len; ++start) {
      grams.push_back(encode_utf8(std::u32string_view(bounded).substr(start, n)));
    }
  }
  return grams;
}

std::uint32_t fnv1a(std::string_view bytes) {
  std::uint32_t h = 2166136261u;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 16777619u;
  }
  return h;
}

Vocab Vocab::build(std::span<const std::vector<std::string>> sentences,
                   std::uint64_t min_count) {
  std::map<std::string, std::uint64_t, std::less<>> counts;
  for (const auto& sentence : sentences) {
    for (const auto& w : sentence) ++counts[w];
  }
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  for (auto& [w, n] : counts) {
    if (n >= min_count) entries.emplace_back(w, n);
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v = from_entries(std::move(entries));
  v.min_count_ = min_count;
  return v;
}

Vocab Vocab::from_entries(std::vector<std::pair<std::string, std::uint64_t>> entries) {
  Vocab v;
  for (auto& [w, n] : entries) {
    v.index_.emplace(w, static_cast<std::uint32_t>(v.words_.size()));
    v.words_.push_back(std::move(w));
    v.counts_.push_back(n);
  }
  if (!v.counts_.empty()) {
    v.min_count_ = *std::min_element(v.counts_.begin(), v.counts_.end());
  }
  return v;
}

std::optional<std::uint32_t> Vocab::index(std::string_view word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

}  // namespace kiosk::text
