#include "fxplain/sentiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "fxplain/errors.hpp"
#include "fxplain/hashing.hpp"

namespace fxplain {

namespace {

struct CodePoint {
  char32_t value;
  std::size_t length;
};

// Invalid sequences decode as a single byte so tokenization never throws.
CodePoint decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1F) << 6) | c1), 2};
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) return {static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2), 3};
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0)
      return {static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3), 4};
  }
  return {b0, 1};
}

bool is_space(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

// Non-ASCII code points count as alphanumeric except the punctuation that
// commonly wraps words in news copy (smart quotes, dashes, ellipsis, ...).
bool is_alnum(char32_t c) {
  if (c < 0x80) {
    return (c >= U'0' && c <= U'9') || (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
  }
  if (c >= 0x2010 && c <= 0x2027) return false;
  if (c >= 0x2030 && c <= 0x205E) return false;
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
    case 0x3001: case 0x3002: case 0xFF01: case 0xFF0C: case 0xFF1F:
      return false;
    default:
      return true;
  }
}

std::string normalize_piece(std::string_view piece) {
  std::size_t begin = 0;
  std::size_t end = piece.size();
  while (begin < end) {
    const auto cp = decode_utf8(piece, begin);
    if (is_alnum(cp.value)) break;
    begin += cp.length;
  }
  // Walk forward to find the last alnum code point boundary.
  std::size_t last_end = begin;
  for (std::size_t i = begin; i < end;) {
    const auto cp = decode_utf8(piece, i);
    i += cp.length;
    if (is_alnum(cp.value)) last_end = i;
  }
  std::string out(piece.substr(begin, last_end - begin));
  for (char& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(SentimentLabel label) noexcept {
  switch (label) {
    case SentimentLabel::Positive: return "positive";
    case SentimentLabel::Neutral: return "neutral";
    case SentimentLabel::Negative: return "negative";
  }
  return "neutral";
}

std::optional<SentimentLabel> parse_label(std::string_view text) noexcept {
  std::string lower(text);
  for (char& ch : lower) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  if (lower == "positive") return SentimentLabel::Positive;
  if (lower == "neutral") return SentimentLabel::Neutral;
  if (lower == "negative") return SentimentLabel::Negative;
  return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  std::size_t piece_begin = std::string_view::npos;
  auto flush = [&](std::size_t piece_end) {
    if (piece_begin == std::string_view::npos) return;
    auto token = normalize_piece(text.substr(piece_begin, piece_end - piece_begin));
    if (!token.empty()) tokens.push_back(std::move(token));
    piece_begin = std::string_view::npos;
  };
  while (i < text.size()) {
    const auto cp = decode_utf8(text, i);
    if (is_space(cp.value)) {
      flush(i);
    } else if (piece_begin == std::string_view::npos) {
      piece_begin = i;
    }
    i += cp.length;
  }
  flush(text.size());
  return tokens;
}

std::string join_terms(std::span<const std::string> terms) {
  std::string out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) out.push_back(' ');
    out += terms[i];
  }
  return out;
}

LexiconModel::LexiconModel(const std::unordered_map<std::string, double>& entries, double neutral_band)
    : neutral_band_(neutral_band) {
  if (!(neutral_band >= 0.0)) throw ConfigError("neutral band must be >= 0");
  for (const auto& [term, valence] : entries) {
    const auto tokens = tokenize(term);
    if (tokens.size() != 1) throw ConfigError("lexicon term '" + term + "' is not a single token");
    entries_[tokens.front()] = valence;
  }
}

double LexiconModel::valence(std::string_view token) const {
  const auto it = entries_.find(std::string(token));
  return it == entries_.end() ? 0.0 : it->second;
}

double LexiconModel::score(std::span<const std::string> tokens) const {
  double total = 0.0;
  for (const auto& t : tokens) total += valence(t);
  return total;
}

SentimentLabel LexiconModel::label_for_score(double score) const noexcept {
  if (score > neutral_band_) return SentimentLabel::Positive;
  if (score < -neutral_band_) return SentimentLabel::Negative;
  return SentimentLabel::Neutral;
}

SentimentLabel LexiconModel::classify(std::string_view text) const {
  return label_for_score(score(tokenize(text)));
}

std::string LexiconModel::digest() const {
  const std::map<std::string, double> sorted(entries_.begin(), entries_.end());
  std::string payload = "band\t" + format_double(neutral_band_) + "\n";
  for (const auto& [term, valence] : sorted) payload += term + "\t" + format_double(valence) + "\n";
  return sha256_hex(payload);
}

std::string LexiconModel::id() const { return "lexicon:" + digest().substr(0, 12); }

double lexicon_score(const LexiconModel& model, std::span<const std::string> tokens) {
  return model.score(tokens);
}

SentimentLabel classify(const SentimentModel& model, std::string_view text) {
  return model.classify(text);
}

LexiconModel load_lexicon(const std::string& path, double neutral_band) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon file " + path);
  std::unordered_map<std::string, double> entries;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("lexicon line lacks a TAB separator", row);
    const std::string term = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    double valence = 0.0;
    try {
      std::size_t used = 0;
      valence = std::stod(value, &used);
      if (value.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ParseError("non-numeric valence '" + value + "'", row);
    }
    const auto tokens = tokenize(term);
    if (tokens.size() != 1) throw ParseError("lexicon term '" + term + "' is not a single token", row);
    entries[tokens.front()] = valence;
  }
  return LexiconModel(entries, neutral_band);
}

}  // namespace fxplain
