#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fxplain {

enum class SentimentLabel { Positive, Neutral, Negative };

std::string_view to_string(SentimentLabel label) noexcept;
/// Accepts "positive", "neutral", "negative" (case-insensitive).
std::optional<SentimentLabel> parse_label(std::string_view text) noexcept;

/// Splits on whitespace (ASCII and the Unicode space separators), strips
/// leading/trailing non-alphanumeric characters from each piece, lowercases
/// ASCII letters and drops empty pieces. Order and duplicates are kept.
std::vector<std::string> tokenize(std::string_view text);

/// Space-join, the inverse of tokenize for already-normalized tokens.
std::string join_terms(std::span<const std::string> terms);

/// Any text -> 3-way sentiment classifier. Implementations must be safe to
/// call concurrently once constructed.
class SentimentModel {
 public:
  virtual ~SentimentModel() = default;
  virtual SentimentLabel classify(std::string_view text) const = 0;
  /// Stable identifier recorded in provenance.
  virtual std::string id() const = 0;
};

/// Additive valence lexicon with a symmetric neutral band.
class LexiconModel final : public SentimentModel {
 public:
  static constexpr double kDefaultNeutralBand = 0.5;

  LexiconModel() = default;
  /// Keys are normalized through tokenize() and must yield exactly one token.
  /// Throws ConfigError on a negative band or an unusable key.
  explicit LexiconModel(const std::unordered_map<std::string, double>& entries,
                        double neutral_band = kDefaultNeutralBand);

  /// Valence of a token, 0 for unknown tokens.
  double valence(std::string_view token) const;
  double score(std::span<const std::string> tokens) const;
  double neutral_band() const noexcept { return neutral_band_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::unordered_map<std::string, double>& entries() const noexcept { return entries_; }

  SentimentLabel label_for_score(double score) const noexcept;
  SentimentLabel classify(std::string_view text) const override;
  std::string id() const override;
  /// SHA-256 over the sorted entries and the band.
  std::string digest() const;

 private:
  std::unordered_map<std::string, double> entries_;
  double neutral_band_ = kDefaultNeutralBand;
};

double lexicon_score(const LexiconModel& model, std::span<const std::string> tokens);
SentimentLabel classify(const SentimentModel& model, std::string_view text);

/// Lexicon file: UTF-8, `term<TAB>valence` per line, `#` starts a comment.
LexiconModel load_lexicon(const std::string& path, double neutral_band = LexiconModel::kDefaultNeutralBand);

/// Built-in financial news lexicon.
LexiconModel default_lexicon(double neutral_band = LexiconModel::kDefaultNeutralBand);

}  // namespace fxplain
