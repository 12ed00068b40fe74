#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fxplain/explain.hpp"
#include "fxplain/ingest.hpp"
#include "fxplain/sentiment.hpp"

namespace fxplain {

/// Term -> fixed-length vector. Deterministic per term; safe for concurrent use.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> embed(std::string_view term) const = 0;
  virtual std::string id() const = 0;
};

/// Unit-norm pseudo-random vectors seeded by SHA-256(seed, term). Stable across
/// platforms and process restarts.
class HashEmbedding final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDimension = 64;

  explicit HashEmbedding(std::size_t dimension = kDefaultDimension, std::uint64_t seed = 0);
  std::size_t dimension() const override { return dimension_; }
  std::vector<double> embed(std::string_view term) const override;
  std::string id() const override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

struct SentimentFractions {
  double positive = 0.0;
  double neutral = 0.0;
  double negative = 0.0;
};

/// Per-label share of the day's news; all zero for a day without news.
SentimentFractions sentiment_fractions(std::span<const SentimentLabel> day_news);

/// Flat mean over every term of every sufficient explanation of the day.
/// Days without such terms get the zero vector.
std::vector<double> daily_embedding_average(const EmbeddingProvider& provider,
                                            std::span<const Explanation> day_explanations);

struct DailyFeatures {
  Date date;
  double close = 0.0;
  double pct_pos = 0.0;
  double pct_neu = 0.0;
  double pct_neg = 0.0;
  std::vector<double> term_embedding;
};

enum class Variant { Baseline, Sentiments, SentimentsExplanations };

std::string_view to_string(Variant variant) noexcept;
/// Accepts "baseline", "sentiments", "explanations" and
/// "sentiments+explanations".
std::optional<Variant> parse_variant(std::string_view text) noexcept;
/// Features per day fed to the model: 1, 4 or 4 + D.
std::size_t input_dimension(Variant variant, std::size_t embedding_dimension) noexcept;

inline constexpr std::size_t kLookback = 5;

struct Window {
  /// kLookback rows, one projected feature vector per day (close first).
  std::vector<std::vector<double>> inputs;
  double target = 0.0;      // next day's close
  double last_close = 0.0;  // close of the final input day
  std::array<Date, kLookback + 1> dates{};
};

/// One window per start position; fewer than kLookback + 1 days yields none.
std::vector<Window> build_windows(std::span<const DailyFeatures> days, Variant variant);

/// Per-feature z-score statistics. Feature 0 is the close, and the target
/// shares its statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stdev;  // 1.0 for (near-)constant features: centered only

  double apply(std::size_t feature, double value) const { return (value - mean[feature]) / stdev[feature]; }
  double invert(std::size_t feature, double z) const { return z * stdev[feature] + mean[feature]; }
  double apply_target(double close) const { return apply(0, close); }
  double invert_target(double z) const { return invert(0, z); }
};

/// Statistics over every input day of every training window. Throws
/// std::invalid_argument when empty.
NormStats fit_normalizer(std::span<const Window> train_windows);
Window apply(const NormStats& stats, const Window& window);
Window invert(const NormStats& stats, const Window& normalized);

/// Assembles DailyFeatures for aligned days. `labels` and `explanations` are
/// looked up by news id; news without an entry contributes nothing.
struct DayInputs {
  const AlignedDay* day;
  std::vector<SentimentLabel> labels;
  std::vector<Explanation> explanations;
};
DailyFeatures make_daily_features(const DayInputs& inputs, const EmbeddingProvider& provider);

/// CSV: date, close, pct_pos, pct_neu, pct_neg, e_0..e_{D-1}.
std::string features_to_csv(std::span<const DailyFeatures> days);

}  // namespace fxplain
