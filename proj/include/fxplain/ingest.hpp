#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fxplain/sentiment.hpp"

namespace fxplain {

using Date = std::chrono::year_month_day;

/// Parses YYYY-MM-DD, ignoring any time-of-day suffix ("T..." or " ...").
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& date);

/// ^[A-Z]{6}$
bool is_pair_code(std::string_view code);

struct NewsItem {
  std::string id;
  Date date;
  std::string pair;
  std::string text;
  std::optional<SentimentLabel> label;
};

struct PriceBar {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  std::optional<double> adj_close;
  std::optional<long long> volume;
};

struct PriceLoad {
  std::vector<PriceBar> bars;  // ascending by date
  std::size_t dropped_rows = 0;  // rows with a null or missing Close
};

/// Yahoo Finance daily export (Date,Open,High,Low,Close[,Adj Close][,Volume]).
/// Throws ParseError with the row number on bad dates or prices, and when no
/// rows remain.
PriceLoad load_prices_csv(const std::string& path);
PriceLoad parse_prices_csv(std::string_view text);
/// Writes bars back in the same layout.
std::string write_prices_csv(std::span<const PriceBar> bars);

/// Header `id,date,pair,text,label`; `id` and `label` are optional columns.
/// Missing ids become the 1-based data row index.
std::vector<NewsItem> load_news_csv(const std::string& path);
std::vector<NewsItem> parse_news_csv(std::string_view text);

struct AlignedDay {
  Date date;
  double close = 0.0;
  std::vector<NewsItem> news;
};

struct Alignment {
  std::vector<AlignedDay> days;
  std::size_t attached = 0;
  std::size_t dropped = 0;  // news dated after the last trading day
};

/// Attaches news to its trading day, rolling weekend/holiday news forward to
/// the next trading day. Prices must be non-empty and ascending.
Alignment align_by_date(std::span<const NewsItem> news, std::span<const PriceBar> prices);

struct PriceStats {
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
  double stdev = 0.0;  // sample (n-1); 0 for a single value
};

/// Throws std::invalid_argument on an empty list.
PriceStats price_stats(std::span<const double> closes);

}  // namespace fxplain
