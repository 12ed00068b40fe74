#include "fxplain/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "fxplain/csv.hpp"
#include "fxplain/errors.hpp"

namespace fxplain {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_null(std::string_view s) {
  s = trim(s);
  return s.empty() || lower(s) == "null" || lower(s) == "nan";
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

using ColumnIndex = std::map<std::string, std::size_t>;

ColumnIndex index_header(const csv::Row& header) {
  ColumnIndex index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name = lower(trim(header[i]));
    // A UTF-8 byte order mark sometimes prefixes the first column.
    if (name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
    index.emplace(std::move(name), i);
  }
  return index;
}

std::optional<std::size_t> column(const ColumnIndex& index, const std::string& name) {
  const auto it = index.find(name);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::string_view field(const csv::Row& row, std::optional<std::size_t> col) {
  if (!col || *col >= row.size()) return {};
  return row[*col];
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  text = trim(text);
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  if (text.size() > 10 && text[10] != 'T' && text[10] != ' ') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return ec == std::errc{} && ptr == text.data() + pos + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

bool is_pair_code(std::string_view code) {
  return code.size() == 6 && std::all_of(code.begin(), code.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

PriceLoad parse_prices_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  const auto rows = csv::read(in);
  if (rows.empty()) throw ParseError("price file is empty");
  const auto header = index_header(rows.front());
  const auto c_date = column(header, "date");
  const auto c_open = column(header, "open");
  const auto c_high = column(header, "high");
  const auto c_low = column(header, "low");
  const auto c_close = column(header, "close");
  const auto c_adj = column(header, "adj close");
  const auto c_volume = column(header, "volume");
  if (!c_date || !c_open || !c_high || !c_low || !c_close) {
    throw ParseError("price header must contain Date, Open, High, Low, Close", 1);
  }

  PriceLoad load;
  std::map<std::int64_t, PriceBar> by_day;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t row_no = r + 1;
    const auto date = parse_date(field(row, c_date));
    if (!date) throw ParseError("malformed date '" + std::string(field(row, c_date)) + "'", row_no);

    const auto close_text = field(row, c_close);
    if (is_null(close_text)) {
      ++load.dropped_rows;
      continue;
    }
    PriceBar bar;
    bar.date = *date;
    auto price = [&](std::optional<std::size_t> col, const char* name) {
      const auto raw = field(row, col);
      if (is_null(raw)) return std::optional<double>{};
      const auto v = parse_number(raw);
      if (!v) throw ParseError(std::string("non-numeric ") + name + " '" + std::string(raw) + "'", row_no);
      return v;
    };
    bar.close = *price(c_close, "Close");
    if (!(bar.close > 0.0)) throw ParseError("Close must be positive", row_no);
    bar.open = price(c_open, "Open").value_or(bar.close);
    bar.high = price(c_high, "High").value_or(std::max(bar.open, bar.close));
    bar.low = price(c_low, "Low").value_or(std::min(bar.open, bar.close));
    bar.adj_close = price(c_adj, "Adj Close");
    if (const auto raw = field(row, c_volume); !is_null(raw)) {
      const auto v = parse_number(raw);
      if (!v || *v < 0.0) throw ParseError("bad Volume '" + std::string(raw) + "'", row_no);
      bar.volume = static_cast<long long>(*v);
    }
    if (bar.low > std::min(bar.open, bar.close) || bar.high < std::max(bar.open, bar.close)) {
      spdlog::warn("price row {} ({}): OHLC range inconsistent", row_no, format_date(bar.date));
    }
    const auto key = std::chrono::sys_days(bar.date).time_since_epoch().count();
    if (by_day.count(key)) spdlog::warn("duplicate price date {}; keeping the later row", format_date(bar.date));
    by_day[key] = bar;
  }
  if (by_day.empty()) throw ParseError("no price rows with a Close value");
  if (load.dropped_rows) spdlog::info("dropped {} price rows without Close", load.dropped_rows);
  load.bars.reserve(by_day.size());
  for (auto& [_, bar] : by_day) load.bars.push_back(bar);
  return load;
}

PriceLoad load_prices_csv(const std::string& path) {
  try {
    return parse_prices_csv(read_all(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.detail(), e.row());
  }
}

std::string write_prices_csv(std::span<const PriceBar> bars) {
  std::string out = "Date,Open,High,Low,Close,Adj Close,Volume\n";
  char buf[160];
  for (const auto& b : bars) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,", format_date(b.date).c_str(), b.open, b.high, b.low,
                  b.close);
    out += buf;
    if (b.adj_close) {
      std::snprintf(buf, sizeof buf, "%.17g", *b.adj_close);
      out += buf;
    } else {
      out += "null";
    }
    out += ',';
    if (b.volume) out += std::to_string(*b.volume);
    out += '\n';
  }
  return out;
}

std::vector<NewsItem> parse_news_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  const auto rows = csv::read(in);
  if (rows.empty()) throw ParseError("news file is empty");
  const auto header = index_header(rows.front());
  const auto c_id = column(header, "id");
  const auto c_date = column(header, "date");
  const auto c_pair = column(header, "pair");
  const auto c_text = column(header, "text");
  const auto c_label = column(header, "label");
  if (!c_date || !c_pair || !c_text) throw ParseError("news header must contain date, pair, text", 1);

  std::vector<NewsItem> items;
  items.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t row_no = r + 1;
    NewsItem item;
    const auto id = trim(field(row, c_id));
    item.id = id.empty() ? std::to_string(r) : std::string(id);
    const auto date = parse_date(field(row, c_date));
    if (!date) throw ParseError("malformed date '" + std::string(field(row, c_date)) + "'", row_no);
    item.date = *date;
    item.pair = std::string(trim(field(row, c_pair)));
    if (!is_pair_code(item.pair)) throw ParseError("bad currency pair code '" + item.pair + "'", row_no);
    item.text = std::string(trim(field(row, c_text)));
    if (item.text.empty()) throw ParseError("empty news text", row_no);
    if (const auto raw = trim(field(row, c_label)); !raw.empty()) {
      item.label = parse_label(raw);
      if (!item.label) throw ParseError("unknown sentiment label '" + std::string(raw) + "'", row_no);
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<NewsItem> load_news_csv(const std::string& path) {
  try {
    return parse_news_csv(read_all(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.detail(), e.row());
  }
}

Alignment align_by_date(std::span<const NewsItem> news, std::span<const PriceBar> prices) {
  if (prices.empty()) throw std::invalid_argument("align_by_date: empty price series");
  Alignment out;
  out.days.reserve(prices.size());
  for (const auto& bar : prices) {
    if (!out.days.empty() && std::chrono::sys_days(bar.date) <= std::chrono::sys_days(out.days.back().date)) {
      throw std::invalid_argument("align_by_date: prices are not strictly ascending");
    }
    out.days.push_back({bar.date, bar.close, {}});
  }
  for (const auto& item : news) {
    const auto it = std::lower_bound(out.days.begin(), out.days.end(), item.date, [](const AlignedDay& d, const Date& x) {
      return std::chrono::sys_days(d.date) < std::chrono::sys_days(x);
    });
    if (it == out.days.end()) {
      ++out.dropped;
      spdlog::debug("news {} dated {} falls after the last trading day; dropped", item.id, format_date(item.date));
      continue;
    }
    it->news.push_back(item);
    ++out.attached;
  }
  return out;
}

PriceStats price_stats(std::span<const double> closes) {
  if (closes.empty()) throw std::invalid_argument("price_stats: empty series");
  PriceStats s;
  s.max = *std::max_element(closes.begin(), closes.end());
  s.min = *std::min_element(closes.begin(), closes.end());
  s.mean = std::accumulate(closes.begin(), closes.end(), 0.0) / static_cast<double>(closes.size());
  s.mean = std::clamp(s.mean, s.min, s.max);  // summation rounding
  if (closes.size() == 1) {
    spdlog::warn("price_stats: single observation, stdev reported as 0");
    return s;
  }
  double ss = 0.0;
  for (double c : closes) ss += (c - s.mean) * (c - s.mean);
  s.stdev = std::sqrt(ss / static_cast<double>(closes.size() - 1));
  return s;
}

}  // namespace fxplain
