#include <utility>

#include "fxplain/sentiment.hpp"

namespace fxplain {

namespace {

// Valences on the usual [-4, +4] scale, tuned for FX and macro headlines.
constexpr std::pair<const char*, double> kFinancialLexicon[] = {
    {"gain", 1.5},        {"gains", 1.5},        {"gained", 1.4},       {"rally", 2.0},
    {"rallies", 2.0},     {"rallied", 1.9},      {"surge", 2.2},        {"surges", 2.2},
    {"surged", 2.1},      {"soar", 2.5},         {"soars", 2.5},        {"soared", 2.4},
    {"rise", 1.2},        {"rises", 1.2},        {"rose", 1.1},         {"rising", 1.1},
    {"climb", 1.2},       {"climbs", 1.2},       {"climbed", 1.1},      {"jump", 1.6},
    {"jumps", 1.6},       {"jumped", 1.5},       {"boost", 1.2},        {"boosts", 1.2},
    {"boosted", 1.1},     {"strong", 1.4},       {"stronger", 1.5},     {"strength", 1.3},
    {"strengthens", 1.5}, {"rebound", 1.4},      {"rebounds", 1.4},     {"recovery", 1.3},
    {"recovers", 1.3},    {"optimism", 1.8},     {"optimistic", 1.8},   {"bullish", 2.2},
    {"upbeat", 1.6},      {"robust", 1.4},       {"growth", 1.0},       {"expansion", 0.9},
    {"hawkish", 0.8},     {"hike", 0.6},         {"hikes", 0.6},        {"beat", 1.1},
    {"beats", 1.1},       {"outperform", 1.5},   {"record", 0.8},       {"high", 0.6},
    {"higher", 0.8},      {"support", 0.7},      {"supported", 0.8},    {"confidence", 1.2},
    {"improve", 1.2},     {"improves", 1.2},     {"improved", 1.1},     {"positive", 1.5},
    {"upside", 1.2},      {"resilient", 1.3},    {"stable", 0.4},       {"steady", 0.3},
    {"fall", -1.5},       {"falls", -1.5},       {"fell", -1.4},        {"falling", -1.4},
    {"drop", -1.4},       {"drops", -1.4},       {"dropped", -1.3},     {"decline", -1.4},
    {"declines", -1.4},   {"declined", -1.3},    {"slump", -2.2},       {"slumps", -2.2},
    {"plunge", -2.5},     {"plunges", -2.5},     {"plunged", -2.4},     {"tumble", -2.2},
    {"tumbles", -2.2},    {"slide", -1.3},       {"slides", -1.3},      {"slip", -1.0},
    {"slips", -1.0},      {"weak", -1.4},        {"weaker", -1.5},      {"weakness", -1.5},
    {"weakens", -1.5},    {"loss", -1.6},        {"losses", -1.7},      {"lose", -1.4},
    {"risk", -0.8},       {"risks", -0.9},       {"fear", -1.9},        {"fears", -1.9},
    {"concern", -1.2},    {"concerns", -1.2},    {"worry", -1.4},       {"worries", -1.4},
    {"uncertainty", -1.3},{"volatile", -1.0},    {"volatility", -0.9},  {"recession", -2.3},
    {"crisis", -2.6},     {"inflation", -0.7},   {"dovish", -0.8},      {"cut", -0.6},
    {"cuts", -0.6},       {"bearish", -2.2},     {"pessimism", -1.8},   {"downturn", -1.9},
    {"slowdown", -1.5},   {"miss", -1.1},        {"misses", -1.1},      {"lower", -0.8},
    {"low", -0.6},        {"pressure", -0.9},    {"sell-off", -2.0},    {"selloff", -2.0},
    {"default", -2.4},    {"downside", -1.2},    {"negative", -1.5},    {"turmoil", -2.3},
};

}  // namespace

LexiconModel default_lexicon(double neutral_band) {
  std::unordered_map<std::string, double> entries;
  for (const auto& [term, valence] : kFinancialLexicon) entries.emplace(term, valence);
  return LexiconModel(entries, neutral_band);
}

}  // namespace fxplain
