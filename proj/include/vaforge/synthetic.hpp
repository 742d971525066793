#pragma once

// Seeded synthetic records whose cause is a noisy function of two
// independent signals: class-specific narrative tokens and class-specific
// question indicators.

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "vaforge/core_data.hpp"
#include "vaforge/rng.hpp"
#include "vaforge/text_features.hpp"

namespace vaforge::synthetic {

enum class SufficiencyMode { None, FromIndicator, Random };

struct Config {
  std::size_t n_records = 2000;
  int n_classes = 4;
  std::uint64_t seed = 0;
  // Probability that each narrative signal token belongs to the record's own
  // class (otherwise to a uniformly drawn class). Tokens are drawn
  // independently, so the evidence is soft rather than all-or-nothing.
  double narrative_signal = 0.6;
  // Same for each class indicator, independently of the narrative: with this
  // probability it answers for the record's own class, otherwise it is a coin
  // flip at the base rate.
  double question_signal = 0.6;
  int signal_tokens_per_class = 4;
  int signal_tokens_per_record = 2;
  int noise_vocabulary = 200;
  int noise_tokens_per_record = 12;
  int indicators_per_class = 3;
  int noise_indicators = 6;
  double dont_know_rate = 0.03;
  double missing_rate = 0.03;
  SufficiencyMode sufficiency = SufficiencyMode::None;
  std::string id_prefix = "r";
};

inline std::vector<std::string> class_names(int n_classes) {
  std::vector<std::string> out;
  for (int c = 0; c < n_classes; ++c) out.push_back("cause_" + std::to_string(c));
  return out;
}

inline CauseTaxonomy taxonomy(int n_classes) { return CauseTaxonomy({}, {}, class_names(n_classes)); }

// Indicator driving the sufficiency score in FromIndicator mode.
inline const std::string& sufficiency_indicator() {
  static const std::string name = "i900";
  return name;
}

namespace detail {

// Pronounceable tokens from a fixed alphabet; none ends in 's' or "ing",
// so preprocessing leaves them intact.
inline std::vector<std::string> make_words(std::size_t n, std::uint64_t seed, std::set<std::string>& used) {
  static constexpr char cons[] = "bdfgkmprtvz";
  static constexpr char vow[] = "aeiou";
  const auto& stop = text::default_stopwords();
  const std::set<std::string> stopset(stop.begin(), stop.end());
  Engine gen = make_engine(seed);
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w;
    for (int s = 0; s < 3; ++s) {
      w.push_back(cons[uniform_index(gen, sizeof(cons) - 1)]);
      w.push_back(vow[uniform_index(gen, sizeof(vow) - 1)]);
    }
    if (stopset.contains(w) || !used.insert(w).second) continue;
    out.push_back(w);
  }
  return out;
}

}  // namespace detail

inline std::vector<VARecord> generate(const Config& cfg) {
  const auto names = class_names(cfg.n_classes);
  std::set<std::string> used;
  const auto noise_words = detail::make_words(static_cast<std::size_t>(cfg.noise_vocabulary), derive_seed(cfg.seed, 1), used);
  const auto signal_words = detail::make_words(
      static_cast<std::size_t>(cfg.n_classes * cfg.signal_tokens_per_class), derive_seed(cfg.seed, 2), used);
  std::vector<std::vector<std::string>> class_indicators(static_cast<std::size_t>(cfg.n_classes));
  int next_ind = 100;
  for (auto& inds : class_indicators) {
    for (int j = 0; j < cfg.indicators_per_class; ++j) inds.push_back("i" + std::to_string(next_ind++));
  }
  std::vector<std::string> noise_inds;
  for (int j = 0; j < cfg.noise_indicators; ++j) noise_inds.push_back("i" + std::to_string(next_ind++));

  Engine gen = make_engine(derive_seed(cfg.seed, 3));
  auto respond = [&](bool yes) {
    const double u = uniform01(gen);
    if (u < cfg.missing_rate) return Response::Missing;
    if (u < cfg.missing_rate + cfg.dont_know_rate) return Response::DontKnow;
    return yes ? Response::Yes : Response::No;
  };
  std::vector<VARecord> out;
  out.reserve(cfg.n_records);
  for (std::size_t i = 0; i < cfg.n_records; ++i) {
    VARecord r;
    r.id = cfg.id_prefix + std::to_string(i);
    const auto cls = static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(cfg.n_classes)));
    r.cause_level3 = names[static_cast<std::size_t>(cls)];

    auto noisy_class = [&](double signal) {
      return uniform01(gen) < signal ? cls
                                     : static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(cfg.n_classes)));
    };
    std::vector<std::string> words;
    for (int t = 0; t < cfg.noise_tokens_per_record; ++t) {
      words.push_back(noise_words[uniform_index(gen, noise_words.size())]);
    }
    for (int t = 0; t < cfg.signal_tokens_per_record; ++t) {
      const int text_cls = noisy_class(cfg.narrative_signal);
      const auto j = uniform_index(gen, static_cast<std::uint64_t>(cfg.signal_tokens_per_class));
      const auto pos = uniform_index(gen, words.size() + 1);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos),
                   signal_words[static_cast<std::size_t>(text_cls * cfg.signal_tokens_per_class) + j]);
    }
    std::string narrative = "The family reported that";
    for (const auto& w : words) narrative += " " + w;
    narrative += ".";
    r.narrative = std::move(narrative);

    for (int c = 0; c < cfg.n_classes; ++c) {
      for (const auto& ind : class_indicators[static_cast<std::size_t>(c)]) {
        const double base = 1.0 / cfg.n_classes;
        const double p_yes = uniform01(gen) < cfg.question_signal ? (c == cls ? 0.85 : 0.1) : base;
        r.questions[ind] = respond(uniform01(gen) < p_yes);
      }
    }
    for (const auto& ind : noise_inds) r.questions[ind] = respond(uniform01(gen) < 0.5);

    switch (cfg.sufficiency) {
      case SufficiencyMode::None: break;
      case SufficiencyMode::Random: r.sufficiency_score = 1 + static_cast<int>(uniform_index(gen, 5)); break;
      case SufficiencyMode::FromIndicator: {
        // Yes -> 5, No -> 1, DontKnow -> 3; never missing.
        const double u = uniform01(gen);
        const Response resp = u < 1.0 / 3 ? Response::Yes : u < 2.0 / 3 ? Response::No : Response::DontKnow;
        r.questions[sufficiency_indicator()] = resp;
        r.sufficiency_score = resp == Response::Yes ? 5 : resp == Response::No ? 1 : 3;
        break;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline Dataset make_dataset(const Config& cfg) {
  return Dataset(generate(cfg), taxonomy(cfg.n_classes), LabelLevel::L3);
}

}  // namespace vaforge::synthetic
