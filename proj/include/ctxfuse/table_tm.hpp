#pragma once

// Table-driven toy translation model. Rules map a (source sentence,
// target prefix) state to a fixed next-token distribution; the rule whose
// prefix pattern is the longest suffix of the current prefix wins, and a
// mandatory default rule covers everything else.
//
// File format, one rule per line (blank lines and # comments ignored):
//   RULE src tokens|prefix tokens -> tok:prob tok:prob ...
//   DEFAULT -> tok:prob ...

#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/scorer.hpp"

namespace ctxfuse {

class TableTm final : public Model {
 public:
  explicit TableTm(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  const Vocabulary& vocab() const override { return vocab_; }
  const char* backend_name() const override { return "table-tm"; }

  // entries: (token, probability); must sum to one within 1e-6. Tokens not
  // listed get probability zero.
  void add_rule(Sentence src, Sentence prefix,
                const std::vector<std::pair<TokenId, double>>& entries,
                const std::string& rule_id = "") {
    rules_[std::move(src)][std::move(prefix)] = make_dist(entries, rule_id);
  }

  void set_default(const std::vector<std::pair<TokenId, double>>& entries,
                   const std::string& rule_id = "DEFAULT") {
    default_ = make_dist(entries, rule_id);
  }

  NextTokenDistribution next_dist(std::span<const TokenId> conditioning,
                                  std::span<const TokenId> prefix) const override {
    if (!default_) fail(errc::invalid_config, "table model has no default rule");
    auto by_src = rules_.find(Sentence(conditioning.begin(), conditioning.end()));
    if (by_src != rules_.end()) {
      const std::map<Sentence, NextTokenDistribution>& candidates = by_src->second;
      const NextTokenDistribution* best = nullptr;
      std::size_t best_len = 0;
      for (const auto& [pattern, dist] : candidates) {
        if (pattern.size() > prefix.size()) continue;
        if (!std::equal(pattern.begin(), pattern.end(), prefix.end() - static_cast<std::ptrdiff_t>(pattern.size())))
          continue;
        if (best == nullptr || pattern.size() >= best_len) {
          best = &dist;
          best_len = pattern.size();
        }
      }
      if (best) return *best;
    }
    return *default_;
  }

  static TableTm load(std::istream& in, Vocabulary vocab) {
    return parse(in, std::move(vocab), false);
  }

  // Builds the vocabulary from the tokens the file mentions, in order of
  // first appearance.
  static TableTm load_building_vocab(std::istream& in) {
    return parse(in, Vocabulary(), true);
  }

  static TableTm load(const std::string& path, Vocabulary vocab) {
    auto in = detail::open_input(path);
    return load(in, std::move(vocab));
  }

  static TableTm load_building_vocab(const std::string& path) {
    auto in = detail::open_input(path);
    return load_building_vocab(in);
  }

 private:
  NextTokenDistribution make_dist(const std::vector<std::pair<TokenId, double>>& entries,
                                  const std::string& rule_id) const {
    NextTokenDistribution dist;
    dist.logp.assign(vocab_.size(), kNegInf);
    double sum = 0.0;
    for (const auto& [token, prob] : entries) {
      if (token >= vocab_.size())
        fail(errc::unknown_token, "token id " + std::to_string(token));
      if (prob < 0.0) fail(errc::unnormalized_rule, rule_id + ": negative probability");
      dist.logp[token] = std::log(prob);
      sum += prob;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      fail(errc::unnormalized_rule,
           rule_id + ": probabilities sum to " + format_double(sum));
    return dist;
  }

  static TableTm parse(std::istream& in, Vocabulary vocab, bool build_vocab) {
    struct RawRule {
      bool is_default;
      std::string src, prefix, dist;
      std::size_t line_no;
    };
    std::vector<RawRule> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::size_t arrow = line.find("->");
      if (arrow == std::string::npos)
        fail(errc::table_format, "missing '->' at line " + std::to_string(line_no));
      std::string lhs = line.substr(0, arrow);
      std::string rhs = line.substr(arrow + 2);
      if (lhs.rfind("DEFAULT", 0) == 0) {
        raw.push_back({true, "", "", rhs, line_no});
      } else if (lhs.rfind("RULE", 0) == 0) {
        std::string body = lhs.substr(4);
        std::size_t bar = body.find('|');
        if (bar == std::string::npos)
          fail(errc::table_format, "missing '|' at line " + std::to_string(line_no));
        raw.push_back({false, body.substr(0, bar), body.substr(bar + 1), rhs, line_no});
      } else {
        fail(errc::table_format, "expected RULE or DEFAULT at line " + std::to_string(line_no));
      }
    }

    auto tokens_of = [](const std::string& text) {
      std::vector<std::string> out;
      std::string cur;
      for (char c : text) {
        if (c == ' ' || c == '\t') {
          if (!cur.empty()) out.push_back(std::move(cur));
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
      if (!cur.empty()) out.push_back(std::move(cur));
      return out;
    };

    if (build_vocab) {
      for (const RawRule& r : raw) {
        for (const std::string& t : tokens_of(r.src)) vocab.add(t);
        for (const std::string& t : tokens_of(r.prefix)) vocab.add(t);
        for (const std::string& entry : tokens_of(r.dist)) {
          std::size_t colon = entry.rfind(':');
          if (colon != std::string::npos) vocab.add(entry.substr(0, colon));
        }
      }
    }

    TableTm model(std::move(vocab));
    bool saw_default = false;
    for (const RawRule& r : raw) {
      std::string rule_id = "line " + std::to_string(r.line_no);
      auto pattern_ids = [&](const std::string& text) {
        Sentence ids;
        for (const std::string& t : tokens_of(text)) {
          if (t == Vocabulary::kBoundarySurface)
            fail(errc::table_format, rule_id + ": '</s>' not allowed in patterns");
          ids.push_back(model.vocab_.require(t));
        }
        return ids;
      };
      std::vector<std::pair<TokenId, double>> entries;
      for (const std::string& entry : tokens_of(r.dist)) {
        std::size_t colon = entry.rfind(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 >= entry.size())
          fail(errc::table_format, rule_id + ": bad entry '" + entry + "'");
        double prob = 0.0;
        try {
          prob = std::stod(entry.substr(colon + 1));
        } catch (const std::exception&) {
          fail(errc::table_format, rule_id + ": bad probability in '" + entry + "'");
        }
        entries.emplace_back(model.vocab_.require(entry.substr(0, colon)), prob);
      }
      if (r.is_default) {
        model.set_default(entries, rule_id);
        saw_default = true;
      } else {
        model.add_rule(pattern_ids(r.src), pattern_ids(r.prefix), entries, rule_id);
      }
    }
    if (!saw_default) fail(errc::table_format, "missing mandatory DEFAULT rule");
    return model;
  }

  Vocabulary vocab_;
  std::map<Sentence, std::map<Sentence, NextTokenDistribution>> rules_;
  std::optional<NextTokenDistribution> default_;
};

}  // namespace ctxfuse
