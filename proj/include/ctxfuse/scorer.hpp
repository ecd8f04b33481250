#pragma once

// The autoregressive scorer contract every backend satisfies.
//
// A model maps (conditioning, prefix) to a normalized next-token
// distribution over the full vocabulary. For a translation model the
// conditioning is the source sentence; for a language model it is the
// context sequence (at minimum the single boundary token).

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/errors.hpp"
#include "ctxfuse/util.hpp"

namespace ctxfuse {

// Log-probability vector indexed by TokenId; sums to one within 1e-6.
// Entries are finite or -inf.
struct NextTokenDistribution {
  std::vector<double> logp;

  std::size_t size() const { return logp.size(); }

  double prob_mass() const {
    double acc = 0.0;
    for (double lp : logp) {
      if (lp != kNegInf) acc += std::exp(lp);
    }
    return acc;
  }
};

class Model {
 public:
  virtual ~Model() = default;

  virtual const Vocabulary& vocab() const = 0;

  // Normalized distribution for the token following conditioning·prefix.
  virtual NextTokenDistribution next_dist(std::span<const TokenId> conditioning,
                                          std::span<const TokenId> prefix) const = 0;

  virtual const char* backend_name() const = 0;
};

// Stateful prefix handle over a model. Copies are cheap and independent;
// the model must outlive every session created from it.
class Session {
 public:
  Session(const Model& model, Sentence conditioning)
      : model_(&model), conditioning_(std::move(conditioning)) {
    check_tokens(conditioning_);
  }

  NextTokenDistribution next() const {
    return model_->next_dist(conditioning_, prefix_);
  }

  void advance(TokenId token) {
    check_token(token);
    prefix_.push_back(token);
  }

  const Sentence& conditioning() const { return conditioning_; }
  const Sentence& prefix() const { return prefix_; }
  const Model& model() const { return *model_; }

 private:
  void check_token(TokenId token) const {
    if (token >= model_->vocab().size())
      fail(errc::unknown_token, "token id " + std::to_string(token));
  }
  void check_tokens(const Sentence& tokens) const {
    for (TokenId t : tokens) check_token(t);
  }

  const Model* model_;
  Sentence conditioning_;
  Sentence prefix_;
};

// Sum over t of log p(seq[t] | conditioning · seq[<t]), accumulated left
// to right so the value is bit-identical to stepping a session.
inline double sequence_logp(const Model& model, std::span<const TokenId> conditioning,
                            std::span<const TokenId> seq) {
  if (seq.empty()) fail(errc::empty_input, "empty sequence");
  Session session(model, Sentence(conditioning.begin(), conditioning.end()));
  double total = 0.0;
  for (TokenId token : seq) {
    if (token >= model.vocab().size())
      fail(errc::unknown_token, "token id " + std::to_string(token));
    total += session.next().logp[token];
    session.advance(token);
  }
  return total;
}

}  // namespace ctxfuse
