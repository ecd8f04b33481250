#pragma once

// The fused context-aware objective and its pieces: PMI, the token-wise
// decomposition used by context-aware beam search, probability smoothing,
// and shallow-fusion baselines.
//
// The fused score of a target y given source x and target-side context c:
//
//   score(y; x, c) = log p_tm(y|x) + log p_lm(y|c) - log p_lm(y)
//
// where the last two terms are the PMI of context and target. Smoothing
// flattens each LM next-token distribution before the chosen token's
// log-probability is taken; the translation term is never smoothed.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/doclm.hpp"
#include "ctxfuse/scorer.hpp"
#include "ctxfuse/util.hpp"

namespace ctxfuse {

enum class FusionMode {
  cscore,          // log p(y|x) + pmi
  shallow_cond,    // log p(y|x) + beta * log p_lm(y|c)
  shallow_uncond,  // log p(y|x) + beta * log p_lm(y)
  nmt_only,        // log p(y|x)
  pmi_only,        // pmi
  condprob_only,   // log p_lm(y|c)
};

inline const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::cscore: return "cscore";
    case FusionMode::shallow_cond: return "shallow-cond";
    case FusionMode::shallow_uncond: return "shallow-uncond";
    case FusionMode::nmt_only: return "nmt-only";
    case FusionMode::pmi_only: return "pmi";
    case FusionMode::condprob_only: return "condprob";
  }
  return "?";
}

struct Smoothing {
  enum class Kind { none, add_alpha, temperature };
  Kind kind = Kind::none;
  double value = 0.0;

  static Smoothing none() { return {}; }
  static Smoothing add_alpha(double alpha) { return {Kind::add_alpha, alpha}; }
  static Smoothing temperature(double t) { return {Kind::temperature, t}; }

  void validate() const {
    if (kind == Kind::add_alpha && value < 0.0)
      fail(errc::negative_alpha, "alpha = " + format_double(value));
    if (kind == Kind::temperature && !(value > 0.0 && value <= 1.0))
      fail(errc::invalid_temperature, "T = " + format_double(value) + " outside (0,1]");
  }

  std::string describe() const {
    switch (kind) {
      case Kind::none: return "none";
      case Kind::add_alpha: return "add:" + format_double(value);
      case Kind::temperature: return "temp:" + format_double(value);
    }
    return "?";
  }
};

struct FusionConfig {
  FusionMode mode = FusionMode::cscore;
  Smoothing smoothing;
  double beta = 0.01;   // shallow-fusion LM weight, (0,1]
  int context_size = 3; // preceding target sentences used as context

  void validate() const {
    smoothing.validate();
    if (!(beta > 0.0 && beta <= 1.0))
      fail(errc::invalid_config, "beta = " + format_double(beta) + " outside (0,1]");
    if (context_size < 0) fail(errc::invalid_config, "negative context size");
  }
};

// Accumulated score components for one target sequence. pmi is always
// exactly logp_lm_cond - logp_lm_uncond.
struct ScoreBreakdown {
  double logp_tm = 0.0;
  double logp_lm_cond = 0.0;
  double logp_lm_uncond = 0.0;
  double pmi = 0.0;
  double total = 0.0;
};

// p_bar = (p + alpha/|V|) / (alpha + 1), computed in probability space.
// alpha = 0 is an exact no-op; alpha -> inf flattens to uniform.
inline NextTokenDistribution smooth_add_alpha(const NextTokenDistribution& dist,
                                              double alpha) {
  if (alpha < 0.0) fail(errc::negative_alpha, "alpha = " + format_double(alpha));
  if (alpha == 0.0) return dist;
  const std::size_t v = dist.size();
  std::vector<double> probs(v);
  for (std::size_t w = 0; w < v; ++w) {
    double lp = dist.logp[w];
    probs[w] = (lp == kNegInf ? 0.0 : std::exp(lp)) + alpha / static_cast<double>(v);
  }
  double norm = compensated_sum(probs);
  NextTokenDistribution out;
  out.logp.resize(v);
  for (std::size_t w = 0; w < v; ++w) out.logp[w] = std::log(probs[w] / norm);
  return out;
}

// p_bar = p^T / sum p^T, in log space. T = 1 is an exact no-op; T in (0,1)
// flattens the distribution.
inline NextTokenDistribution smooth_temperature(const NextTokenDistribution& dist,
                                                double t) {
  if (!(t > 0.0 && t <= 1.0))
    fail(errc::invalid_temperature, "T = " + format_double(t) + " outside (0,1]");
  if (t == 1.0) return dist;
  NextTokenDistribution out;
  out.logp.resize(dist.size());
  for (std::size_t w = 0; w < dist.size(); ++w)
    out.logp[w] = dist.logp[w] == kNegInf ? kNegInf : dist.logp[w] * t;
  double norm = log_sum_exp(out.logp);
  for (double& lp : out.logp) {
    if (lp != kNegInf) lp -= norm;
  }
  return out;
}

inline NextTokenDistribution apply_smoothing(const NextTokenDistribution& dist,
                                             const Smoothing& smoothing) {
  switch (smoothing.kind) {
    case Smoothing::Kind::none: return dist;
    case Smoothing::Kind::add_alpha: return smooth_add_alpha(dist, smoothing.value);
    case Smoothing::Kind::temperature: return smooth_temperature(dist, smoothing.value);
  }
  return dist;
}

// Stepwise sequence log-probability with smoothing applied to each
// next-token distribution before the chosen token is read off. With
// Smoothing::none this equals sequence_logp bit-exactly.
inline double smoothed_sequence_logp(const Model& lm, Sentence conditioning,
                                     std::span<const TokenId> seq,
                                     const Smoothing& smoothing) {
  if (seq.empty()) fail(errc::empty_input, "empty sequence");
  smoothing.validate();
  Session session(lm, std::move(conditioning));
  double total = 0.0;
  for (TokenId token : seq) {
    if (token >= lm.vocab().size())
      fail(errc::unknown_token, "token id " + std::to_string(token));
    total += apply_smoothing(session.next(), smoothing).logp[token];
    session.advance(token);
  }
  return total;
}

// log p(y|ctx) - log p(y), both walked stepwise under the same smoothing.
// Exactly zero for an empty window or a context-blind LM.
inline double pmi(const Model& lm, const Sentence& y, const ContextWindow& ctx,
                  const Smoothing& smoothing = Smoothing::none()) {
  TokenId b = lm.vocab().boundary_id();
  auto y_eos = target_with_eos(y, b);
  double cond = smoothed_sequence_logp(lm, build_context_sequence(ctx, b), y_eos, smoothing);
  double uncond = smoothed_sequence_logp(lm, {b}, y_eos, smoothing);
  return cond - uncond;
}

namespace detail {

inline bool mode_needs_tm(FusionMode m) {
  return m == FusionMode::cscore || m == FusionMode::shallow_cond ||
         m == FusionMode::shallow_uncond || m == FusionMode::nmt_only;
}

inline bool mode_needs_lm(FusionMode m) { return m != FusionMode::nmt_only; }

// Shallow fusion keeps raw LM outputs; smoothing belongs to the PMI modes.
inline Smoothing lm_smoothing(const FusionConfig& cfg) {
  if (cfg.mode == FusionMode::shallow_cond || cfg.mode == FusionMode::shallow_uncond)
    return Smoothing::none();
  return cfg.smoothing;
}

}  // namespace detail

// Full-sequence fused score of target y for source x under context ctx.
// The translation model scores y with its closing boundary token, per the
// autoregressive factorization. tm or lm may be null when the mode does
// not use them.
inline ScoreBreakdown context_score(const Model* tm, const Model* lm, const Sentence& y,
                                    const Sentence& x, const ContextWindow& ctx,
                                    const FusionConfig& cfg) {
  cfg.validate();
  if (y.empty()) fail(errc::empty_input, "empty target");
  const bool need_tm = detail::mode_needs_tm(cfg.mode);
  const bool need_lm = detail::mode_needs_lm(cfg.mode);
  if (need_tm && tm == nullptr) fail(errc::invalid_config, "mode requires a translation model");
  if (need_lm && lm == nullptr) fail(errc::invalid_config, "mode requires a language model");
  if (need_tm && need_lm && tm->vocab() != lm->vocab())
    fail(errc::vocab_mismatch, "translation and language model vocabularies differ");

  const Model& any = need_tm ? *tm : *lm;
  TokenId b = any.vocab().boundary_id();
  auto y_eos = target_with_eos(y, b);

  ScoreBreakdown out;
  if (need_tm) out.logp_tm = sequence_logp(*tm, x, y_eos);
  if (need_lm) {
    Smoothing sm = detail::lm_smoothing(cfg);
    out.logp_lm_cond = smoothed_sequence_logp(*lm, build_context_sequence(ctx, b), y_eos, sm);
    out.logp_lm_uncond = smoothed_sequence_logp(*lm, {b}, y_eos, sm);
  }
  out.pmi = out.logp_lm_cond - out.logp_lm_uncond;
  switch (cfg.mode) {
    case FusionMode::cscore: out.total = out.logp_tm + out.pmi; break;
    case FusionMode::shallow_cond: out.total = out.logp_tm + cfg.beta * out.logp_lm_cond; break;
    case FusionMode::shallow_uncond: out.total = out.logp_tm + cfg.beta * out.logp_lm_uncond; break;
    case FusionMode::nmt_only: out.total = out.logp_tm; break;
    case FusionMode::pmi_only: out.total = out.pmi; break;
    case FusionMode::condprob_only: out.total = out.logp_lm_cond; break;
  }
  return out;
}

namespace detail {

inline void check_synchronized(const Session& a, const Session& b, const char* what) {
  if (a.prefix() != b.prefix()) fail(errc::desynced_sessions, what);
}

}  // namespace detail

// Per-token fused score at the next position: the translation term plus
// the log-ratio of the smoothed conditional and unconditional LM
// distributions. The three sessions must share the same prefix.
inline double tokenwise_context_score(const Session& tm_session,
                                      const Session& lm_cond_session,
                                      const Session& lm_uncond_session, TokenId token,
                                      const Smoothing& smoothing = Smoothing::none()) {
  detail::check_synchronized(tm_session, lm_cond_session, "tm vs conditional lm");
  detail::check_synchronized(tm_session, lm_uncond_session, "tm vs unconditional lm");
  smoothing.validate();
  double tm_lp = tm_session.next().logp[token];
  double cond_lp = apply_smoothing(lm_cond_session.next(), smoothing).logp[token];
  double uncond_lp = apply_smoothing(lm_uncond_session.next(), smoothing).logp[token];
  return tm_lp + (cond_lp - uncond_lp);
}

// Per-token shallow fusion: translation term plus beta times the raw LM
// term. With conditional=true the LM session is conditioned on the
// context sequence, otherwise on the bare boundary token.
inline double shallow_fusion_logp(const Session& tm_session, const Session& lm_session,
                                  TokenId token, double beta, bool conditional) {
  (void)conditional;  // the LM session's conditioning embodies the variant
  detail::check_synchronized(tm_session, lm_session, "tm vs lm");
  if (!(beta > 0.0 && beta <= 1.0))
    fail(errc::invalid_config, "beta = " + format_double(beta) + " outside (0,1]");
  return tm_session.next().logp[token] + beta * lm_session.next().logp[token];
}

}  // namespace ctxfuse
