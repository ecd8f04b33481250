#pragma once

// Decoding: standard beam search over the translation model, full-score
// reranking, context-aware beam search driven by the token-wise fused
// score, an exhaustive exact decoder for oracle comparisons, and
// document-level decoding with generated or reference context.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/doclm.hpp"
#include "ctxfuse/fusion.hpp"
#include "ctxfuse/scorer.hpp"

namespace ctxfuse {

enum class DecodeMethod { beam, rerank, caware };
enum class LengthNorm { off, divide_by_length };
enum class ContextSource { generated, reference };

struct SearchConfig {
  int beam_size = 5;
  int max_len = 64;
  DecodeMethod method = DecodeMethod::beam;
  FusionConfig fusion;
  LengthNorm length_norm = LengthNorm::off;

  void validate() const {
    if (beam_size < 1) fail(errc::invalid_config, "beam size must be >= 1");
    if (max_len < 1) fail(errc::invalid_config, "max length must be >= 1");
    fusion.validate();
  }
};

// A beam item: the target tokens emitted so far (ending in the boundary
// token iff finished) plus per-component accumulated scores and the
// scorer sessions that produced them. Copies are independent.
struct Hypothesis {
  Sentence tokens;
  bool finished = false;
  ScoreBreakdown breakdown;
  std::optional<Session> tm_session;
  std::optional<Session> lm_cond_session;
  std::optional<Session> lm_uncond_session;

  // Tokens without the trailing boundary.
  Sentence content() const {
    if (finished && !tokens.empty()) return Sentence(tokens.begin(), tokens.end() - 1);
    return tokens;
  }
};

struct ScoredHypothesis {
  Hypothesis hyp;
  double score = 0.0;
};

namespace detail {

// Deterministic preference order: higher score, then shorter sequence,
// then lexicographically smaller token ids.
inline bool better(double score_a, const Sentence& a, double score_b, const Sentence& b) {
  if (score_a != score_b) return score_a > score_b;
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

inline bool better_hyp(const Hypothesis& a, const Hypothesis& b) {
  return better(a.breakdown.total, a.tokens, b.breakdown.total, b.tokens);
}

struct StepScores {
  std::vector<double> tm;      // raw translation log-probs
  std::vector<double> lm_cond; // LM terms actually accumulated (empty if unused)
  std::vector<double> lm_uncond;
  std::vector<double> total;   // fused per-token step score
};

// One beam core serves plain and context-aware search; with mode
// nmt_only the LM sessions are absent and the step score is the raw
// translation term.
inline StepScores score_expansions(const Hypothesis& hyp, const FusionConfig& cfg) {
  StepScores s;
  s.tm = hyp.tm_session->next().logp;
  const std::size_t v = s.tm.size();
  s.total.resize(v);
  switch (cfg.mode) {
    case FusionMode::nmt_only:
      s.total = s.tm;
      break;
    case FusionMode::cscore: {
      s.lm_cond = apply_smoothing(hyp.lm_cond_session->next(), cfg.smoothing).logp;
      s.lm_uncond = apply_smoothing(hyp.lm_uncond_session->next(), cfg.smoothing).logp;
      for (std::size_t w = 0; w < v; ++w)
        s.total[w] = s.tm[w] + (s.lm_cond[w] - s.lm_uncond[w]);
      break;
    }
    case FusionMode::shallow_cond: {
      s.lm_cond = hyp.lm_cond_session->next().logp;
      for (std::size_t w = 0; w < v; ++w) s.total[w] = s.tm[w] + cfg.beta * s.lm_cond[w];
      break;
    }
    case FusionMode::shallow_uncond: {
      s.lm_uncond = hyp.lm_uncond_session->next().logp;
      for (std::size_t w = 0; w < v; ++w) s.total[w] = s.tm[w] + cfg.beta * s.lm_uncond[w];
      break;
    }
    default:
      fail(errc::invalid_config,
           std::string("mode '") + fusion_mode_name(cfg.mode) + "' cannot drive beam search");
  }
  return s;
}

inline Hypothesis extend(const Hypothesis& hyp, TokenId w, const StepScores& s,
                         TokenId boundary) {
  Hypothesis child = hyp;
  child.tokens.push_back(w);
  child.breakdown.logp_tm += s.tm[w];
  if (!s.lm_cond.empty()) child.breakdown.logp_lm_cond += s.lm_cond[w];
  if (!s.lm_uncond.empty()) child.breakdown.logp_lm_uncond += s.lm_uncond[w];
  child.breakdown.pmi = child.breakdown.logp_lm_cond - child.breakdown.logp_lm_uncond;
  child.breakdown.total += s.total[w];
  child.tm_session->advance(w);
  if (child.lm_cond_session) child.lm_cond_session->advance(w);
  if (child.lm_uncond_session) child.lm_uncond_session->advance(w);
  child.finished = (w == boundary);
  return child;
}

inline double final_score(const Hypothesis& hyp, const SearchConfig& cfg) {
  if (cfg.length_norm == LengthNorm::divide_by_length && !hyp.tokens.empty())
    return hyp.breakdown.total / static_cast<double>(hyp.tokens.size());
  return hyp.breakdown.total;
}

inline std::vector<ScoredHypothesis> run_beam(const Model& tm, const Model* lm,
                                              const Sentence& x, const ContextWindow& ctx,
                                              const SearchConfig& cfg) {
  cfg.validate();
  const Vocabulary& vocab = tm.vocab();
  if (lm != nullptr && vocab != lm->vocab())
    fail(errc::vocab_mismatch, "translation and language model vocabularies differ");
  const TokenId boundary = vocab.boundary_id();
  const std::size_t v = vocab.size();
  const std::size_t beam = static_cast<std::size_t>(cfg.beam_size);

  Hypothesis root;
  root.tm_session.emplace(tm, x);
  if (cfg.fusion.mode != FusionMode::nmt_only) {
    if (lm == nullptr) fail(errc::invalid_config, "mode requires a language model");
    root.lm_cond_session.emplace(*lm, build_context_sequence(ctx, boundary));
    root.lm_uncond_session.emplace(*lm, Sentence{boundary});
  }

  std::vector<Hypothesis> active{std::move(root)};
  std::vector<Hypothesis> finished;

  for (int step = 1; step <= cfg.max_len && !active.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    candidates.reserve(active.size() * v);
    for (const Hypothesis& hyp : active) {
      StepScores scores = score_expansions(hyp, cfg.fusion);
      for (TokenId w = 0; w < v; ++w) {
        if (w == boundary) {
          if (step == 1) continue;  // the empty sentence is not a candidate
          finished.push_back(extend(hyp, w, scores, boundary));
        } else {
          candidates.push_back(extend(hyp, w, scores, boundary));
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), better_hyp);
    if (candidates.size() > beam) candidates.resize(beam);
    active = std::move(candidates);
    if (finished.size() >= beam) {
      active.clear();  // enough finished hypotheses collected
      break;
    }
  }

  // Hypotheses still active at the length cap get the boundary token
  // force-appended with its score.
  for (const Hypothesis& hyp : active) {
    StepScores scores = score_expansions(hyp, cfg.fusion);
    finished.push_back(extend(hyp, boundary, scores, boundary));
  }

  std::vector<ScoredHypothesis> out;
  out.reserve(finished.size());
  for (Hypothesis& hyp : finished) {
    double score = final_score(hyp, cfg);
    out.push_back({std::move(hyp), score});
  }
  std::sort(out.begin(), out.end(), [](const ScoredHypothesis& a, const ScoredHypothesis& b) {
    return better(a.score, a.hyp.tokens, b.score, b.hyp.tokens);
  });
  if (out.size() > beam) out.resize(beam);
  return out;
}

}  // namespace detail

// Standard beam search maximizing the translation log-probability alone.
// Returns up to beam_size finished hypotheses, best first.
inline std::vector<ScoredHypothesis> beam_search(const Model& tm, const Sentence& x,
                                                 const SearchConfig& cfg) {
  SearchConfig plain = cfg;
  plain.fusion.mode = FusionMode::nmt_only;
  return detail::run_beam(tm, nullptr, x, ContextWindow{}, plain);
}

// Generates beam_size candidates with plain beam search, rescores each
// full hypothesis with the fused objective, and returns the argmax.
inline Hypothesis rerank(const Model& tm, const Model& lm, const Sentence& x,
                         const ContextWindow& ctx, const SearchConfig& cfg) {
  cfg.validate();
  auto candidates = beam_search(tm, x, cfg);
  if (candidates.empty()) fail(errc::invalid_config, "beam search produced no candidates");
  std::optional<Hypothesis> best;
  for (ScoredHypothesis& cand : candidates) {
    ScoreBreakdown bd = context_score(&tm, &lm, cand.hyp.content(), x, ctx, cfg.fusion);
    Hypothesis rescored = std::move(cand.hyp);
    rescored.breakdown = bd;
    rescored.lm_cond_session.reset();
    rescored.lm_uncond_session.reset();
    if (!best || detail::better_hyp(rescored, *best)) best = std::move(rescored);
  }
  return std::move(*best);
}

// Beam search whose per-step expansion score is the token-wise fused
// score (or shallow fusion), with three synchronized sessions per
// hypothesis.
inline std::vector<ScoredHypothesis> caware_beam(const Model& tm, const Model& lm,
                                                 const Sentence& x, const ContextWindow& ctx,
                                                 const SearchConfig& cfg) {
  if (cfg.fusion.mode != FusionMode::cscore && cfg.fusion.mode != FusionMode::shallow_cond &&
      cfg.fusion.mode != FusionMode::shallow_uncond)
    fail(errc::invalid_config,
         std::string("mode '") + fusion_mode_name(cfg.fusion.mode) +
             "' is not a context-aware beam mode");
  return detail::run_beam(tm, &lm, x, ctx, cfg);
}

struct ExhaustiveResult {
  Sentence sentence;
  ScoreBreakdown breakdown;
};

// Enumerates every sequence of content tokens with length 1..max_len and
// returns the global argmax of the full fused score. Guarded against
// search spaces beyond 10^7 states.
inline ExhaustiveResult exhaustive_decode(const Model& tm, const Model& lm, const Sentence& x,
                                          const ContextWindow& ctx, const SearchConfig& cfg,
                                          int max_len) {
  cfg.validate();
  if (max_len < 1) fail(errc::invalid_config, "max length must be >= 1");
  const std::size_t v = tm.vocab().size();
  if (std::pow(static_cast<double>(v), static_cast<double>(max_len)) > 1e7)
    fail(errc::search_space_too_large,
         std::to_string(v) + "^" + std::to_string(max_len) + " candidate prefixes");
  const TokenId boundary = tm.vocab().boundary_id();
  std::vector<TokenId> alphabet;
  for (TokenId w = 0; w < v; ++w) {
    if (w != boundary) alphabet.push_back(w);
  }
  if (alphabet.empty()) fail(errc::invalid_config, "vocabulary has no content tokens");

  std::optional<ExhaustiveResult> best;
  Sentence seq;
  auto consider = [&](const Sentence& candidate) {
    ScoreBreakdown bd = context_score(&tm, &lm, candidate, x, ctx, cfg.fusion);
    if (!best || detail::better(bd.total, candidate, best->breakdown.total, best->sentence))
      best = ExhaustiveResult{candidate, bd};
  };
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::size_t> odometer(static_cast<std::size_t>(len), 0);
    for (;;) {
      seq.clear();
      for (std::size_t i : odometer) seq.push_back(alphabet[i]);
      consider(seq);
      std::size_t pos = odometer.size();
      while (pos > 0) {
        --pos;
        if (++odometer[pos] < alphabet.size()) break;
        odometer[pos] = 0;
        if (pos == 0) pos = odometer.size() + 1;  // carried past the top digit
      }
      if (pos > odometer.size()) break;
    }
  }
  return std::move(*best);
}

// Translates a document sentence by sentence. The context window holds
// the most recent target-side sentences, taken either from previously
// generated outputs or from an aligned reference document.
inline Document decode_document(const Model& tm, const Model* lm, const Document& src_doc,
                                const SearchConfig& cfg, ContextSource ctx_source,
                                const Document* reference = nullptr) {
  cfg.validate();
  if (cfg.method != DecodeMethod::beam && lm == nullptr)
    fail(errc::invalid_config, "decoding method requires a language model");
  if (ctx_source == ContextSource::reference) {
    if (reference == nullptr) fail(errc::invalid_config, "reference context requires a reference document");
    if (reference->sentences.size() != src_doc.sentences.size())
      fail(errc::alignment_mismatch,
           std::to_string(src_doc.sentences.size()) + " source vs " +
               std::to_string(reference->sentences.size()) + " reference sentences");
  }
  const std::size_t k = static_cast<std::size_t>(cfg.fusion.context_size);
  Document out;
  for (std::size_t i = 0; i < src_doc.sentences.size(); ++i) {
    const std::vector<Sentence>& pool =
        ctx_source == ContextSource::generated ? out.sentences : reference->sentences;
    ContextWindow window;
    window.max_sentences = k;
    std::size_t take = std::min(k, i);
    window.sentences.assign(pool.begin() + static_cast<std::ptrdiff_t>(i - take),
                            pool.begin() + static_cast<std::ptrdiff_t>(i));
    const Sentence& x = src_doc.sentences[i];
    Sentence translated;
    switch (cfg.method) {
      case DecodeMethod::beam: {
        auto results = beam_search(tm, x, cfg);
        if (results.empty()) fail(errc::invalid_config, "no hypotheses produced");
        translated = results.front().hyp.content();
        break;
      }
      case DecodeMethod::rerank:
        translated = rerank(tm, *lm, x, window, cfg).content();
        break;
      case DecodeMethod::caware: {
        auto results = caware_beam(tm, *lm, x, window, cfg);
        if (results.empty()) fail(errc::invalid_config, "no hypotheses produced");
        translated = results.front().hyp.content();
        break;
      }
    }
    out.sentences.push_back(std::move(translated));
  }
  return out;
}

// Number of distinct prefixes per depth across a ranked hypothesis list;
// a direct view of how much of the beam agrees on its front tokens.
inline std::vector<std::size_t> distinct_prefix_counts(
    const std::vector<ScoredHypothesis>& hypotheses) {
  std::size_t max_len = 0;
  for (const ScoredHypothesis& sh : hypotheses)
    max_len = std::max(max_len, sh.hyp.tokens.size());
  std::vector<std::size_t> counts;
  counts.reserve(max_len);
  for (std::size_t depth = 1; depth <= max_len; ++depth) {
    std::set<Sentence> seen;
    for (const ScoredHypothesis& sh : hypotheses) {
      if (sh.hyp.tokens.size() >= depth)
        seen.insert(Sentence(sh.hyp.tokens.begin(),
                             sh.hyp.tokens.begin() + static_cast<std::ptrdiff_t>(depth)));
    }
    counts.push_back(seen.size());
  }
  return counts;
}

}  // namespace ctxfuse
