#pragma once

// Boundary-aware document-level LM semantics: boundary insertion, context
// sequence construction, and the conditional/unconditional sentence
// probabilities computed over any LM backend.
//
// A document stream carries </s> at the start, between every sentence
// pair, and at the end, so the LM can score both where sentences begin
// and where they close.

#include <span>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/scorer.hpp"

namespace ctxfuse {

inline std::vector<TokenId> insert_boundaries(const Document& doc, TokenId boundary) {
  std::vector<TokenId> stream;
  stream.push_back(boundary);
  for (const Sentence& sent : doc.sentences) {
    stream.insert(stream.end(), sent.begin(), sent.end());
    stream.push_back(boundary);
  }
  return stream;
}

// </s> · s_1 · </s> · ... · s_k · </s>; the single boundary token for an
// empty window. The trailing </s> doubles as the opening boundary of the
// target, so no extra boundary precedes it.
inline std::vector<TokenId> build_context_sequence(const ContextWindow& ctx,
                                                   TokenId boundary) {
  std::vector<TokenId> seq;
  seq.push_back(boundary);
  for (const Sentence& sent : ctx.sentences) {
    seq.insert(seq.end(), sent.begin(), sent.end());
    seq.push_back(boundary);
  }
  return seq;
}

// y_1 ... y_T </s>: the closing boundary is part of what gets scored.
inline std::vector<TokenId> target_with_eos(const Sentence& y, TokenId boundary) {
  std::vector<TokenId> seq(y);
  seq.push_back(boundary);
  return seq;
}

// log p(y): the target scored against the bare boundary, including the
// probability that the sentence closes.
inline double logp_uncond(const Model& lm, const Sentence& y) {
  if (y.empty()) fail(errc::empty_input, "empty sentence");
  TokenId b = lm.vocab().boundary_id();
  return sequence_logp(lm, std::vector<TokenId>{b}, target_with_eos(y, b));
}

// log p(y | ctx): the target scored after the concatenated context
// sequence. An empty window reproduces logp_uncond bit-exactly.
inline double logp_cond(const Model& lm, const Sentence& y, const ContextWindow& ctx) {
  if (y.empty()) fail(errc::empty_input, "empty sentence");
  TokenId b = lm.vocab().boundary_id();
  return sequence_logp(lm, build_context_sequence(ctx, b), target_with_eos(y, b));
}

}  // namespace ctxfuse
