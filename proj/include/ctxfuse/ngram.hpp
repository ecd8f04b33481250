#pragma once

// N-gram document-level language model with interpolated absolute
// discounting, trained on boundary-inserted token streams.
//
//   p_k(w | ctx) = max(c(ctx,w) - d, 0) / c(ctx)
//                + d * types(ctx) / c(ctx) * p_{k-1}(w | ctx')
//
// recursing to a uniform base over the vocabulary, so every token has
// positive probability in every context. An unobserved context falls
// through to the lower order unchanged. Conditioning longer than n-1
// tokens is truncated to the most recent n-1.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxfuse/core.hpp"
#include "ctxfuse/doclm.hpp"
#include "ctxfuse/scorer.hpp"

namespace ctxfuse {

namespace detail {

struct TokenVecHash {
  std::size_t operator()(const std::vector<TokenId>& v) const {
    std::uint64_t h = 1469598103934665603ull;
    for (TokenId t : v) {
      h ^= t;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_u64(out, bits);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    fail(errc::bad_model_file, "truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t lo = read_u32(in);
  std::uint64_t hi = read_u32(in);
  return lo | (hi << 32);
}

inline double read_f64(std::istream& in) {
  std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

class NgramDlm final : public Model {
 public:
  static constexpr int kMaxOrder = 6;
  static constexpr const char* kMagic = "CTXF1";

  NgramDlm(const DocumentCorpus& corpus, Vocabulary vocab, int order, double discount)
      : vocab_(std::move(vocab)), order_(order), discount_(discount) {
    if (order < 1 || order > kMaxOrder)
      fail(errc::invalid_config, "order must be in [1," + std::to_string(kMaxOrder) + "]");
    if (!(discount > 0.0 && discount < 1.0))
      fail(errc::invalid_config, "discount must be in (0,1)");
    if (corpus.documents.empty()) fail(errc::empty_corpus, "no documents to train on");
    tables_.resize(static_cast<std::size_t>(order_));
    for (const Document& doc : corpus.documents) count_stream(insert_boundaries(doc, vocab_.boundary_id()));
  }

  const Vocabulary& vocab() const override { return vocab_; }
  const char* backend_name() const override { return "ngram-lm"; }
  int order() const { return order_; }
  double discount() const { return discount_; }

  NextTokenDistribution next_dist(std::span<const TokenId> conditioning,
                                  std::span<const TokenId> prefix) const override {
    std::vector<TokenId> context(conditioning.begin(), conditioning.end());
    context.insert(context.end(), prefix.begin(), prefix.end());
    NextTokenDistribution dist;
    auto probs = cond_probs(context);
    dist.logp.resize(probs.size());
    for (std::size_t w = 0; w < probs.size(); ++w) dist.logp[w] = std::log(probs[w]);
    return dist;
  }

  // Conditional probabilities for every vocabulary token given the most
  // recent min(order-1, |history|) tokens of history.
  std::vector<double> cond_probs(std::span<const TokenId> history) const {
    const std::size_t v = vocab_.size();
    std::size_t use = std::min<std::size_t>(static_cast<std::size_t>(order_ - 1), history.size());
    std::span<const TokenId> ctx = history.subspan(history.size() - use);
    std::vector<double> probs(v, 1.0 / static_cast<double>(v));
    for (std::size_t k = 1; k <= use + 1; ++k) {
      std::vector<TokenId> sub(ctx.end() - static_cast<std::ptrdiff_t>(k - 1), ctx.end());
      const auto& table = tables_[k - 1];
      auto it = table.find(sub);
      if (it == table.end() || it->second.total == 0) continue;
      const ContextCounts& cc = it->second;
      double total = static_cast<double>(cc.total);
      double backoff = discount_ * static_cast<double>(cc.by_token.size()) / total;
      for (double& p : probs) p *= backoff;
      for (const auto& [w, c] : cc.by_token)
        probs[w] += (static_cast<double>(c) - discount_) / total;
    }
    return probs;
  }

  void save(std::ostream& out) const {
    out.write(kMagic, 5);
    detail::write_u32(out, 1);  // model type: ngram dlm
    detail::write_u32(out, static_cast<std::uint32_t>(vocab_.size()));
    detail::write_u32(out, vocab_.boundary_id());
    for (TokenId id = 0; id < vocab_.size(); ++id) {
      const std::string& s = vocab_.surface(id);
      detail::write_u32(out, static_cast<std::uint32_t>(s.size()));
      out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    detail::write_u32(out, static_cast<std::uint32_t>(order_));
    detail::write_f64(out, discount_);
    for (int k = 1; k <= order_; ++k) {
      // entries sorted by (context, token) for byte-identical output
      std::map<std::vector<TokenId>, std::uint64_t> sorted;
      for (const auto& [ctx, cc] : tables_[static_cast<std::size_t>(k - 1)]) {
        for (const auto& [w, c] : cc.by_token) {
          std::vector<TokenId> key(ctx);
          key.push_back(w);
          sorted.emplace(std::move(key), c);
        }
      }
      detail::write_u64(out, sorted.size());
      for (const auto& [key, c] : sorted) {
        for (TokenId t : key) detail::write_u32(out, t);
        detail::write_u64(out, c);
      }
    }
    if (!out) fail(errc::io_error, "write failed");
  }

  static NgramDlm load(std::istream& in) {
    char magic[5];
    if (!in.read(magic, 5) || std::string(magic, 5) != kMagic)
      fail(errc::bad_model_file, "bad magic (expected CTXF1)");
    if (detail::read_u32(in) != 1) fail(errc::bad_model_file, "unknown model type");
    std::uint32_t vsize = detail::read_u32(in);
    std::uint32_t boundary = detail::read_u32(in);
    if (vsize < 2) fail(errc::bad_model_file, "vocabulary too small");
    Vocabulary vocab;
    for (std::uint32_t id = 0; id < vsize; ++id) {
      std::uint32_t len = detail::read_u32(in);
      std::string s(len, '\0');
      if (len > 0 && !in.read(s.data(), len)) fail(errc::bad_model_file, "truncated");
      if (id == 0) {
        if (s != Vocabulary::kBoundarySurface)
          fail(errc::bad_model_file, "symbol 0 must be '</s>'");
        continue;  // constructor already interned it
      }
      if (vocab.add(s) != id) fail(errc::bad_model_file, "duplicate symbol '" + s + "'");
    }
    if (boundary != vocab.boundary_id()) fail(errc::bad_model_file, "boundary id mismatch");
    std::uint32_t order = detail::read_u32(in);
    double discount = detail::read_f64(in);
    if (order < 1 || order > kMaxOrder) fail(errc::bad_model_file, "order out of range");
    if (!(discount > 0.0 && discount < 1.0)) fail(errc::bad_model_file, "discount out of range");
    NgramDlm model(std::move(vocab), static_cast<int>(order), discount);
    for (std::uint32_t k = 1; k <= order; ++k) {
      std::uint64_t entries = detail::read_u64(in);
      auto& table = model.tables_[k - 1];
      for (std::uint64_t e = 0; e < entries; ++e) {
        std::vector<TokenId> key(k);
        for (auto& t : key) {
          t = detail::read_u32(in);
          if (t >= vsize) fail(errc::bad_model_file, "token id out of range");
        }
        std::uint64_t count = detail::read_u64(in);
        TokenId w = key.back();
        key.pop_back();
        ContextCounts& cc = table[key];
        cc.total += count;
        cc.by_token[w] += count;
      }
    }
    return model;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::io_error, "cannot open '" + path + "' for writing");
    save(out);
  }

  static NgramDlm load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::io_error, "cannot open '" + path + "'");
    return load(in);
  }

 private:
  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> by_token;
  };
  using Table = std::unordered_map<std::vector<TokenId>, ContextCounts, detail::TokenVecHash>;

  // Deserialization shell; tables filled by load().
  NgramDlm(Vocabulary vocab, int order, double discount)
      : vocab_(std::move(vocab)), order_(order), discount_(discount) {
    tables_.resize(static_cast<std::size_t>(order_));
  }

  void count_stream(const std::vector<TokenId>& stream) {
    for (std::size_t k = 1; k <= static_cast<std::size_t>(order_); ++k) {
      if (stream.size() < k) break;
      for (std::size_t i = k - 1; i < stream.size(); ++i) {
        std::vector<TokenId> ctx(stream.begin() + static_cast<std::ptrdiff_t>(i - k + 1),
                                 stream.begin() + static_cast<std::ptrdiff_t>(i));
        ContextCounts& cc = tables_[k - 1][ctx];
        cc.total += 1;
        cc.by_token[stream[i]] += 1;
      }
    }
  }

  Vocabulary vocab_;
  int order_;
  double discount_;
  std::vector<Table> tables_;
};

inline NgramDlm ngram_train(const DocumentCorpus& corpus, const Vocabulary& vocab,
                            int order, double discount = 0.75) {
  return NgramDlm(corpus, vocab, order, discount);
}

}  // namespace ctxfuse
