#pragma once

// Vocabulary, sentence, and document types plus corpus file I/O.
//
// Corpus files are UTF-8 text: one sentence per line, tokens separated by
// single ASCII spaces, documents separated by a blank line. The boundary
// token </s> is structural and may never appear as content.

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctxfuse/errors.hpp"
#include "ctxfuse/util.hpp"

namespace ctxfuse {

using TokenId = std::uint32_t;
using Sentence = std::vector<TokenId>;

struct Document {
  std::vector<Sentence> sentences;
};

struct DocumentCorpus {
  std::vector<Document> documents;
};

// Up to max_sentences preceding sentences, in document order (most recent
// last). Windows never cross a document start.
struct ContextWindow {
  std::vector<Sentence> sentences;
  std::size_t max_sentences = 0;

  bool empty() const { return sentences.empty(); }
};

struct DocPair {
  Document source;
  Document target;
};

struct ParallelDocCorpus {
  std::vector<DocPair> pairs;
};

// Interned symbol table. The reserved boundary token </s> is always
// present; ids are dense and stable in insertion order.
class Vocabulary {
 public:
  static constexpr const char* kBoundarySurface = "</s>";

  Vocabulary() { boundary_ = add(kBoundarySurface); }

  TokenId add(const std::string& surface) {
    auto it = index_.find(surface);
    if (it != index_.end()) return it->second;
    TokenId id = static_cast<TokenId>(symbols_.size());
    symbols_.push_back(surface);
    index_.emplace(surface, id);
    return id;
  }

  std::optional<TokenId> find(const std::string& surface) const {
    auto it = index_.find(surface);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId require(const std::string& surface) const {
    auto id = find(surface);
    if (!id) fail(errc::unknown_token, "'" + surface + "'");
    return *id;
  }

  const std::string& surface(TokenId id) const {
    if (id >= symbols_.size())
      fail(errc::index_out_of_range, "token id " + std::to_string(id));
    return symbols_[id];
  }

  TokenId boundary_id() const { return boundary_; }
  std::size_t size() const { return symbols_.size(); }

  bool operator==(const Vocabulary& other) const {
    return boundary_ == other.boundary_ && symbols_ == other.symbols_;
  }
  bool operator!=(const Vocabulary& other) const { return !(*this == other); }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId boundary_ = 0;
};

namespace detail {

// Shared corpus parse. intern(surface, line_no) resolves or rejects a token.
template <typename Intern>
DocumentCorpus parse_corpus(std::istream& in, Intern&& intern) {
  DocumentCorpus corpus;
  Document current;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.sentences.empty()) {
      corpus.documents.push_back(std::move(current));
      current = Document{};
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    Sentence sent;
    for (const std::string& tok : split_spaces(line)) {
      if (tok.empty())
        fail(errc::corpus_format,
             "empty token (stray space) at line " + std::to_string(line_no));
      if (tok == Vocabulary::kBoundarySurface)
        fail(errc::reserved_token_in_content,
             "'</s>' at line " + std::to_string(line_no));
      sent.push_back(intern(tok, line_no));
    }
    current.sentences.push_back(std::move(sent));
  }
  flush();
  if (corpus.documents.empty()) fail(errc::empty_corpus, "no documents");
  return corpus;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open '" + path + "'");
  return in;
}

}  // namespace detail

struct CorpusWithVocab {
  DocumentCorpus corpus;
  Vocabulary vocab;
};

// Build mode: the vocabulary collects every observed surface plus </s>.
inline CorpusWithVocab read_document_corpus(std::istream& in) {
  CorpusWithVocab out;
  out.corpus = detail::parse_corpus(
      in, [&](const std::string& tok, std::size_t) { return out.vocab.add(tok); });
  return out;
}

// Use mode: unknown surfaces are an error, not an UNK class.
inline DocumentCorpus read_document_corpus(std::istream& in, const Vocabulary& vocab) {
  return detail::parse_corpus(in, [&](const std::string& tok, std::size_t line_no) {
    auto id = vocab.find(tok);
    if (!id)
      fail(errc::unknown_token, "'" + tok + "' at line " + std::to_string(line_no));
    return *id;
  });
}

inline CorpusWithVocab read_document_corpus(const std::string& path) {
  auto in = detail::open_input(path);
  return read_document_corpus(in);
}

inline DocumentCorpus read_document_corpus(const std::string& path, const Vocabulary& vocab) {
  auto in = detail::open_input(path);
  return read_document_corpus(in, vocab);
}

inline void write_document_corpus(std::ostream& out, const DocumentCorpus& corpus,
                                  const Vocabulary& vocab) {
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (d > 0) out << '\n';
    for (const Sentence& sent : corpus.documents[d].sentences) {
      for (std::size_t t = 0; t < sent.size(); ++t) {
        if (t > 0) out << ' ';
        out << vocab.surface(sent[t]);
      }
      out << '\n';
    }
  }
}

// Zips two corpora document by document; sentence counts must agree.
inline ParallelDocCorpus zip_parallel(DocumentCorpus src, DocumentCorpus tgt) {
  if (src.documents.size() != tgt.documents.size())
    fail(errc::doc_count_mismatch,
         std::to_string(src.documents.size()) + " source vs " +
             std::to_string(tgt.documents.size()) + " target documents");
  ParallelDocCorpus out;
  out.pairs.reserve(src.documents.size());
  for (std::size_t k = 0; k < src.documents.size(); ++k) {
    if (src.documents[k].sentences.size() != tgt.documents[k].sentences.size())
      fail(errc::alignment_mismatch,
           "document " + std::to_string(k) + ": " +
               std::to_string(src.documents[k].sentences.size()) + " vs " +
               std::to_string(tgt.documents[k].sentences.size()) + " sentences");
    out.pairs.push_back({std::move(src.documents[k]), std::move(tgt.documents[k])});
  }
  return out;
}

inline ParallelDocCorpus read_parallel_corpus(const std::string& src_path,
                                              const std::string& tgt_path,
                                              const Vocabulary& src_vocab,
                                              const Vocabulary& tgt_vocab) {
  return zip_parallel(read_document_corpus(src_path, src_vocab),
                      read_document_corpus(tgt_path, tgt_vocab));
}

// The min(k, index) sentences immediately preceding index, in order.
inline ContextWindow context_of(const Document& doc, std::size_t index, std::size_t k) {
  if (index >= doc.sentences.size())
    fail(errc::index_out_of_range,
         "sentence index " + std::to_string(index) + " in document of " +
             std::to_string(doc.sentences.size()));
  ContextWindow window;
  window.max_sentences = k;
  std::size_t take = std::min(k, index);
  window.sentences.assign(doc.sentences.begin() + static_cast<std::ptrdiff_t>(index - take),
                          doc.sentences.begin() + static_cast<std::ptrdiff_t>(index));
  return window;
}

}  // namespace ctxfuse
