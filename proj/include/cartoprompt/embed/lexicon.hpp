#pragma once

// Word-vector table, tokenizer and averaged text embeddings.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cartoprompt/errors.hpp"

namespace cartoprompt::embed {

using Vector = std::vector<double>;

struct Lexicon {
  std::size_t dimension = 0;
  std::unordered_map<std::string, Vector> vectors;

  std::size_t size() const { return vectors.size(); }
  const Vector* find(const std::string& token) const {
    auto it = vectors.find(token);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

namespace detail {

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace detail

// Text format: one `token v1 ... vd` per line. An optional word2vec style header
// line `count dimension` is recognised and skipped. Tokens are lowercased; on a
// case-folding collision the first entry wins.
inline Lexicon read_word_vectors(std::istream& in) {
  Lexicon lex;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (n == 1 && fields.size() == 2) {
      double a = 0, b = 0;
      if (detail::parse_double(fields[0], a) && detail::parse_double(fields[1], b)) continue;
    }
    const std::size_t dim = fields.size() - 1;
    if (dim == 0) throw FormatError("word vector line has no components", n);
    if (lex.dimension == 0) lex.dimension = dim;
    if (dim != lex.dimension)
      throw FormatError("expected " + std::to_string(lex.dimension) + " components, got " + std::to_string(dim), n);
    Vector v(dim);
    for (std::size_t k = 0; k < dim; ++k)
      if (!detail::parse_double(fields[k + 1], v[k]))
        throw FormatError("invalid number '" + std::string(fields[k + 1]) + "'", n);
    lex.vectors.try_emplace(detail::lower_ascii(fields[0]), std::move(v));
  }
  return lex;
}

inline Lexicon load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word vectors: " + path);
  return read_word_vectors(in);
}

// Lowercase; split on every byte that is not an ASCII letter or digit, except that
// bytes >= 0x80 (UTF-8 sequences) stay inside tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct TextEmbedding {
  Vector vector;
  std::size_t in_vocabulary = 0;
  std::size_t out_of_vocabulary = 0;
  bool all_oov() const { return in_vocabulary == 0; }
};

// Mean of the in-vocabulary token vectors. Tokens are summed in sorted order so the
// result depends only on the token multiset.
inline TextEmbedding embed_text(const Lexicon& lex, std::string_view text) {
  auto tokens = tokenize(text);
  std::sort(tokens.begin(), tokens.end());
  TextEmbedding out;
  out.vector.assign(lex.dimension, 0.0);
  for (const auto& t : tokens) {
    const Vector* v = lex.find(t);
    if (!v) {
      ++out.out_of_vocabulary;
      continue;
    }
    ++out.in_vocabulary;
    for (std::size_t k = 0; k < lex.dimension; ++k) out.vector[k] += (*v)[k];
  }
  if (out.in_vocabulary > 0)
    for (double& x : out.vector) x /= static_cast<double>(out.in_vocabulary);
  return out;
}

}  // namespace cartoprompt::embed
