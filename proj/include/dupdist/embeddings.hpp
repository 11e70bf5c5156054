#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "numeric_core.hpp"
#include "random.hpp"

namespace dupdist {

inline constexpr double kEmbeddingInitBound = 0.05;

struct EmbeddingTable {
  Tensor matrix;  // (vocab_size, d); row 0 is padding and stays zero
  bool trainable = true;

  std::size_t vocab_size() const noexcept { return matrix.rows(); }
  std::size_t dim() const noexcept { return matrix.cols(); }
};

inline EmbeddingTable random_embeddings(std::size_t vocab_size, std::size_t d, std::uint64_t seed) {
  EmbeddingTable t{Tensor::matrix(vocab_size, d), true};
  Rng rng(derive_seed(seed, {0x656d62ULL}));
  for (std::size_t r = 1; r < vocab_size; ++r) {
    for (double& v : t.matrix.row(r)) v = uniform(rng, -kEmbeddingInitBound, kEmbeddingInitBound);
  }
  return t;
}

// Text vectors, one "word v1 ... vd" per line. Rows missing from the file keep
// their seeded random initialization.
inline EmbeddingTable load_pretrained(std::istream& in, const Vocabulary& vocab, std::size_t d,
                                      std::uint64_t seed) {
  EmbeddingTable t = random_embeddings(vocab.size(), d, seed);
  std::string line;
  std::size_t line_no = 0;
  std::size_t file_dim = 0;
  std::size_t hits = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    values.clear();
    double v;
    while (ss >> v) values.push_back(v);
    if (!ss.eof()) throw Error("pretrained vectors: unparsable value on line " + std::to_string(line_no));
    if (file_dim == 0) {
      file_dim = values.size();
      if (file_dim != d) {
        throw Error("pretrained vectors: dimension " + std::to_string(file_dim) + " does not match configured d=" +
                    std::to_string(d));
      }
    } else if (values.size() != file_dim) {
      throw Error("pretrained vectors: inconsistent dimension on line " + std::to_string(line_no));
    }
    if (!vocab.contains(word)) continue;
    const TokenId id = vocab.id(word);
    if (id == kPadId) continue;
    std::copy(values.begin(), values.end(), t.matrix.row(id).begin());
    ++hits;
  }
  const std::size_t real_words = vocab.size() > 2 ? vocab.size() - 2 : 0;
  if (real_words > 0) {
    log::info("pretrained coverage " + std::to_string(hits) + "/" + std::to_string(real_words) + " (" +
              std::to_string(100.0 * static_cast<double>(hits) / static_cast<double>(real_words)) + "%)");
  }
  return t;
}

inline EmbeddingTable load_pretrained(const std::string& path, const Vocabulary& vocab, std::size_t d,
                                      std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pretrained vectors '" + path + "'");
  return load_pretrained(in, vocab, d, seed);
}

inline Tensor lookup(const Tensor& table, std::span<const TokenId> ids) {
  if (ids.empty()) throw Error("lookup: empty token sequence");
  Tensor out = Tensor::matrix(ids.size(), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) {
      throw Error("lookup: token id " + std::to_string(ids[i]) + " out of range (vocab " +
                  std::to_string(table.rows()) + ")");
    }
    auto src = table.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline Tensor lookup(const EmbeddingTable& table, std::span<const TokenId> ids) {
  return lookup(table.matrix, ids);
}

// Sparse row gradients: only touched rows are stored, ordered by id.
struct EmbeddingGrad {
  std::map<TokenId, std::vector<double>> rows;

  void accumulate(TokenId id, std::span<const double> g) {
    if (id == kPadId) return;
    auto [it, inserted] = rows.try_emplace(id, g.size(), 0.0);
    axpy(1.0, g, it->second);
  }
  void merge(const EmbeddingGrad& other) {
    for (const auto& [id, g] : other.rows) accumulate(id, g);
  }
  void clear() { rows.clear(); }
};

// Scatter d(lookup output) back to the touched rows.
inline void lookup_backward(std::span<const TokenId> ids, const Tensor& d_out, EmbeddingGrad& grad) {
  for (std::size_t i = 0; i < ids.size(); ++i) grad.accumulate(ids[i], d_out.row(i));
}

}  // namespace dupdist
