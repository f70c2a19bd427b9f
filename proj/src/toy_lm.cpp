#include "calm/eval.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include <Eigen/SVD>

#include "calm/error.hpp"

namespace calm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kModule = "eval";

Matrix gaussian(Index rows, Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * normal(rng);
  return m;
}

double spectral_norm(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows, Index expect_rows, Index expect_cols, const char* name) {
  if (!rows.is_array() || static_cast<Index>(rows.size()) != expect_rows)
    throw Error(kModule, std::string("toy LM field '") + name + "' has the wrong shape");
  Matrix m(expect_rows, expect_cols);
  for (Index i = 0; i < expect_rows; ++i) {
    const auto row = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Index>(row.size()) != expect_cols)
      throw Error(kModule, std::string("toy LM field '") + name + "' has the wrong shape");
    for (Index j = 0; j < expect_cols; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  return m;
}

}  // namespace

ToyLM ToyLM::random(int vocab_size, int dim, double beta, std::uint64_t seed) {
  if (vocab_size < 1 || dim < 1) throw Error(kModule, "toy LM needs positive vocab size and dimension");
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(kModule, "beta must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  ToyLM lm;
  lm.vocab_size = vocab_size;
  lm.dim = dim;
  lm.beta = beta;
  lm.seed = seed;
  lm.token_embeddings = gaussian(vocab_size, dim, scale, rng);
  lm.recurrence = gaussian(dim, dim, scale, rng);
  lm.unembedding = gaussian(vocab_size, dim, scale, rng);
  const double contraction = spectral_norm(lm.recurrence) * (1.0 - beta);
  if (contraction >= 0.95) lm.recurrence *= 0.95 / contraction;
  lm.validate();
  return lm;
}

void ToyLM::validate() const {
  if (vocab_size < 1 || dim < 1) throw Error(kModule, "toy LM needs positive vocab size and dimension");
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(kModule, "beta must lie in (0, 1]");
  if (token_embeddings.rows() != vocab_size || token_embeddings.cols() != dim ||
      unembedding.rows() != vocab_size || unembedding.cols() != dim || recurrence.rows() != dim ||
      recurrence.cols() != dim)
    throw Error(kModule, "toy LM weight shapes disagree with vocab_size/dim");
  if (!token_embeddings.allFinite() || !unembedding.allFinite() || !recurrence.allFinite())
    throw Error(kModule, "toy LM weights must be finite");
  if (!(spectral_norm(recurrence) * (1.0 - beta) < 1.0))
    throw Error(kModule, "recurrence is not contractive: ||A||_2 (1 - beta) >= 1");
}

json to_json(const ToyLM& lm) {
  return {{"vocab_size", lm.vocab_size},
          {"dim", lm.dim},
          {"beta", lm.beta},
          {"seed", lm.seed},
          {"token_embeddings", matrix_json(lm.token_embeddings)},
          {"recurrence", matrix_json(lm.recurrence)},
          {"unembedding", matrix_json(lm.unembedding)}};
}

ToyLM toy_lm_from_json(const json& j) {
  ToyLM lm;
  try {
    lm.vocab_size = j.at("vocab_size").get<int>();
    lm.dim = j.at("dim").get<int>();
    lm.beta = j.at("beta").get<double>();
    lm.seed = j.value("seed", std::uint64_t{42});
    lm.token_embeddings = matrix_from_json(j.at("token_embeddings"), lm.vocab_size, lm.dim, "token_embeddings");
    lm.recurrence = matrix_from_json(j.at("recurrence"), lm.dim, lm.dim, "recurrence");
    lm.unembedding = matrix_from_json(j.at("unembedding"), lm.vocab_size, lm.dim, "unembedding");
  } catch (const json::exception& e) {
    throw Error(kModule, std::string("malformed toy LM: ") + e.what());
  }
  lm.validate();
  return lm;
}

void save_toy_lm(const ToyLM& lm, const fs::path& destination) {
  std::ofstream out(destination, std::ios::trunc);
  if (!out) throw Error(kModule, "cannot open " + destination.string() + " for writing");
  out << to_json(lm).dump() << '\n';
}

ToyLM load_toy_lm(const fs::path& source) {
  std::ifstream in(source);
  if (!in) throw Error(kModule, "cannot open " + source.string());
  try {
    return toy_lm_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(kModule, std::string("malformed toy LM: ") + e.what());
  }
}

Matrix toy_forward(const ToyLM& lm, std::span<const int> tokens) {
  Matrix states(lm.dim, static_cast<Index>(tokens.size()));
  Vector h = Vector::Zero(lm.dim);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int token = tokens[t];
    if (token < 0 || token >= lm.vocab_size)
      throw Error(kModule, "token " + std::to_string(token) + " at position " + std::to_string(t) +
                               " is outside the vocabulary");
    Vector next = lm.beta * lm.token_embeddings.row(token).transpose();
    next.noalias() += (1.0 - lm.beta) * (lm.recurrence * h);
    h = std::move(next);
    states.col(static_cast<Index>(t)) = h;
  }
  return states;
}

double score_perplexity(const ToyLM& lm, std::span<const int> tokens, std::size_t start,
                        const CalmTransform* hook) {
  if (tokens.size() < 2) throw Error(kModule, "scoring needs at least 2 tokens");
  if (start >= tokens.size()) throw Error(kModule, "answer start lies beyond the sequence");
  if (hook && hook->dim() != lm.dim)
    throw Error(kModule, "hook dimension " + std::to_string(hook->dim()) + " does not match toy LM dimension " +
                             std::to_string(lm.dim));

  const Matrix states = toy_forward(lm, tokens);
  double total = 0.0;
  Vector logits(lm.vocab_size);
  for (std::size_t p = start; p < tokens.size(); ++p) {
    const Vector previous = p == 0 ? Vector::Zero(lm.dim) : Vector(states.col(static_cast<Index>(p) - 1));
    if (hook) {
      logits.noalias() = lm.unembedding * hook->apply(previous);
    } else {
      logits.noalias() = lm.unembedding * previous;
    }
    const double peak = logits.maxCoeff();
    const double log_normalizer = peak + std::log((logits.array() - peak).exp().sum());
    total += log_normalizer - logits(tokens[p]);
  }
  return std::exp(total / static_cast<double>(tokens.size() - start));
}

}  // namespace calm
