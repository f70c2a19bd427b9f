#pragma once

#include <cstdint>
#include <filesystem>

#include "calm/corpus.hpp"
#include "calm/eval.hpp"
#include "json.hpp"

namespace calm {

struct SynthConfig {
  int dim = 64;
  int k_true = 2;
  int answers_per_class = 400;
  int tokens_per_answer = 4;
  // Variance of the weakest planted concept over the per-dimension noise variance.
  double snr = 4.0;
  bool noiseless = false;
  int pairs = 200;
  int vocab_per_group = 16;
  double beta = 0.7;
  std::uint64_t seed = 42;
};

/// Planted-concept corpora, an answer-pair suite and the toy LM that scores it.
///
/// Embedding construction (all directions drawn as one orthonormal frame):
///   negative answer = offset + sum_k a_k h_k
///   positive answer = offset + sum_k b_k r_k
///   normal answer   = offset + style_strength * s + sum_k (c_k h_k + e_k r_k)
///   token           = answer + noise_std * N(0, I)
/// Coefficient rows are exactly zero-mean and mutually orthogonal across the
/// answers of a class. a_k and b_k have sample variance 2^(K-1-k); the normal
/// background rows c_k, e_k have unit variance, which keeps the whitened
/// class spectra distinct so each planted direction is identifiable.
///
/// Toy LM: the vocabulary splits into neutral, harmful and refusal groups.
/// Harmful token embeddings and unembeddings share the mean harmful direction
/// sum_k h_k / sqrt(K) (refusal tokens likewise with r_k), so states built
/// from harmful tokens predict further harmful tokens through the planted
/// subspace. Unsafe answers are mostly harmful tokens, safe answers mostly
/// refusal tokens, both after a neutral prompt.
struct SynthData {
  SynthConfig config;
  LabeledCorpus negative;
  LabeledCorpus positive;
  LabeledCorpus normal;
  AnswerPairSet pairs;
  ToyLM lm;
  Matrix harmful;  // d x K
  Matrix refusal;  // d x K
  Vector style;
  Vector offset;
  double noise_std = 0.0;

  nlohmann::json description() const;
};

SynthData synthesize(const SynthConfig& config);

/// Writes <prefix>_{neg,pos,norm}.{emb,json}, <prefix>_pairs.jsonl,
/// <prefix>_lm.json and <prefix>_truth.json.
void write_synth(const SynthData& data, const std::filesystem::path& prefix);

}  // namespace calm
