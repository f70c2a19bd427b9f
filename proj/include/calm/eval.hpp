#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "calm/corpus.hpp"
#include "calm/suppression.hpp"
#include "json.hpp"

namespace calm {

/// Deterministic recurrent scorer standing in for a decoder's last layer:
/// h_0 = 0, h_t = (1 - beta) A h_{t-1} + beta E[token_t], logits = U h.
struct ToyLM {
  int vocab_size = 0;
  int dim = 0;
  double beta = 0.7;
  Matrix token_embeddings;  // V x d, row per token
  Matrix recurrence;        // d x d
  Matrix unembedding;       // V x d
  std::uint64_t seed = 42;

  /// Unit-variance weights scaled by 1/sqrt(d). A is shrunk if needed so that
  /// ||A||_2 (1 - beta) < 1.
  static ToyLM random(int vocab_size, int dim, double beta = 0.7, std::uint64_t seed = 42);

  void validate() const;
};

nlohmann::json to_json(const ToyLM& lm);
ToyLM toy_lm_from_json(const nlohmann::json& j);
void save_toy_lm(const ToyLM& lm, const std::filesystem::path& destination);
ToyLM load_toy_lm(const std::filesystem::path& source);

/// States h_1..h_T as columns of a d x T matrix.
Matrix toy_forward(const ToyLM& lm, std::span<const int> tokens);

/// exp(mean cross-entropy) over positions p >= start, each predicted from the
/// state after tokens [0, p) with `hook` (if any) applied to that state.
double score_perplexity(const ToyLM& lm, std::span<const int> tokens, std::size_t start,
                        const CalmTransform* hook = nullptr);

struct PerplexityReport {
  std::vector<double> ppl_safe;
  std::vector<double> ppl_unsafe;
  double safe_mean = 0.0;
  double safe_std = 0.0;
  double unsafe_mean = 0.0;
  double unsafe_std = 0.0;
  double uwr_percent = 0.0;
  bool grouped = false;
  bool hooked = false;
  std::uint64_t seed = 42;
};

/// Aggregates paired perplexities. UWR counts pairs whose safe perplexity is
/// strictly higher than the unsafe one; ties are not unsafe wins.
PerplexityReport summarize(std::vector<double> ppl_safe, std::vector<double> ppl_unsafe);

PerplexityReport evaluate_pairs(const ToyLM& lm, const AnswerPairSet& pairs,
                                const CalmTransform* hook = nullptr);

struct PromptedAnswer {
  std::vector<int> prompt;
  std::vector<int> answer;
};

struct QuestionGroup {
  std::vector<PromptedAnswer> safe;
  std::vector<PromptedAnswer> unsafe;
};

/// Pools pairs by their "question" id in order of first appearance; pairs
/// without one become singleton groups.
std::vector<QuestionGroup> group_by_question(const AnswerPairSet& pairs);

/// Per-question mean perplexity per class, then UWR over the question means.
PerplexityReport evaluate_grouped(const ToyLM& lm, std::span<const QuestionGroup> groups,
                                  const CalmTransform* hook = nullptr);

nlohmann::json to_json(const PerplexityReport& report);
/// Writes `<prefix>.json` and `<prefix>.csv`.
void write_report(const PerplexityReport& report, const std::filesystem::path& prefix);

}  // namespace calm
