#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "calm/corpus.hpp"
#include "calm/suppression.hpp"

namespace calm {

/// Per-token activations of one answer along one aligned axis.
struct AxisTrace {
  int axis = 0;
  std::int64_t answer_id = 0;
  std::vector<double> values;
};

/// Unmasked aligned coordinates Q W (x_t - mu) for every token of every
/// answer, over `axes` (default: all 2K concept axes). Output is grouped by
/// answer, then axis.
std::vector<AxisTrace> axis_activations(const CalmTransform& transform, const LabeledCorpus& tokens,
                                        std::vector<int> axes = {});

enum class RankMode { signed_score, absolute };

struct RankedAnswer {
  std::int64_t answer_id = 0;
  double score = 0.0;
};

/// Answers ranked by their coordinate on `axis`, descending by score
/// (signed) or |score| (absolute); ties keep ascending answer id. `n` larger
/// than the corpus returns the full ranking.
std::vector<RankedAnswer> top_aligned_answers(const CalmTransform& transform,
                                              const LabeledCorpus& answers, int axis, int n,
                                              RankMode mode = RankMode::signed_score);

/// Long-form CSV: answer_id,axis,token_index,value.
void write_traces_csv(const std::vector<AxisTrace>& traces, const std::filesystem::path& destination);

}  // namespace calm
