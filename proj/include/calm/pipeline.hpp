#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "calm/alignment.hpp"
#include "calm/artifact.hpp"
#include "calm/corpus.hpp"
#include "calm/whitening.hpp"
#include "json.hpp"

namespace calm {

/// Which embeddings the whitening is fitted on. `automatic` uses the token
/// union when all three corpora are token-granularity, else answers.
enum class WhitenOn { automatic, token, answer };

WhitenOn parse_whiten_on(std::string_view text);

struct FitConfig {
  int k_neg = 1;
  int k_pos = 1;
  WhiteningMethod method = WhiteningMethod::zca;
  double eig_floor = kDefaultEigFloor;
  bool align = true;
  WhitenOn whiten_on = WhitenOn::automatic;
  AlignmentConfig alignment;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct FitResult {
  ModelArtifact artifact;
  std::vector<StageTiming> timings;
  nlohmann::json report;
};

/// Offline fit: whitening on the union of the corpora, answer pooling,
/// normal-mean deflation, per-class SVD concepts, alignment (unless
/// disabled) and composition of the inference transform.
FitResult fit_calm(const LabeledCorpus& negative, const LabeledCorpus& positive,
                   const LabeledCorpus& normal, const FitConfig& config);

}  // namespace calm
