#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "calm/linalg.hpp"

namespace calm {

enum class ConceptClass { negative, positive, normal };
enum class Granularity { token, answer };

std::string_view to_string(ConceptClass label);
std::string_view to_string(Granularity granularity);
ConceptClass parse_concept_class(std::string_view text);
Granularity parse_granularity(std::string_view text);

/// A batch of embeddings from one class. `vectors` is d x N with one column
/// per embedding. Token-granularity corpora carry `answer_ids` grouping each
/// answer's tokens contiguously; `text_refs` holds one handle per answer.
struct LabeledCorpus {
  ConceptClass label = ConceptClass::normal;
  Granularity granularity = Granularity::answer;
  Matrix vectors;
  std::vector<std::int64_t> answer_ids;
  std::vector<std::string> text_refs;

  Index dim() const { return vectors.rows(); }
  Index count() const { return vectors.cols(); }

  /// Answer identifier of column `n` (its index when no ids are stored).
  std::int64_t answer_id(Index n) const {
    return answer_ids.empty() ? static_cast<std::int64_t>(n) : answer_ids[static_cast<std::size_t>(n)];
  }
};

/// Throws calm::Error("corpus", ...) on the first violated invariant.
void validate(const LabeledCorpus& corpus);

/// Column offsets delimiting each contiguous answer group; size = answers + 1.
std::vector<Index> answer_offsets(const LabeledCorpus& corpus);

/// Writes `<prefix>.emb` (little-endian f32, column per vector) and
/// `<prefix>.json`. A trailing `.emb` or `.json` on `destination` is ignored.
void write_corpus(const LabeledCorpus& corpus, const std::filesystem::path& destination);
LabeledCorpus read_corpus(const std::filesystem::path& source);

/// Averages the tokens of each answer; output order is first appearance.
LabeledCorpus mean_pool_answers(const LabeledCorpus& corpus);

/// Column-wise concatenation of corpora sharing a dimension.
Matrix stack_vectors(const std::vector<const LabeledCorpus*>& corpora);

struct AnswerPair {
  std::vector<int> prompt;
  std::vector<int> safe;
  std::vector<int> unsafe;
  // Pairs sharing a question id are pooled by grouped evaluation.
  std::optional<std::int64_t> question;
};

using AnswerPairSet = std::vector<AnswerPair>;

/// JSON-lines, one {"prompt":[..],"safe":[..],"unsafe":[..]} object per line.
AnswerPairSet read_pairs(const std::filesystem::path& source);
void write_pairs(const AnswerPairSet& pairs, const std::filesystem::path& destination);
/// Checks non-empty answers and token ids within [0, vocab_size).
void validate_pairs(const AnswerPairSet& pairs, int vocab_size);

}  // namespace calm
