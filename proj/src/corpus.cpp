#include "calm/corpus.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "calm/error.hpp"
#include "calm/kernels.hpp"
#include "json.hpp"

namespace calm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kModule = "corpus";

fs::path strip_extension(const fs::path& p) {
  const auto ext = p.extension();
  if (ext == ".emb" || ext == ".json") return fs::path(p).replace_extension();
  return p;
}

fs::path with_suffix(const fs::path& prefix, const char* suffix) {
  return fs::path(prefix.string() + suffix);
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

}  // namespace

std::string_view to_string(ConceptClass label) {
  switch (label) {
    case ConceptClass::negative: return "negative";
    case ConceptClass::positive: return "positive";
    case ConceptClass::normal: return "normal";
  }
  return "normal";
}

std::string_view to_string(Granularity granularity) {
  return granularity == Granularity::token ? "token" : "answer";
}

ConceptClass parse_concept_class(std::string_view text) {
  if (text == "negative") return ConceptClass::negative;
  if (text == "positive") return ConceptClass::positive;
  if (text == "normal") return ConceptClass::normal;
  throw Error(kModule, "unknown class '" + std::string(text) + "'");
}

Granularity parse_granularity(std::string_view text) {
  if (text == "token") return Granularity::token;
  if (text == "answer") return Granularity::answer;
  throw Error(kModule, "unknown granularity '" + std::string(text) + "'");
}

void validate(const LabeledCorpus& corpus) {
  if (corpus.dim() < 1) throw Error(kModule, "dimension must be positive");
  for (Index n = 0; n < corpus.count(); ++n) {
    for (Index i = 0; i < corpus.dim(); ++i) {
      if (!std::isfinite(corpus.vectors(i, n))) {
        std::ostringstream msg;
        msg << "non-finite value at vector " << n << ", component " << i;
        throw Error(kModule, msg.str());
      }
    }
  }
  if (!corpus.answer_ids.empty() &&
      static_cast<Index>(corpus.answer_ids.size()) != corpus.count()) {
    throw Error(kModule, "answer_ids length does not match vector count");
  }
  if (corpus.granularity == Granularity::token) {
    if (corpus.answer_ids.empty() && corpus.count() > 0)
      throw Error(kModule, "token-granularity corpus requires answer_ids");
    std::unordered_set<std::int64_t> closed;
    for (std::size_t n = 0; n < corpus.answer_ids.size(); ++n) {
      const auto id = corpus.answer_ids[n];
      if (n > 0 && id == corpus.answer_ids[n - 1]) continue;
      if (!closed.insert(id).second)
        throw Error(kModule, "tokens of answer " + std::to_string(id) + " are not contiguous");
    }
  }
  if (!corpus.text_refs.empty()) {
    const auto answers = corpus.granularity == Granularity::token
                             ? answer_offsets(corpus).size() - 1
                             : static_cast<std::size_t>(corpus.count());
    if (corpus.text_refs.size() != answers)
      throw Error(kModule, "text_refs must hold one entry per answer");
  }
}

std::vector<Index> answer_offsets(const LabeledCorpus& corpus) {
  std::vector<Index> offsets{0};
  for (Index n = 1; n < corpus.count(); ++n) {
    if (corpus.answer_id(n) != corpus.answer_id(n - 1)) offsets.push_back(n);
  }
  if (corpus.count() > 0) offsets.push_back(corpus.count());
  return offsets;
}

void write_corpus(const LabeledCorpus& corpus, const fs::path& destination) {
  validate(corpus);
  const Index d = corpus.dim();
  const Index count = corpus.count();
  std::vector<std::uint32_t> payload(static_cast<std::size_t>(d * count));
  for (Index n = 0; n < count; ++n) {
    for (Index i = 0; i < d; ++i) {
      const double value = corpus.vectors(i, n);
      if (std::abs(value) > std::numeric_limits<float>::max()) {
        std::ostringstream msg;
        msg << "value at vector " << n << ", component " << i << " overflows f32";
        throw Error(kModule, msg.str());
      }
      payload[static_cast<std::size_t>(n * d + i)] =
          to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(value)));
    }
  }

  json manifest;
  manifest["dim"] = d;
  manifest["count"] = count;
  manifest["class"] = to_string(corpus.label);
  manifest["granularity"] = to_string(corpus.granularity);
  if (!corpus.answer_ids.empty()) manifest["answer_ids"] = corpus.answer_ids;
  if (!corpus.text_refs.empty()) manifest["text_refs"] = corpus.text_refs;

  const fs::path prefix = strip_extension(destination);
  {
    std::ofstream out(with_suffix(prefix, ".emb"), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(kModule, "cannot open " + with_suffix(prefix, ".emb").string() + " for writing");
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(std::uint32_t)));
    if (!out) throw Error(kModule, "write failed for " + with_suffix(prefix, ".emb").string());
  }
  std::ofstream out(with_suffix(prefix, ".json"), std::ios::trunc);
  if (!out) throw Error(kModule, "cannot open " + with_suffix(prefix, ".json").string() + " for writing");
  out << manifest.dump(2) << '\n';
  if (!out) throw Error(kModule, "write failed for " + with_suffix(prefix, ".json").string());
}

LabeledCorpus read_corpus(const fs::path& source) {
  const fs::path prefix = strip_extension(source);
  const fs::path manifest_path = with_suffix(prefix, ".json");
  const fs::path payload_path = with_suffix(prefix, ".emb");

  std::ifstream manifest_in(manifest_path);
  if (!manifest_in) throw Error(kModule, "cannot open " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(manifest_in);
  } catch (const json::exception& e) {
    throw Error(kModule, "corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object()) throw Error(kModule, "corrupt manifest: expected a JSON object");

  std::string missing;
  for (const char* field : {"dim", "count", "class", "granularity"}) {
    if (!manifest.contains(field)) missing += (missing.empty() ? "" : ", ") + std::string(field);
  }
  if (!missing.empty()) throw Error(kModule, "manifest missing field(s): " + missing);

  LabeledCorpus corpus;
  Index d = 0;
  Index count = 0;
  try {
    d = manifest.at("dim").get<Index>();
    count = manifest.at("count").get<Index>();
    corpus.label = parse_concept_class(manifest.at("class").get<std::string>());
    corpus.granularity = parse_granularity(manifest.at("granularity").get<std::string>());
    if (manifest.contains("answer_ids"))
      corpus.answer_ids = manifest.at("answer_ids").get<std::vector<std::int64_t>>();
    if (manifest.contains("text_refs"))
      corpus.text_refs = manifest.at("text_refs").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(kModule, std::string("corrupt manifest: ") + e.what());
  }
  if (d < 1 || count < 0) throw Error(kModule, "corrupt manifest: dim must be >= 1 and count >= 0");

  std::ifstream payload_in(payload_path, std::ios::binary | std::ios::ate);
  if (!payload_in) throw Error(kModule, "cannot open " + payload_path.string());
  const auto bytes = static_cast<std::uintmax_t>(payload_in.tellg());
  const auto stride = static_cast<std::uintmax_t>(4 * d);
  if (bytes % stride != 0) throw Error(kModule, "payload/dimension mismatch");
  if (bytes / stride != static_cast<std::uintmax_t>(count)) throw Error(kModule, "payload/count mismatch");

  std::vector<std::uint32_t> payload(static_cast<std::size_t>(d * count));
  payload_in.seekg(0);
  payload_in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
  if (!payload_in) throw Error(kModule, "read failed for " + payload_path.string());

  corpus.vectors.resize(d, count);
  for (Index n = 0; n < count; ++n)
    for (Index i = 0; i < d; ++i)
      corpus.vectors(i, n) = static_cast<double>(
          std::bit_cast<float>(to_little_endian(payload[static_cast<std::size_t>(n * d + i)])));

  validate(corpus);
  return corpus;
}

LabeledCorpus mean_pool_answers(const LabeledCorpus& corpus) {
  if (corpus.granularity != Granularity::token)
    throw Error(kModule, "mean_pool_answers expects a token-granularity corpus");
  if (corpus.answer_ids.empty()) throw Error(kModule, "mean_pool_answers requires answer_ids");
  if (corpus.count() == 0) throw Error(kModule, "cannot pool an empty corpus");
  const auto offsets = answer_offsets(corpus);

  LabeledCorpus pooled;
  pooled.label = corpus.label;
  pooled.granularity = Granularity::answer;
  pooled.vectors = kernels::parallel::group_means(corpus.vectors, offsets);
  pooled.answer_ids.reserve(offsets.size() - 1);
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g)
    pooled.answer_ids.push_back(corpus.answer_ids[static_cast<std::size_t>(offsets[g])]);
  pooled.text_refs = corpus.text_refs;
  return pooled;
}

Matrix stack_vectors(const std::vector<const LabeledCorpus*>& corpora) {
  if (corpora.empty()) throw Error(kModule, "nothing to stack");
  const Index d = corpora.front()->dim();
  Index total = 0;
  for (const auto* c : corpora) {
    if (c->dim() != d) throw Error(kModule, "corpora disagree on dimension");
    total += c->count();
  }
  Matrix out(d, total);
  Index at = 0;
  for (const auto* c : corpora) {
    out.middleCols(at, c->count()) = c->vectors;
    at += c->count();
  }
  return out;
}

namespace {

std::vector<int> token_list(const json& line, const char* key, std::size_t line_no) {
  if (!line.contains(key) || !line.at(key).is_array())
    throw Error(kModule, "pairs line " + std::to_string(line_no) + ": missing array field '" + key + "'");
  try {
    return line.at(key).get<std::vector<int>>();
  } catch (const json::exception&) {
    throw Error(kModule, "pairs line " + std::to_string(line_no) + ": field '" + key + "' must hold integers");
  }
}

}  // namespace

AnswerPairSet read_pairs(const fs::path& source) {
  std::ifstream in(source);
  if (!in) throw Error(kModule, "cannot open " + source.string());
  AnswerPairSet pairs;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json line;
    try {
      line = json::parse(text);
    } catch (const json::exception&) {
      throw Error(kModule, "pairs line " + std::to_string(line_no) + ": malformed JSON");
    }
    if (!line.is_object()) throw Error(kModule, "pairs line " + std::to_string(line_no) + ": expected an object");
    AnswerPair pair;
    pair.prompt = token_list(line, "prompt", line_no);
    pair.safe = token_list(line, "safe", line_no);
    pair.unsafe = token_list(line, "unsafe", line_no);
    if (pair.safe.empty() || pair.unsafe.empty())
      throw Error(kModule, "pairs line " + std::to_string(line_no) + ": answers must be non-empty");
    if (line.contains("question")) {
      if (!line.at("question").is_number_integer())
        throw Error(kModule, "pairs line " + std::to_string(line_no) + ": 'question' must be an integer");
      pair.question = line.at("question").get<std::int64_t>();
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void write_pairs(const AnswerPairSet& pairs, const fs::path& destination) {
  std::ofstream out(destination, std::ios::trunc);
  if (!out) throw Error(kModule, "cannot open " + destination.string() + " for writing");
  for (const auto& pair : pairs) {
    json line = {{"prompt", pair.prompt}, {"safe", pair.safe}, {"unsafe", pair.unsafe}};
    if (pair.question) line["question"] = *pair.question;
    out << line.dump() << '\n';
  }
  if (!out) throw Error(kModule, "write failed for " + destination.string());
}

void validate_pairs(const AnswerPairSet& pairs, int vocab_size) {
  auto check = [&](const std::vector<int>& tokens, std::size_t index, const char* field) {
    for (int t : tokens) {
      if (t < 0 || t >= vocab_size) {
        throw Error(kModule, "pair " + std::to_string(index) + ": " + field + " token " +
                                 std::to_string(t) + " outside vocabulary of size " +
                                 std::to_string(vocab_size));
      }
    }
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].safe.empty() || pairs[i].unsafe.empty())
      throw Error(kModule, "pair " + std::to_string(i) + ": answers must be non-empty");
    check(pairs[i].prompt, i, "prompt");
    check(pairs[i].safe, i, "safe");
    check(pairs[i].unsafe, i, "unsafe");
  }
}

}  // namespace calm
