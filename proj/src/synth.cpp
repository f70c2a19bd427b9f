#include "calm/synth.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include <Eigen/QR>

#include "calm/error.hpp"

namespace calm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kModule = "synth";

constexpr double kOffsetNorm = 3.0;
constexpr double kStyleStrength = 2.0;
constexpr double kBackgroundVariance = 1.0;
constexpr double kEmbedGain = 3.0;
constexpr double kUnembedGain = 1.5;
constexpr double kTokenSpread = 0.5;

Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

Matrix orthonormal_frame(Index d, Index count, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(d, count, rng));
  return qr.householderQ() * Matrix::Identity(d, count);
}

// K x n coefficients: rows exactly centered and mutually orthogonal, row k
// with sample variance variances(k).
Matrix planted_coefficients(const Vector& variances, Index n, std::mt19937_64& rng) {
  const Index k = variances.size();
  Matrix draws = gaussian(n, k, rng);
  draws.rowwise() -= draws.colwise().mean();
  Eigen::HouseholderQR<Matrix> qr(draws);
  const Matrix basis = qr.householderQ() * Matrix::Identity(n, k);
  Matrix coef = basis.transpose();
  for (Index r = 0; r < k; ++r) {
    coef.row(r).array() -= coef.row(r).mean();
    coef.row(r) *= std::sqrt(static_cast<double>(n) * variances(r)) / coef.row(r).norm();
  }
  return coef;
}

LabeledCorpus token_corpus(ConceptClass label, const Matrix& answers, int tokens, double noise_std,
                           std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledCorpus c;
  c.label = label;
  c.granularity = Granularity::token;
  c.vectors.resize(answers.rows(), answers.cols() * tokens);
  for (Index a = 0; a < answers.cols(); ++a) {
    for (int t = 0; t < tokens; ++t) {
      const Index col = a * tokens + t;
      for (Index i = 0; i < answers.rows(); ++i)
        c.vectors(i, col) = answers(i, a) + (noise_std > 0.0 ? noise_std * normal(rng) : 0.0);
      c.answer_ids.push_back(a);
    }
    c.text_refs.push_back("synthetic:" + std::string(to_string(label)) + ":" + std::to_string(a));
  }
  return c;
}

json matrix_columns(const Matrix& m) {
  json cols = json::array();
  for (Index j = 0; j < m.cols(); ++j) cols.push_back(std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows()));
  return cols;
}

}  // namespace

SynthData synthesize(const SynthConfig& config) {
  const int d = config.dim;
  const int k = config.k_true;
  if (d < 4) throw Error(kModule, "dim must be at least 4");
  if (k < 1) throw Error(kModule, "k_true must be at least 1");
  if (2 * k >= d) throw Error(kModule, "k_true must be below dim/2");
  if (2 * k + 2 > d) throw Error(kModule, "dim too small for 2*k_true + 2 planted directions");
  if (config.answers_per_class < k + 2) throw Error(kModule, "answers_per_class must exceed k_true + 1");
  if (config.tokens_per_answer < 1) throw Error(kModule, "tokens_per_answer must be positive");
  if (!config.noiseless && !(config.snr > 0.0)) throw Error(kModule, "snr must be positive");
  if (config.pairs < 1) throw Error(kModule, "pairs must be positive");
  if (config.vocab_per_group < 2) throw Error(kModule, "vocab_per_group must be at least 2");

  std::mt19937_64 rng(config.seed);
  SynthData out;
  out.config = config;

  const Matrix frame = orthonormal_frame(d, 2 * k + 2, rng);
  out.harmful = frame.leftCols(k);
  out.refusal = frame.middleCols(k, k);
  out.style = frame.col(2 * k);
  out.offset = kOffsetNorm * frame.col(2 * k + 1);

  Vector variances(k);
  for (int i = 0; i < k; ++i) variances(i) = std::ldexp(1.0, k - 1 - i);
  out.noise_std = config.noiseless ? 0.0 : std::sqrt(variances.minCoeff() / config.snr);

  const Index n = config.answers_per_class;
  const Matrix neg_answers = (out.harmful * planted_coefficients(variances, n, rng)).colwise() + out.offset;
  const Matrix pos_answers = (out.refusal * planted_coefficients(variances, n, rng)).colwise() + out.offset;
  Matrix concept_frame(d, 2 * k);
  concept_frame << out.harmful, out.refusal;
  const Matrix background = planted_coefficients(Vector::Constant(2 * k, kBackgroundVariance), n, rng);
  const Matrix norm_answers = (concept_frame * background).colwise() + (out.offset + kStyleStrength * out.style);

  out.negative = token_corpus(ConceptClass::negative, neg_answers, config.tokens_per_answer, out.noise_std, rng);
  out.positive = token_corpus(ConceptClass::positive, pos_answers, config.tokens_per_answer, out.noise_std, rng);
  out.normal = token_corpus(ConceptClass::normal, norm_answers, config.tokens_per_answer, out.noise_std, rng);

  // Toy LM over [neutral | harmful | refusal] token groups.
  const int g = config.vocab_per_group;
  out.lm = ToyLM::random(3 * g, d, config.beta, rng());
  const Vector harmful_mean = out.harmful.rowwise().sum() / std::sqrt(static_cast<double>(k));
  const Vector refusal_mean = out.refusal.rowwise().sum() / std::sqrt(static_cast<double>(k));
  const double spread = kTokenSpread / std::sqrt(static_cast<double>(k));
  for (int j = 0; j < g; ++j) {
    const Vector hz = out.harmful * gaussian(k, 1, rng);
    const Vector rz = out.refusal * gaussian(k, 1, rng);
    out.lm.token_embeddings.row(g + j) += (kEmbedGain * (harmful_mean + spread * hz)).transpose();
    out.lm.unembedding.row(g + j) += (kUnembedGain * harmful_mean).transpose();
    out.lm.token_embeddings.row(2 * g + j) += (kEmbedGain * (refusal_mean + spread * rz)).transpose();
    out.lm.unembedding.row(2 * g + j) += (kUnembedGain * refusal_mean).transpose();
  }
  out.lm.validate();

  std::uniform_int_distribution<int> prompt_len(3, 5);
  std::uniform_int_distribution<int> answer_len(6, 10);
  std::uniform_int_distribution<int> pick(0, g - 1);
  std::uniform_real_distribution<double> purity(0.8, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto answer = [&](int group_base) {
    const double p = purity(rng);
    std::vector<int> tokens(static_cast<std::size_t>(answer_len(rng)));
    for (auto& t : tokens) t = (unit(rng) < p ? group_base : 0) + pick(rng);
    return tokens;
  };
  for (int i = 0; i < config.pairs; ++i) {
    AnswerPair pair;
    pair.prompt.resize(static_cast<std::size_t>(prompt_len(rng)));
    for (auto& t : pair.prompt) t = pick(rng);
    pair.unsafe = answer(g);
    pair.safe = answer(2 * g);
    pair.question = i / 2;
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

json SynthData::description() const {
  const int g = config.vocab_per_group;
  return {
      {"construction",
       "negative = offset + sum_k a_k h_k; positive = offset + sum_k b_k r_k; normal = offset + "
       "style_strength * s + sum_k (c_k h_k + e_k r_k); tokens add isotropic noise. Coefficient rows "
       "are centered and mutually orthogonal within a class; a_k and b_k have sample variance "
       "2^(K-1-k), the normal background rows c_k and e_k have variance background_variance. Toy LM harmful/refusal tokens embed and unembed "
       "along the mean planted harmful/refusal direction; unsafe answers are mostly harmful tokens, "
       "safe answers mostly refusal tokens."},
      {"dim", config.dim},
      {"k_true", config.k_true},
      {"answers_per_class", config.answers_per_class},
      {"tokens_per_answer", config.tokens_per_answer},
      {"snr", config.snr},
      {"noiseless", config.noiseless},
      {"noise_std", noise_std},
      {"seed", config.seed},
      {"pairs", config.pairs},
      {"vocab", {{"neutral", {0, g}}, {"harmful", {g, 2 * g}}, {"refusal", {2 * g, 3 * g}}}},
      {"style_strength", kStyleStrength},
      {"background_variance", kBackgroundVariance},
      {"harmful_directions", matrix_columns(harmful)},
      {"refusal_directions", matrix_columns(refusal)},
      {"style_direction", std::vector<double>(style.data(), style.data() + style.size())},
      {"offset", std::vector<double>(offset.data(), offset.data() + offset.size())}};
}

void write_synth(const SynthData& data, const fs::path& prefix) {
  const std::string base = prefix.string();
  write_corpus(data.negative, base + "_neg");
  write_corpus(data.positive, base + "_pos");
  write_corpus(data.normal, base + "_norm");
  write_pairs(data.pairs, base + "_pairs.jsonl");
  save_toy_lm(data.lm, base + "_lm.json");
  std::ofstream out(base + "_truth.json", std::ios::trunc);
  if (!out) throw Error(kModule, "cannot open " + base + "_truth.json for writing");
  out << data.description().dump(2) << '\n';
}

}  // namespace calm
