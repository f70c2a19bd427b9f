#include <fstream>
#include <iterator>

#include "calm/error.hpp"
#include "calm/synth.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace calm;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthConfig small_config() {
  SynthConfig c;
  c.dim = 16;
  c.k_true = 2;
  c.answers_per_class = 50;
  c.tokens_per_answer = 3;
  c.pairs = 20;
  return c;
}

}  // namespace

TEST_CASE("planted directions form an orthonormal frame") {
  const SynthData s = synthesize(small_config());
  Matrix frame(16, 5);
  frame << s.harmful, s.refusal, s.style;
  CHECK((frame.transpose() * frame - Matrix::Identity(5, 5)).norm() < 1e-12);
  CHECK(s.offset.dot(s.style) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("noiseless answers follow the documented construction") {
  SynthConfig cfg = small_config();
  cfg.noiseless = true;
  const SynthData s = synthesize(cfg);
  CHECK(s.noise_std == 0.0);
  CHECK(s.negative.count() == 150);
  CHECK(s.negative.granularity == Granularity::token);
  // tokens of one answer coincide; coefficients live in the harmful span
  CHECK((s.negative.vectors.col(0) - s.negative.vectors.col(2)).norm() == 0.0);
  const LabeledCorpus pooled = mean_pool_answers(s.negative);
  const Matrix centered = pooled.vectors.colwise() - s.offset;
  const Matrix coeffs = s.harmful.transpose() * centered;
  CHECK((s.harmful * coeffs - centered).norm() < 1e-10);
  // zero-mean, orthogonal rows with variances 2 and 1
  CHECK(coeffs.rowwise().mean().norm() < 1e-12);
  const Matrix gram = coeffs * coeffs.transpose() / 50.0;
  CHECK(gram(0, 0) == doctest::Approx(2.0));
  CHECK(gram(1, 1) == doctest::Approx(1.0));
  CHECK(std::abs(gram(0, 1)) < 1e-12);
}

TEST_CASE("noise level follows the signal-to-noise ratio") {
  SynthConfig cfg = small_config();
  cfg.snr = 4.0;
  cfg.answers_per_class = 400;
  const SynthData s = synthesize(cfg);
  CHECK(s.noise_std == doctest::Approx(0.5));
  const LabeledCorpus& normal = s.normal;
  Matrix frame(16, 4);
  frame << s.harmful, s.refusal;
  Matrix residual = normal.vectors.colwise() - (s.offset + 2.0 * s.style);
  residual -= frame * (frame.transpose() * residual);
  const double variance = residual.squaredNorm() / static_cast<double>(residual.size());
  CHECK(variance * 16.0 / 12.0 == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("pairs use the right token groups") {
  const SynthData s = synthesize(small_config());
  const int g = s.config.vocab_per_group;
  CHECK(s.lm.vocab_size == 3 * g);
  REQUIRE(s.pairs.size() == 20);
  int harmful = 0;
  int total = 0;
  for (const auto& p : s.pairs) {
    for (int t : p.prompt) CHECK(t < g);
    for (int t : p.unsafe) {
      CHECK(((t >= g && t < 2 * g) || t < g));
      harmful += t >= g;
      ++total;
    }
    for (int t : p.safe) CHECK((t >= 2 * g || t < g));
  }
  CHECK(harmful > total / 2);
  CHECK(s.pairs[3].question == 1);
}

TEST_CASE("synthesis is deterministic under a seed") {
  test::TempDir dir("synth");
  const SynthConfig cfg = small_config();
  write_synth(synthesize(cfg), dir / "a");
  write_synth(synthesize(cfg), dir / "b");
  for (const char* suffix : {"_neg.emb", "_neg.json", "_pos.emb", "_norm.emb", "_pairs.jsonl", "_lm.json", "_truth.json"})
    CHECK(slurp(dir / (std::string("a") + suffix)) == slurp(dir / (std::string("b") + suffix)));

  SynthConfig other = cfg;
  other.seed = 7;
  write_synth(synthesize(other), dir / "c");
  CHECK(slurp(dir / "a_neg.emb") != slurp(dir / "c_neg.emb"));
}

TEST_CASE("invalid configurations are rejected") {
  SynthConfig cfg = small_config();
  cfg.k_true = 8;  // K >= d/2
  CHECK_THROWS_AS(synthesize(cfg), Error);
  cfg.k_true = 0;
  CHECK_THROWS_AS(synthesize(cfg), Error);
}
