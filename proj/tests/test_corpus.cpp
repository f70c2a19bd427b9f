#include <cmath>
#include <fstream>
#include <limits>

#include "calm/corpus.hpp"
#include "calm/error.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using namespace calm;

namespace {

LabeledCorpus token_corpus() {
  LabeledCorpus c;
  c.label = ConceptClass::negative;
  c.granularity = Granularity::token;
  c.vectors = test::gaussian(3, 6, 11).cast<float>().cast<double>();
  c.answer_ids = {7, 7, 7, 2, 9, 9};
  c.text_refs = {"a7", "a2", "a9"};
  return c;
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("corpus round-trips bit-exactly through the file format") {
  test::TempDir dir("corpus");
  const LabeledCorpus c = token_corpus();
  write_corpus(c, dir / "neg");
  CHECK(std::filesystem::exists(dir / "neg.emb"));
  CHECK(std::filesystem::file_size(dir / "neg.emb") == 3 * 6 * 4);
  const LabeledCorpus back = read_corpus(dir / "neg.json");
  CHECK(back.label == c.label);
  CHECK(back.granularity == c.granularity);
  CHECK(back.vectors == c.vectors);
  CHECK(back.answer_ids == c.answer_ids);
  CHECK(back.text_refs == c.text_refs);
  // extension on the destination is ignored
  write_corpus(back, dir / "again.emb");
  CHECK(read_corpus(dir / "again").vectors == c.vectors);
}

TEST_CASE("payload is little-endian f32 column per vector") {
  test::TempDir dir("corpus_le");
  LabeledCorpus c;
  c.vectors.resize(2, 1);
  c.vectors << 1.0, -2.0;
  write_corpus(c, dir / "x");
  std::ifstream in(dir / "x.emb", std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  // 1.0f = 0x3f800000, -2.0f = 0xc0000000
  CHECK(bytes[0] == 0x00);
  CHECK(bytes[3] == 0x3f);
  CHECK(bytes[2] == 0x80);
  CHECK(bytes[7] == 0xc0);
}

TEST_CASE("mean pooling matches a hand computation and keeps first-appearance order") {
  const LabeledCorpus c = token_corpus();
  const LabeledCorpus pooled = mean_pool_answers(c);
  REQUIRE(pooled.count() == 3);
  CHECK(pooled.granularity == Granularity::answer);
  CHECK(pooled.answer_ids == std::vector<std::int64_t>{7, 2, 9});
  for (Index i = 0; i < 3; ++i) {
    CHECK(pooled.vectors(i, 0) == doctest::Approx((c.vectors(i, 0) + c.vectors(i, 1) + c.vectors(i, 2)) / 3.0));
    CHECK(pooled.vectors(i, 1) == doctest::Approx(c.vectors(i, 3)));
    CHECK(pooled.vectors(i, 2) == doctest::Approx((c.vectors(i, 4) + c.vectors(i, 5)) / 2.0));
  }
}

TEST_CASE("validation names the offending location") {
  LabeledCorpus c = token_corpus();
  c.vectors(1, 4) = std::numeric_limits<double>::quiet_NaN();
  const std::string msg = error_of([&] { validate(c); });
  CHECK(msg.find("vector 4") != std::string::npos);
  CHECK(msg.find("component 1") != std::string::npos);

  LabeledCorpus split = token_corpus();
  split.answer_ids = {7, 2, 7, 2, 9, 9};
  CHECK_THROWS_AS(validate(split), Error);

  LabeledCorpus refs = token_corpus();
  refs.text_refs.pop_back();
  CHECK_THROWS_AS(validate(refs), Error);
}

TEST_CASE("corrupt manifests and payloads are rejected") {
  test::TempDir dir("corpus_bad");
  write_corpus(token_corpus(), dir / "c");

  nlohmann::json manifest;
  std::ifstream(dir / "c.json") >> manifest;

  auto rewrite = [&](const nlohmann::json& j) { std::ofstream(dir / "c.json") << j.dump(); };

  nlohmann::json missing = manifest;
  missing.erase("class");
  rewrite(missing);
  CHECK(error_of([&] { read_corpus(dir / "c"); }).find("class") != std::string::npos);

  nlohmann::json wrong_dim = manifest;
  wrong_dim["dim"] = 4;
  rewrite(wrong_dim);
  CHECK(error_of([&] { read_corpus(dir / "c"); }).find("mismatch") != std::string::npos);

  nlohmann::json wrong_count = manifest;
  wrong_count["count"] = 5;
  rewrite(wrong_count);
  CHECK(error_of([&] { read_corpus(dir / "c"); }).find("mismatch") != std::string::npos);

  rewrite(manifest);
  std::filesystem::resize_file(dir / "c.emb", 3 * 6 * 4 - 4);
  CHECK_THROWS_AS(read_corpus(dir / "c"), Error);
}

TEST_CASE("f32 overflow is refused on write") {
  test::TempDir dir("corpus_overflow");
  LabeledCorpus c;
  c.vectors = Matrix::Constant(2, 2, 1e300);
  CHECK_THROWS_AS(write_corpus(c, dir / "big"), Error);
}

TEST_CASE("stacking requires matching dimensions") {
  LabeledCorpus a;
  a.vectors = test::gaussian(3, 2, 1);
  LabeledCorpus b;
  b.vectors = test::gaussian(3, 4, 2);
  LabeledCorpus c;
  c.vectors = test::gaussian(4, 1, 3);
  const Matrix s = stack_vectors({&a, &b});
  CHECK(s.cols() == 6);
  CHECK(s.rightCols(4) == b.vectors);
  CHECK_THROWS_AS(stack_vectors({&a, &c}), Error);
}

TEST_CASE("pairs round-trip and report the bad line") {
  test::TempDir dir("pairs");
  AnswerPairSet pairs{{{1, 2}, {3}, {4, 5}, 0}, {{}, {6, 7}, {8}, std::nullopt}};
  write_pairs(pairs, dir / "p.jsonl");
  const AnswerPairSet back = read_pairs(dir / "p.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].prompt == pairs[0].prompt);
  CHECK(back[0].question == 0);
  CHECK_FALSE(back[1].question.has_value());
  CHECK(back[1].safe == pairs[1].safe);

  std::ofstream(dir / "bad.jsonl") << R"({"prompt":[],"safe":[1],"unsafe":[2]})" << '\n'
                                   << R"({"prompt":[],"safe":[1]})" << '\n';
  CHECK(error_of([&] { read_pairs(dir / "bad.jsonl"); }).find("line 2") != std::string::npos);

  CHECK_THROWS_AS(validate_pairs(pairs, 8), Error);
  CHECK_NOTHROW(validate_pairs(pairs, 9));
  AnswerPairSet empty_answer{{{1}, {}, {2}, std::nullopt}};
  CHECK_THROWS_AS(validate_pairs(empty_answer, 9), Error);
}
