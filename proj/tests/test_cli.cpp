#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <iterator>

#include "calm/artifact.hpp"
#include "calm/corpus.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using namespace calm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run calm_cli(const std::string& args) {
  const std::string command = std::string(CALM_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buffer[512];
  while (std::fgets(buffer, sizeof buffer, pipe)) r.output += buffer;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const fs::path& p) {
  nlohmann::json j;
  std::ifstream(p) >> j;
  return j;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Small planted suite shared by the cases below.
class Workspace {
 public:
  Workspace() : dir_("cli") {
    const Run r = calm_cli("synth --dim 16 --k-true 1 --n 80 --tokens 3 --pairs 12 --out " + q(dir_ / "s"));
    REQUIRE(r.code == 0);
  }
  fs::path operator/(const std::string& name) const { return dir_ / name; }
  std::string corpora() const {
    return "--neg " + q(dir_ / "s_neg") + " --pos " + q(dir_ / "s_pos") + " --norm " + q(dir_ / "s_norm");
  }

 private:
  test::TempDir dir_;
};

}  // namespace

TEST_CASE("synth is reproducible under a fixed seed") {
  test::TempDir dir("cli_synth");
  REQUIRE(calm_cli("synth --dim 12 --k-true 2 --n 30 --pairs 5 --seed 9 --out " + q(dir / "a")).code == 0);
  REQUIRE(calm_cli("synth --dim 12 --k-true 2 --n 30 --pairs 5 --seed 9 --out " + q(dir / "b")).code == 0);
  for (const char* suffix : {"_neg.emb", "_pos.json", "_norm.emb", "_pairs.jsonl", "_lm.json", "_truth.json"})
    CHECK(slurp(dir / (std::string("a") + suffix)) == slurp(dir / (std::string("b") + suffix)));
  const Run bad = calm_cli("synth --dim 12 --k-true 6 --out " + q(dir / "c"));
  CHECK(bad.code == 2);
  CHECK(bad.output.find("synth:") != std::string::npos);
}

TEST_CASE("fit writes a self-consistent artifact and report") {
  Workspace ws;
  const Run r = calm_cli("fit " + ws.corpora() + " --k 1 --out " + q(ws / "m"));
  REQUIRE(r.code == 0);
  const ModelArtifact a = read_artifact(ws / "m.calm");
  CHECK(a.transform.variant == Variant::aligned);
  CHECK(a.transform.dim() == 16);
  const auto report = read_json(ws / "m.fit.json");
  CHECK(report["seed"] == 42);
  CHECK(report["timings_seconds"].contains("eigendecomposition"));
  CHECK(fs::exists(ws / "m.concepts.csv"));
  CHECK(fs::exists(ws / "m.objective.csv"));

  // same seed, same bytes
  REQUIRE(calm_cli("fit " + ws.corpora() + " --k 1 --out " + q(ws / "m2")).code == 0);
  CHECK(slurp(ws / "m.calm") == slurp(ws / "m2.calm"));
}

TEST_CASE("usage errors exit with code 2") {
  Workspace ws;
  CHECK(calm_cli("fit " + ws.corpora() + " --k 0 --out " + q(ws / "m")).code == 2);
  CHECK(calm_cli("fit --neg x --out y").code == 2);
  CHECK(calm_cli("fit " + ws.corpora() + " --method svd").code == 2);
  CHECK(calm_cli("").code == 2);
  CHECK(calm_cli("bogus").code == 2);
  CHECK(calm_cli("--help").code == 0);
  const Run swapped = calm_cli("fit --neg " + q(ws / "s_pos") + " --pos " + q(ws / "s_neg") + " --norm " +
                               q(ws / "s_norm") + " --out " + q(ws / "m"));
  CHECK(swapped.code == 2);
  CHECK(swapped.output.find("fit:") != std::string::npos);
}

TEST_CASE("no-align models refuse tracing") {
  Workspace ws;
  REQUIRE(calm_cli("fit " + ws.corpora() + " --no-align --out " + q(ws / "p")).code == 0);
  CHECK(read_artifact(ws / "p.calm").transform.variant == Variant::no_align);
  const Run r = calm_cli("trace --model " + q(ws / "p.calm") + " --corpus " + q(ws / "s_neg") + " --out " +
                         q(ws / "t.csv"));
  CHECK(r.code == 2);
  CHECK(r.output.find("aligned") != std::string::npos);
}

TEST_CASE("apply preserves shape and honours the identity model") {
  Workspace ws;
  ModelArtifact id;
  id.transform = identity_transform(16);
  write_artifact(id, ws / "id.calm");
  REQUIRE(calm_cli("apply --model " + q(ws / "id.calm") + " --in " + q(ws / "s_pos") + " --out " + q(ws / "o")).code == 0);
  const LabeledCorpus in = read_corpus(ws / "s_pos");
  const LabeledCorpus out = read_corpus(ws / "o");
  CHECK(out.vectors.rows() == in.vectors.rows());
  CHECK(out.vectors.cols() == in.vectors.cols());
  CHECK(out.answer_ids == in.answer_ids);
  CHECK(out.label == in.label);
  CHECK((out.vectors - in.vectors).cwiseAbs().maxCoeff() <= 1e-8 * in.vectors.cwiseAbs().maxCoeff());

  ModelArtifact small;
  small.transform = identity_transform(8);
  write_artifact(small, ws / "small.calm");
  const Run mismatch = calm_cli("apply --model " + q(ws / "small.calm") + " --in " + q(ws / "s_pos") + " --out " + q(ws / "o2"));
  CHECK(mismatch.code == 2);
  CHECK(mismatch.output.find("dimension mismatch") != std::string::npos);
}

TEST_CASE("corrupted artifacts are reported at load time") {
  Workspace ws;
  REQUIRE(calm_cli("fit " + ws.corpora() + " --out " + q(ws / "m")).code == 0);
  std::string bytes = slurp(ws / "m.calm");
  bytes[bytes.size() - 2] ^= 0x40;
  std::ofstream(ws / "bad.calm", std::ios::binary) << bytes;
  const Run r = calm_cli("apply --model " + q(ws / "bad.calm") + " --in " + q(ws / "s_pos") + " --out " + q(ws / "o"));
  CHECK(r.code == 2);
  CHECK(r.output.find("load-time invariant failure") != std::string::npos);
}

TEST_CASE("eval reports: identity hook is bit-identical, bad lines are located") {
  Workspace ws;
  ModelArtifact id;
  id.transform = identity_transform(16);
  write_artifact(id, ws / "id.calm");
  const std::string base = "eval --pairs " + q(ws / "s_pairs.jsonl") + " --lm " + q(ws / "s_lm.json");
  REQUIRE(calm_cli(base + " --report " + q(ws / "plain")).code == 0);
  REQUIRE(calm_cli(base + " --model " + q(ws / "id.calm") + " --report " + q(ws / "hooked")).code == 0);
  auto plain = read_json(ws / "plain.json");
  auto hooked = read_json(ws / "hooked.json");
  CHECK(hooked["hooked"] == true);
  plain.erase("hooked");
  hooked.erase("hooked");
  CHECK(plain.dump() == hooked.dump());
  CHECK(fs::exists(ws / "plain.csv"));

  REQUIRE(calm_cli(base + " --grouped --report " + q(ws / "grouped")).code == 0);
  CHECK(read_json(ws / "grouped.json")["grouped"] == true);

  std::ofstream(ws / "bad.jsonl") << R"({"prompt":[1],"safe":[2],"unsafe":[3]})" << "\n"
                                  << R"({"prompt":[1],"safe":"x","unsafe":[3]})" << "\n";
  const Run bad = calm_cli("eval --pairs " + q(ws / "bad.jsonl") + " --lm " + q(ws / "s_lm.json"));
  CHECK(bad.code == 2);
  CHECK(bad.output.find("line 2") != std::string::npos);

  // random toy LM from flags
  CHECK(calm_cli("eval --pairs " + q(ws / "s_pairs.jsonl") + " --vocab 48 --dim 16 --report " + q(ws / "r")).code == 0);
}

TEST_CASE("trace and inspect export interpretability views") {
  Workspace ws;
  REQUIRE(calm_cli("fit " + ws.corpora() + " --out " + q(ws / "m")).code == 0);
  REQUIRE(calm_cli("trace --model " + q(ws / "m.calm") + " --corpus " + q(ws / "s_neg") + " --axes 0 --out " +
                   q(ws / "t.csv")).code == 0);
  std::ifstream traces(ws / "t.csv");
  std::string header;
  std::getline(traces, header);
  CHECK(header == "answer_id,axis,token_index,value");
  std::size_t rows = 0;
  for (std::string line; std::getline(traces, line);) ++rows;
  CHECK(rows == 240);

  REQUIRE(calm_cli("inspect --model " + q(ws / "m.calm") + " --corpus " + q(ws / "s_neg") +
                   " --axis 0 --n 5 --mode absolute --out " + q(ws / "top.jsonl")).code == 0);
  std::ifstream top(ws / "top.jsonl");
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(top, line);) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 5);
  CHECK(lines[0]["rank"] == 0);
  CHECK(std::abs(lines[0]["score"].get<double>()) >= std::abs(lines[4]["score"].get<double>()));
  CHECK(lines[0]["text_ref"].get<std::string>().rfind("synthetic:negative:", 0) == 0);
  CHECK(calm_cli("inspect --model " + q(ws / "m.calm") + " --corpus " + q(ws / "s_neg") + " --axis 9").code == 2);
}
