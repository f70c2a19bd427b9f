#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "calm/artifact.hpp"
#include "calm/corpus.hpp"
#include "calm/error.hpp"
#include "calm/eval.hpp"
#include "calm/interpret.hpp"
#include "calm/pipeline.hpp"
#include "calm/synth.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct SynthArgs {
  calm::SynthConfig config;
  std::string out = "synth";
};

struct FitArgs {
  std::string neg, pos, norm, out = "model";
  int k = 1;
  int k_neg = 0;
  int k_pos = 0;
  std::string method = "zca";
  std::string whiten_on = "auto";
  bool no_align = false;
  double eig_floor = calm::kDefaultEigFloor;
  calm::AlignmentConfig alignment;
};

struct ApplyArgs {
  std::string model, in, out;
};

struct EvalArgs {
  std::string pairs, lm, model, report = "report";
  int vocab = 48;
  int dim = 64;
  double beta = 0.7;
  std::uint64_t seed = 42;
  bool grouped = false;
};

struct TraceArgs {
  std::string model, corpus, out = "traces.csv";
  std::vector<int> axes;
};

struct InspectArgs {
  std::string model, corpus, out;
  int axis = 0;
  int n = 10;
  std::string mode = "signed";
};

fs::path with_suffix(const std::string& prefix, const char* suffix) { return fs::path(prefix + suffix); }

void run_synth(const SynthArgs& args) {
  const calm::SynthData data = calm::synthesize(args.config);
  calm::write_synth(data, args.out);
  std::cout << "wrote " << args.out << "_{neg,pos,norm,pairs,lm,truth} (seed " << args.config.seed << ")\n";
}

void run_fit(const FitArgs& args) {
  calm::FitConfig config;
  config.k_neg = args.k_neg > 0 ? args.k_neg : args.k;
  config.k_pos = args.k_pos > 0 ? args.k_pos : args.k;
  config.method = calm::parse_whitening_method(args.method);
  config.whiten_on = calm::parse_whiten_on(args.whiten_on);
  config.eig_floor = args.eig_floor;
  config.align = !args.no_align;
  config.alignment = args.alignment;

  const calm::LabeledCorpus neg = calm::read_corpus(args.neg);
  const calm::LabeledCorpus pos = calm::read_corpus(args.pos);
  const calm::LabeledCorpus norm = calm::read_corpus(args.norm);
  calm::FitResult fit = calm::fit_calm(neg, pos, norm, config);

  calm::write_artifact(fit.artifact, with_suffix(args.out, ".calm"));
  calm::write_concepts_csv(*fit.artifact.concepts, with_suffix(args.out, ".concepts.csv"));
  {
    std::ofstream report(with_suffix(args.out, ".fit.json"));
    report << fit.report.dump(2) << '\n';
    if (!report) throw calm::Error("cli", "cannot write fit report");
  }
  if (config.align) {
    std::ofstream trace(with_suffix(args.out, ".objective.csv"));
    trace << "iteration,objective\n";
    const auto& objective = fit.artifact.transform.alignment.objective_trace;
    for (std::size_t i = 0; i < objective.size(); ++i) trace << i << ',' << objective[i] << '\n';
  }
  for (const auto& warning : fit.artifact.concepts->warnings) std::cerr << "warning: " << warning << '\n';
  std::cout << "wrote " << args.out << ".calm (" << calm::to_string(fit.artifact.transform.variant) << ", d="
            << fit.artifact.transform.dim() << ")\n";
}

void run_apply(const ApplyArgs& args) {
  const calm::ModelArtifact model = calm::read_artifact(args.model);
  calm::LabeledCorpus corpus = calm::read_corpus(args.in);
  if (corpus.dim() != model.transform.dim())
    throw calm::Error("apply", "dimension mismatch: model d=" + std::to_string(model.transform.dim()) +
                                   ", corpus d=" + std::to_string(corpus.dim()));
  corpus.vectors = model.transform.apply_batch(corpus.vectors);
  calm::write_corpus(corpus, args.out);
}

void run_eval(const EvalArgs& args) {
  const calm::ToyLM lm = args.lm.empty() ? calm::ToyLM::random(args.vocab, args.dim, args.beta, args.seed)
                                         : calm::load_toy_lm(args.lm);
  const calm::AnswerPairSet pairs = calm::read_pairs(args.pairs);
  std::optional<calm::ModelArtifact> model;
  if (!args.model.empty()) {
    model = calm::read_artifact(args.model);
    if (model->transform.dim() != lm.dim)
      throw calm::Error("eval", "model dimension " + std::to_string(model->transform.dim()) +
                                    " does not match toy LM dimension " + std::to_string(lm.dim));
  }
  const calm::CalmTransform* hook = model ? &model->transform : nullptr;
  calm::PerplexityReport report;
  if (args.grouped) {
    const auto groups = calm::group_by_question(pairs);
    report = calm::evaluate_grouped(lm, groups, hook);
  } else {
    report = calm::evaluate_pairs(lm, pairs, hook);
  }
  report.seed = lm.seed;
  calm::write_report(report, args.report);
  std::cout << "PPL-Safe " << report.safe_mean << "  PPL-Unsafe " << report.unsafe_mean << "  UWR "
            << report.uwr_percent << "%\n";
}

void run_trace(const TraceArgs& args) {
  const calm::ModelArtifact model = calm::read_artifact(args.model);
  const calm::LabeledCorpus corpus = calm::read_corpus(args.corpus);
  calm::write_traces_csv(calm::axis_activations(model.transform, corpus, args.axes), args.out);
}

void run_inspect(const InspectArgs& args) {
  const calm::ModelArtifact model = calm::read_artifact(args.model);
  calm::LabeledCorpus corpus = calm::read_corpus(args.corpus);
  if (corpus.granularity == calm::Granularity::token) corpus = calm::mean_pool_answers(corpus);
  if (args.mode != "signed" && args.mode != "absolute")
    throw calm::Error("inspect", "unknown rank mode '" + args.mode + "'");
  const auto mode = args.mode == "signed" ? calm::RankMode::signed_score : calm::RankMode::absolute;
  const auto ranked = calm::top_aligned_answers(model.transform, corpus, args.axis, args.n, mode);

  std::ofstream file;
  if (!args.out.empty()) {
    file.open(args.out);
    if (!file) throw calm::Error("inspect", "cannot open " + args.out);
  }
  std::ostream& out = args.out.empty() ? std::cout : file;
  for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
    nlohmann::json line = {{"rank", rank}, {"answer_id", ranked[rank].answer_id},
                           {"axis", args.axis}, {"score", ranked[rank].score}};
    const auto& refs = corpus.text_refs;
    if (!refs.empty()) {
      // text_refs are per answer, in corpus order
      for (calm::Index i = 0; i < corpus.count(); ++i)
        if (corpus.answer_id(i) == ranked[rank].answer_id) line["text_ref"] = refs[static_cast<std::size_t>(i)];
    }
    out << line.dump() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calm: concept whitening, alignment and suppression toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate planted-concept corpora, answer pairs and a toy LM");
  synth_cmd->add_option("--dim", synth.config.dim, "embedding dimension")->capture_default_str();
  synth_cmd->add_option("--k-true", synth.config.k_true, "planted concepts per class")->capture_default_str();
  synth_cmd->add_option("--n", synth.config.answers_per_class, "answers per class")->capture_default_str();
  synth_cmd->add_option("--tokens", synth.config.tokens_per_answer, "tokens per answer")->capture_default_str();
  synth_cmd->add_option("--snr", synth.config.snr, "weakest concept variance / noise variance")
      ->capture_default_str();
  synth_cmd->add_flag("--noiseless", synth.config.noiseless, "omit token noise");
  synth_cmd->add_option("--pairs", synth.config.pairs, "answer pairs")->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed, "random seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "output prefix")->capture_default_str();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit whitening, concepts and alignment; write a .calm model");
  fit_cmd->add_option("--neg", fit.neg, "negative corpus")->required();
  fit_cmd->add_option("--pos", fit.pos, "positive corpus")->required();
  fit_cmd->add_option("--norm", fit.norm, "normal corpus")->required();
  fit_cmd->add_option("--k", fit.k, "concepts per class")->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--k-neg", fit.k_neg, "negative concepts (overrides --k)")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--k-pos", fit.k_pos, "positive concepts (overrides --k)")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--method", fit.method, "whitening")->check(CLI::IsMember({"zca", "pca"}))
      ->capture_default_str();
  fit_cmd->add_option("--whiten-on", fit.whiten_on, "whitening granularity")
      ->check(CLI::IsMember({"auto", "token", "answer"}))
      ->capture_default_str();
  fit_cmd->add_flag("--no-align", fit.no_align, "project out concepts without alignment");
  fit_cmd->add_option("--eig-floor", fit.eig_floor, "relative eigenvalue floor")->capture_default_str();
  fit_cmd->add_option("--max-iters", fit.alignment.max_iters, "alignment iterations")->capture_default_str();
  fit_cmd->add_option("--tol", fit.alignment.tol, "objective tolerance")->capture_default_str();
  fit_cmd->add_option("--step", fit.alignment.step_init, "initial Cayley step")->capture_default_str();
  fit_cmd->add_option("--restarts", fit.alignment.restarts, "random restarts")->capture_default_str();
  fit_cmd->add_option("--seed", fit.alignment.seed, "random seed")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "output prefix")->capture_default_str();

  ApplyArgs apply;
  auto* apply_cmd = app.add_subcommand("apply", "apply a model to a corpus");
  apply_cmd->add_option("--model", apply.model)->required();
  apply_cmd->add_option("--in", apply.in)->required();
  apply_cmd->add_option("--out", apply.out)->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "toy-LM perplexity and UWR, optionally with a model hook");
  eval_cmd->add_option("--pairs", eval.pairs, "answer pairs (JSONL)")->required();
  auto* lm_opt = eval_cmd->add_option("--lm", eval.lm, "toy LM JSON");
  eval_cmd->add_option("--vocab", eval.vocab, "random toy LM vocabulary")->excludes(lm_opt)->capture_default_str();
  eval_cmd->add_option("--dim", eval.dim, "random toy LM dimension")->excludes(lm_opt)->capture_default_str();
  eval_cmd->add_option("--beta", eval.beta, "random toy LM input gain")->excludes(lm_opt)->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "random toy LM seed")->excludes(lm_opt)->capture_default_str();
  eval_cmd->add_option("--model", eval.model, ".calm model installed as hook");
  eval_cmd->add_flag("--grouped", eval.grouped, "average per question before UWR");
  eval_cmd->add_option("--report", eval.report, "report prefix")->capture_default_str();

  TraceArgs trace;
  auto* trace_cmd = app.add_subcommand("trace", "per-token activations on aligned axes");
  trace_cmd->add_option("--model", trace.model)->required();
  trace_cmd->add_option("--corpus", trace.corpus, "token-granularity corpus")->required();
  trace_cmd->add_option("--axes", trace.axes, "axes (default: all concept axes)");
  trace_cmd->add_option("--out", trace.out)->capture_default_str();

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "top answers along one aligned axis");
  inspect_cmd->add_option("--model", inspect.model)->required();
  inspect_cmd->add_option("--corpus", inspect.corpus)->required();
  inspect_cmd->add_option("--axis", inspect.axis)->capture_default_str();
  inspect_cmd->add_option("--n", inspect.n)->check(CLI::PositiveNumber)->capture_default_str();
  inspect_cmd->add_option("--mode", inspect.mode)->check(CLI::IsMember({"signed", "absolute"}))
      ->capture_default_str();
  inspect_cmd->add_option("--out", inspect.out, "JSONL destination (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth_cmd) run_synth(synth);
    else if (*fit_cmd) run_fit(fit);
    else if (*apply_cmd) run_apply(apply);
    else if (*eval_cmd) run_eval(eval);
    else if (*trace_cmd) run_trace(trace);
    else if (*inspect_cmd) run_inspect(inspect);
  } catch (const calm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return EXIT_SUCCESS;
}
