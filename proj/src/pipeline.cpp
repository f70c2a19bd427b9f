#include "calm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <string>
#include <type_traits>

#include "calm/concepts.hpp"
#include "calm/error.hpp"
#include "calm/kernels.hpp"
#include "calm/suppression.hpp"

namespace calm {

using nlohmann::json;

namespace {

const char* const kModule = "fit";

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& sink) : sink_(sink) {}

  template <typename F>
  auto run(const char* stage, F&& work) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(work())>) {
      work();
      record(stage, start);
    } else {
      auto result = work();
      record(stage, start);
      return result;
    }
  }

 private:
  void record(const char* stage, std::chrono::steady_clock::time_point start) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    sink_.push_back({stage, elapsed.count()});
  }

  std::vector<StageTiming>& sink_;
};

void check_role(const LabeledCorpus& c, ConceptClass expected) {
  if (c.label != expected)
    throw Error(kModule, "corpus supplied as " + std::string(to_string(expected)) + " is labeled " +
                             std::string(to_string(c.label)));
  if (c.count() == 0) throw Error(kModule, std::string(to_string(expected)) + " corpus is empty");
  validate(c);
}

LabeledCorpus as_answers(const LabeledCorpus& c) {
  return c.granularity == Granularity::token ? mean_pool_answers(c) : c;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

WhitenOn parse_whiten_on(std::string_view text) {
  if (text == "auto") return WhitenOn::automatic;
  if (text == "token") return WhitenOn::token;
  if (text == "answer") return WhitenOn::answer;
  throw Error(kModule, "unknown whitening granularity '" + std::string(text) + "'");
}

FitResult fit_calm(const LabeledCorpus& negative, const LabeledCorpus& positive,
                   const LabeledCorpus& normal, const FitConfig& config) {
  check_role(negative, ConceptClass::negative);
  check_role(positive, ConceptClass::positive);
  check_role(normal, ConceptClass::normal);
  const Index d = negative.dim();
  if (positive.dim() != d || normal.dim() != d) throw Error(kModule, "corpora disagree on dimension");
  if (config.k_neg < 1 || config.k_pos < 1) throw Error(kModule, "K must be at least 1");

  const bool all_tokens = negative.granularity == Granularity::token &&
                          positive.granularity == Granularity::token &&
                          normal.granularity == Granularity::token;
  Granularity whiten_granularity = all_tokens ? Granularity::token : Granularity::answer;
  if (config.whiten_on == WhitenOn::token) {
    if (!all_tokens) throw Error(kModule, "token-level whitening needs three token-granularity corpora");
  } else if (config.whiten_on == WhitenOn::answer) {
    whiten_granularity = Granularity::answer;
  }

  FitResult result;
  StageClock clock(result.timings);

  LabeledCorpus neg_answers = clock.run("pooling", [&] { return as_answers(negative); });
  LabeledCorpus pos_answers = as_answers(positive);
  LabeledCorpus norm_answers = as_answers(normal);

  Matrix fit_data = whiten_granularity == Granularity::token
                        ? stack_vectors({&negative, &positive, &normal})
                        : stack_vectors({&neg_answers, &pos_answers, &norm_answers});
  if (fit_data.cols() < 2) throw Error(kModule, "whitening needs at least 2 embeddings");

  Vector mean;
  Matrix covariance;
  clock.run("covariance", [&] {
    mean = kernels::parallel::column_mean(fit_data);
    covariance = kernels::parallel::centered_covariance(fit_data, mean);
  });
  WhiteningModel whitening = clock.run("eigendecomposition", [&] {
    return whitening_from_moments(mean, covariance, static_cast<std::size_t>(fit_data.cols()),
                                  config.method, config.eig_floor);
  });
  whitening.fitted_on = whiten_granularity;
  fit_data.resize(0, 0);

  Matrix neg_deflated;
  Matrix pos_deflated;
  Vector normal_mean;
  clock.run("whiten_and_deflate", [&] {
    normal_mean = kernels::parallel::column_mean(whiten_batch(whitening, norm_answers.vectors));
    neg_deflated = project_out_mean(whiten_batch(whitening, neg_answers.vectors), normal_mean);
    pos_deflated = project_out_mean(whiten_batch(whitening, pos_answers.vectors), normal_mean);
  });

  ConceptBasis basis = clock.run("concept_svd", [&] {
    return extract_concepts(neg_deflated, pos_deflated, config.k_neg, config.k_pos, normal_mean);
  });

  json alignment_report;
  CalmTransform transform;
  if (config.align) {
    AlignmentModel alignment = clock.run("alignment", [&] { return learn_alignment(basis, config.alignment); });
    alignment_report = {{"quality", to_std(alignment_quality(alignment, basis))},
                        {"objective_trace", alignment.objective_trace},
                        {"initial_objective", alignment.objective_trace.front()},
                        {"final_objective", alignment.objective()},
                        {"max_orthogonality_error",
                         *std::max_element(alignment.orthogonality_trace.begin(),
                                           alignment.orthogonality_trace.end())},
                        {"converged", alignment.converged},
                        {"iterations", alignment.iterations},
                        {"accepted_steps", alignment.accepted_steps}};
    transform = clock.run("composition", [&] {
      return compose_transform(whitening, std::move(alignment), negative_axes_mask(d, basis.k_neg));
    });
  } else {
    transform = clock.run("composition", [&] { return compose_transform(whitening, build_toxic_projector(basis)); });
  }

  Index floored = 0;
  for (Index i = 0; i < whitening.eigenvalues.size(); ++i)
    if (whitening.eigenvalues(i) < whitening.floored_eigenvalues(i)) ++floored;

  json timings = json::object();
  double total = 0.0;
  for (const auto& t : result.timings) {
    timings[t.stage] = t.seconds;
    total += t.seconds;
  }
  timings["total"] = total;

  result.report = {
      {"dim", d},
      {"variant", to_string(transform.variant)},
      {"seed", config.alignment.seed},
      {"k_neg", basis.k_neg},
      {"k_pos", basis.k_pos},
      {"counts",
       {{"negative", negative.count()}, {"positive", positive.count()}, {"normal", normal.count()}}},
      {"answers",
       {{"negative", neg_answers.count()}, {"positive", pos_answers.count()}, {"normal", norm_answers.count()}}},
      {"whitening",
       {{"method", to_string(whitening.method)},
        {"granularity", to_string(whitening.fitted_on)},
        {"samples", whitening.samples},
        {"eig_floor", whitening.eig_floor},
        {"floored_eigenvalues", floored},
        {"spectrum", to_std(whitening.eigenvalues)}}},
      {"concepts",
       {{"negative_singular_values", to_std(basis.singular_values.head(basis.k_neg))},
        {"positive_singular_values", to_std(basis.singular_values.tail(basis.k_pos))},
        {"normal_mean_norm", basis.normal_mean.norm()},
        {"warnings", basis.warnings}}},
      {"timings_seconds", timings}};
  if (config.align) result.report["alignment"] = alignment_report;

  result.artifact.transform = std::move(transform);
  result.artifact.concepts = std::move(basis);
  result.artifact.metadata = {{"seed", config.alignment.seed},
                              {"counts", result.report["counts"]},
                              {"answers", result.report["answers"]}};
  return result;
}

}  // namespace calm
