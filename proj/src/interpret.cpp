#include "calm/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <string>

#include "calm/error.hpp"
#include "calm/kernels.hpp"

namespace calm {

namespace {

const char* const kModule = "interpret";

void require_aligned(const CalmTransform& transform) {
  if (transform.variant != Variant::aligned)
    throw Error(kModule, "axis inspection requires an aligned model (got no_align)");
}

// Rows `axes` of Q W, applied to x - mu for every column.
Matrix aligned_coordinates(const CalmTransform& t, const Matrix& x, const std::vector<int>& axes) {
  Matrix rows(static_cast<Index>(axes.size()), t.dim());
  for (std::size_t k = 0; k < axes.size(); ++k)
    rows.row(static_cast<Index>(k)) = t.alignment.rotation.row(axes[k]) * t.whitening.transform;
  return kernels::parallel::affine(rows, Vector::Zero(rows.rows()), x.colwise() - t.whitening.mean);
}

void check_axis(const CalmTransform& t, int axis) {
  if (axis < 0 || axis >= t.alignment.concept_count)
    throw Error(kModule, "axis " + std::to_string(axis) + " out of range [0, " +
                             std::to_string(t.alignment.concept_count) + ")");
}

}  // namespace

std::vector<AxisTrace> axis_activations(const CalmTransform& transform, const LabeledCorpus& tokens,
                                        std::vector<int> axes) {
  require_aligned(transform);
  if (tokens.granularity != Granularity::token)
    throw Error(kModule, "axis_activations expects a token-granularity corpus");
  if (tokens.dim() != transform.dim()) throw Error(kModule, "corpus dimension does not match the model");
  if (axes.empty()) {
    axes.resize(static_cast<std::size_t>(transform.alignment.concept_count));
    std::iota(axes.begin(), axes.end(), 0);
  }
  for (int axis : axes) check_axis(transform, axis);

  const Matrix coords = aligned_coordinates(transform, tokens.vectors, axes);
  const auto offsets = answer_offsets(tokens);
  std::vector<AxisTrace> traces;
  traces.reserve((offsets.size() - 1) * axes.size());
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    for (std::size_t k = 0; k < axes.size(); ++k) {
      AxisTrace trace;
      trace.axis = axes[k];
      trace.answer_id = tokens.answer_id(offsets[g]);
      for (Index n = offsets[g]; n < offsets[g + 1]; ++n)
        trace.values.push_back(coords(static_cast<Index>(k), n));
      traces.push_back(std::move(trace));
    }
  }
  return traces;
}

std::vector<RankedAnswer> top_aligned_answers(const CalmTransform& transform,
                                              const LabeledCorpus& answers, int axis, int n,
                                              RankMode mode) {
  require_aligned(transform);
  check_axis(transform, axis);
  if (n < 1) throw Error(kModule, "n must be at least 1");
  if (answers.granularity != Granularity::answer)
    throw Error(kModule, "top_aligned_answers expects an answer-granularity corpus");
  if (answers.dim() != transform.dim()) throw Error(kModule, "corpus dimension does not match the model");

  const Matrix coords = aligned_coordinates(transform, answers.vectors, {axis});
  std::vector<RankedAnswer> ranked(static_cast<std::size_t>(answers.count()));
  for (Index i = 0; i < answers.count(); ++i)
    ranked[static_cast<std::size_t>(i)] = {answers.answer_id(i), coords(0, i)};

  auto key = [mode](const RankedAnswer& r) { return mode == RankMode::absolute ? std::abs(r.score) : r.score; };
  std::sort(ranked.begin(), ranked.end(), [&](const RankedAnswer& a, const RankedAnswer& b) {
    const double ka = key(a);
    const double kb = key(b);
    if (ka != kb) return ka > kb;
    return a.answer_id < b.answer_id;
  });
  if (ranked.size() > static_cast<std::size_t>(n)) ranked.resize(static_cast<std::size_t>(n));
  return ranked;
}

void write_traces_csv(const std::vector<AxisTrace>& traces, const std::filesystem::path& destination) {
  std::ofstream out(destination, std::ios::trunc);
  if (!out) throw Error(kModule, "cannot open " + destination.string() + " for writing");
  out << "answer_id,axis,token_index,value\n" << std::setprecision(17);
  for (const auto& trace : traces)
    for (std::size_t t = 0; t < trace.values.size(); ++t)
      out << trace.answer_id << ',' << trace.axis << ',' << t << ',' << trace.values[t] << '\n';
}

}  // namespace calm
