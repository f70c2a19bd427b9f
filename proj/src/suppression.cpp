#include "calm/suppression.hpp"

#include <algorithm>
#include <string>

#include "calm/error.hpp"
#include "calm/kernels.hpp"

namespace calm {

namespace {

const char* const kModule = "suppression";

constexpr double kOrthogonalityLimit = 1e-6;

// Q^T P Q without forming P: subtract the outer products of the zeroed rows.
Matrix conjugated_mask(const Matrix& rotation, const SuppressionMask& mask) {
  const Index d = rotation.rows();
  Matrix rows(static_cast<Index>(mask.zeroed_axes.size()), d);
  for (std::size_t k = 0; k < mask.zeroed_axes.size(); ++k)
    rows.row(static_cast<Index>(k)) = rotation.row(mask.zeroed_axes[k]);
  return Matrix::Identity(d, d) - rows.transpose() * rows;
}

struct Composition {
  Matrix composed;
  Vector offset;
};

Composition compose(const CalmTransform& t) {
  Composition c;
  const Matrix& w = t.whitening.transform;
  const Matrix& w_inv = t.whitening.inverse;
  if (t.variant == Variant::aligned) {
    c.composed = w_inv * (conjugated_mask(t.alignment.rotation, t.mask) * w);
  } else {
    c.composed = w_inv * (t.toxic->complement() * w);
  }
  c.offset = t.whitening.mean - c.composed * t.whitening.mean;
  return c;
}

void check_dim(Index expected, Index got) {
  if (expected != got)
    throw Error(kModule, "dimension mismatch: expected " + std::to_string(expected) + ", got " +
                             std::to_string(got));
}

}  // namespace

std::string_view to_string(Variant variant) {
  return variant == Variant::aligned ? "aligned" : "no_align";
}

Variant parse_variant(std::string_view text) {
  if (text == "aligned") return Variant::aligned;
  if (text == "no_align") return Variant::no_align;
  throw Error(kModule, "unknown variant '" + std::string(text) + "'");
}

Vector SuppressionMask::diagonal() const {
  Vector p = Vector::Ones(dim);
  for (int axis : zeroed_axes) p(axis) = 0.0;
  return p;
}

SuppressionMask make_mask(Index dim, std::vector<int> zeroed_axes) {
  std::sort(zeroed_axes.begin(), zeroed_axes.end());
  zeroed_axes.erase(std::unique(zeroed_axes.begin(), zeroed_axes.end()), zeroed_axes.end());
  for (int axis : zeroed_axes)
    if (axis < 0 || axis >= dim)
      throw Error(kModule, "mask axis " + std::to_string(axis) + " out of range [0, " +
                               std::to_string(dim) + ")");
  return SuppressionMask{dim, std::move(zeroed_axes)};
}

SuppressionMask negative_axes_mask(Index dim, int k_neg) {
  std::vector<int> axes(static_cast<std::size_t>(std::max(k_neg, 0)));
  for (int k = 0; k < k_neg; ++k) axes[static_cast<std::size_t>(k)] = k;
  return make_mask(dim, std::move(axes));
}

Vector CalmTransform::apply(const Vector& x) const {
  check_dim(dim(), x.size());
  Vector y = offset;
  y.noalias() += composed * x;
  return y;
}

Matrix CalmTransform::apply_batch(const Matrix& x) const {
  check_dim(dim(), x.rows());
  return kernels::parallel::affine(composed, offset, x);
}

CalmTransform compose_transform(WhiteningModel whitening, AlignmentModel alignment,
                                SuppressionMask mask) {
  const Index d = whitening.dim();
  if (alignment.rotation.rows() != d || alignment.rotation.cols() != d)
    throw Error(kModule, "alignment dimension does not match whitening");
  if (mask.dim != d) throw Error(kModule, "mask dimension does not match whitening");
  const double orth = orthogonality_error(alignment.rotation);
  if (!(orth <= kOrthogonalityLimit))
    throw Error(kModule, "rotation is not orthogonal (||Q^T Q - I||_F = " + std::to_string(orth) + ")");

  CalmTransform t;
  t.variant = Variant::aligned;
  t.whitening = std::move(whitening);
  t.alignment = std::move(alignment);
  t.mask = std::move(mask);
  auto c = compose(t);
  t.composed = std::move(c.composed);
  t.offset = std::move(c.offset);
  return t;
}

CalmTransform compose_transform(WhiteningModel whitening, ToxicProjector toxic) {
  const Index d = whitening.dim();
  if (toxic.basis.rows() != d) throw Error(kModule, "toxic basis dimension does not match whitening");
  if (toxic.rank() < 1) throw Error(kModule, "toxic projector needs at least one direction");

  CalmTransform t;
  t.variant = Variant::no_align;
  t.whitening = std::move(whitening);
  t.alignment = identity_alignment(d);
  t.mask = make_mask(d, {});
  t.toxic = std::move(toxic);
  auto c = compose(t);
  t.composed = std::move(c.composed);
  t.offset = std::move(c.offset);
  return t;
}

Vector suppressed_residual(const CalmTransform& transform, const Vector& x) {
  if (transform.variant != Variant::aligned)
    throw Error(kModule, "suppressed_residual requires the aligned variant");
  const Vector aligned =
      transform.alignment.rotation * whiten(transform.whitening, transform.apply(x));
  Vector out(static_cast<Index>(transform.mask.zeroed_axes.size()));
  for (std::size_t k = 0; k < transform.mask.zeroed_axes.size(); ++k)
    out(static_cast<Index>(k)) = aligned(transform.mask.zeroed_axes[k]);
  return out;
}

void verify_transform(const CalmTransform& transform, double tolerance) {
  const Index d = transform.whitening.dim();
  if (transform.composed.rows() != d || transform.composed.cols() != d || transform.offset.size() != d)
    throw Error(kModule, "composed matrix has the wrong shape");
  if (transform.variant == Variant::no_align && !transform.toxic)
    throw Error(kModule, "no_align transform is missing its toxic basis");
  if (transform.variant == Variant::aligned) {
    const double orth = orthogonality_error(transform.alignment.rotation);
    if (!(orth <= kOrthogonalityLimit))
      throw Error(kModule, "rotation is not orthogonal (||Q^T Q - I||_F = " + std::to_string(orth) + ")");
  }
  const auto c = compose(transform);
  const double scale = std::max(1.0, c.composed.cwiseAbs().maxCoeff());
  const double drift_m = (c.composed - transform.composed).cwiseAbs().maxCoeff();
  const double drift_b = (c.offset - transform.offset).cwiseAbs().maxCoeff();
  const double offset_scale = std::max(1.0, c.offset.cwiseAbs().maxCoeff());
  if (!(drift_m <= tolerance * scale) || !(drift_b <= tolerance * offset_scale))
    throw Error(kModule, "composed matrix inconsistent with its factors (max drift " +
                             std::to_string(std::max(drift_m, drift_b)) + ")");
}

CalmTransform identity_transform(Index dim) {
  return compose_transform(identity_whitening(dim), identity_alignment(dim), make_mask(dim, {}));
}

}  // namespace calm
