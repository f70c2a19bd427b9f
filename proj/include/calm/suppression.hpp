#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "calm/alignment.hpp"
#include "calm/concepts.hpp"
#include "calm/whitening.hpp"

namespace calm {

enum class Variant { aligned, no_align };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

/// Diagonal projector P with P_ii = 0 exactly for i in `zeroed_axes`.
struct SuppressionMask {
  Index dim = 0;
  std::vector<int> zeroed_axes;  // sorted, unique

  Vector diagonal() const;
  bool empty() const { return zeroed_axes.empty(); }
};

SuppressionMask make_mask(Index dim, std::vector<int> zeroed_axes);
/// Zeroes axes [0, k_neg): where alignment places the negative concepts.
SuppressionMask negative_axes_mask(Index dim, int k_neg);

/// x -> M x + b, precomposed once so each call costs one d x d product.
/// Aligned: M = W^-1 Q^T P Q W. No-align: M = W^-1 (I - P_toxic) W. b = mu - M mu.
struct CalmTransform {
  Variant variant = Variant::aligned;
  WhiteningModel whitening;
  AlignmentModel alignment;            // identity for no_align
  SuppressionMask mask;                // empty for no_align
  std::optional<ToxicProjector> toxic; // set for no_align
  Matrix composed;
  Vector offset;

  Index dim() const { return offset.size(); }

  Vector apply(const Vector& x) const;
  /// Column-wise apply on a d x N batch.
  Matrix apply_batch(const Matrix& x) const;
};

CalmTransform compose_transform(WhiteningModel whitening, AlignmentModel alignment,
                                SuppressionMask mask);
CalmTransform compose_transform(WhiteningModel whitening, ToxicProjector toxic);

/// Components (Q W (apply(x) - mu))_i for i in the mask; zero by construction.
Vector suppressed_residual(const CalmTransform& transform, const Vector& x);

/// Recomputes (M, b) from the stored factors and throws if the cached pair
/// drifted beyond `tolerance` (relative to the largest entry of M).
void verify_transform(const CalmTransform& transform, double tolerance = 1e-8);

CalmTransform identity_transform(Index dim);

}  // namespace calm
