#pragma once

#include <span>

namespace bpb {

// max(0, |a-p|^2 - |a-n|^2 + margin). Throws DimensionError on size mismatch.
double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin);

// Same value; when the hinge is active writes d loss / d {a, p, n} scaled by
// `scale` into the gradient spans (added, not assigned). Returns the loss.
double triplet_loss_grad(std::span<const double> anchor, std::span<const double> positive,
                         std::span<const double> negative, double margin, double scale, std::span<double> d_anchor,
                         std::span<double> d_positive, std::span<double> d_negative);

double squared_distance(std::span<const double> a, std::span<const double> b);

} // namespace bpb
