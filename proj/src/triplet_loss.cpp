#include "bpb/triplet_loss.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "bpb/error.hpp"

namespace bpb {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError(fmt::format("embedding sizes differ: {} vs {}", a.size(), b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin) {
    return std::max(0.0, squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin);
}

double triplet_loss_grad(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                         double margin, double scale, std::span<double> da, std::span<double> dp,
                         std::span<double> dn) {
    const double loss = triplet_loss(a, p, n, margin);
    if (loss <= 0.0) return 0.0;
    // d/da = 2(n - p), d/dp = -2(a - p), d/dn = 2(a - n)
    for (std::size_t i = 0; i < a.size(); ++i) {
        da[i] += scale * 2.0 * (n[i] - p[i]);
        dp[i] += scale * -2.0 * (a[i] - p[i]);
        dn[i] += scale * 2.0 * (a[i] - n[i]);
    }
    return loss;
}

} // namespace bpb
