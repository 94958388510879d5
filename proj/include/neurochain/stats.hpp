#pragma once

#include "neurochain/errors.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace neurochain {

template <typename A, typename B>
typename A::Scalar rmse(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
    using Scalar = typename A::Scalar;
    if (a.size() != b.size() || a.size() == 0) throw MetricError("rmse needs two non-empty series of equal length");
    return std::sqrt((a.derived().array() - b.derived().array()).square().sum() / static_cast<Scalar>(a.size()));
}

/// Pearson correlation. Throws MetricError when either series has zero variance.
template <typename A, typename B>
typename A::Scalar pearson(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
    using Scalar = typename A::Scalar;
    if (a.size() != b.size() || a.size() < 2) throw MetricError("correlation needs two series of equal length >= 2");
    const auto da = (a.derived().array() - a.derived().mean()).eval();
    const auto db = (b.derived().array() - b.derived().mean()).eval();
    const Scalar saa = da.square().sum();
    const Scalar sbb = db.square().sum();
    if (!(saa > 0) || !(sbb > 0)) throw MetricError("correlation undefined for a zero-variance series");
    return (da * db).sum() / std::sqrt(saa * sbb);
}

/// Linear-interpolated q-th percentile (q in [0, 100]) of an unsorted sample.
template <typename Derived>
typename Derived::Scalar percentile(const Eigen::DenseBase<Derived>& x, double q) {
    using Scalar = typename Derived::Scalar;
    if (x.size() == 0) throw MetricError("percentile of an empty sample");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sorted = x.derived();
    std::sort(sorted.data(), sorted.data() + sorted.size());
    const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<Eigen::Index>(std::floor(pos));
    const auto hi = std::min<Eigen::Index>(lo + 1, sorted.size() - 1);
    const Scalar frac = static_cast<Scalar>(pos - static_cast<double>(lo));
    return sorted(lo) + frac * (sorted(hi) - sorted(lo));
}

}  // namespace neurochain
