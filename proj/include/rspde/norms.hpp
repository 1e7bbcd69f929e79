#pragma once

#include "rspde/path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rspde {

template <typename Scalar>
constexpr Scalar infinity() {
    return std::numeric_limits<Scalar>::infinity();
}

template <typename Scalar>
bool is_infinite(Scalar p) {
    return std::isinf(static_cast<double>(p));
}

/// Hoelder conjugate: 1/p + 1/p' = 1, with 1 <-> inf.
template <typename Scalar>
Scalar conjugate_exponent(Scalar p) {
    if (p < Scalar(1)) throw std::invalid_argument("exponent below 1 has no conjugate");
    if (is_infinite(p)) return Scalar(1);
    if (p == Scalar(1)) return infinity<Scalar>();
    return p / (p - Scalar(1));
}

/// Exponent pair (p, q): L^p in space, L^q in time.
template <typename Scalar>
struct ExponentPair {
    Scalar p;
    Scalar q;
};

/// Point of the segment I(p1, q1, p2, q2) at parameter rho (linear in 1/p, 1/q).
template <typename Scalar>
ExponentPair<Scalar> interpolate_pair(ExponentPair<Scalar> first, ExponentPair<Scalar> second, Scalar rho) {
    auto inv = [](Scalar x) { return is_infinite(x) ? Scalar(0) : Scalar(1) / x; };
    auto from_inv = [](Scalar y) { return y == Scalar(0) ? infinity<Scalar>() : Scalar(1) / y; };
    return {from_inv(rho * inv(first.p) + (Scalar(1) - rho) * inv(second.p)),
            from_inv(rho * inv(first.q) + (Scalar(1) - rho) * inv(second.q))};
}

template <typename Scalar>
ExponentPair<Scalar> conjugate_pair(ExponentPair<Scalar> pq) {
    return {conjugate_exponent(pq.p), conjugate_exponent(pq.q)};
}

/// Constants of the #-norm calculus: 2*, c1 = c_S v 1, and the exponent
/// pairs of I'(2, inf, 2*, 2) used for the dual-norm upper bound.
template <typename Scalar>
struct NormToolbox {
    Scalar sobolev_exponent = infinity<Scalar>();
    /// Known only for d = 1 (c_S = sqrt(L) / 2 on an interval of length L).
    std::optional<Scalar> c1;
    std::vector<ExponentPair<Scalar>> dual_pairs;
};

/// Toolbox for a grid: dual pairs are the conjugates of (2, inf), (2*, 2),
/// and of the rho = 1/2 point between them.
template <typename Scalar>
NormToolbox<Scalar> make_toolbox(const Grid<Scalar>& grid, Scalar two_star_2d = Scalar(4)) {
    NormToolbox<Scalar> tb;
    tb.sobolev_exponent = sobolev_exponent<Scalar>(grid.dim(), two_star_2d);
    if (grid.dim() == 1) {
        const Scalar c_s = std::sqrt(grid.upper(0) - grid.lower(0)) / Scalar(2);
        tb.c1 = std::max(c_s, Scalar(1));
    }
    const ExponentPair<Scalar> energy_end{Scalar(2), infinity<Scalar>()};
    const ExponentPair<Scalar> sobolev_end{tb.sobolev_exponent, Scalar(2)};
    tb.dual_pairs = {conjugate_pair(energy_end), conjugate_pair(sobolev_end),
                     conjugate_pair(interpolate_pair(energy_end, sobolev_end, Scalar(0.5)))};
    return tb;
}

namespace detail {

template <typename Scalar>
void require_horizon(const Path<Scalar>& path, Scalar t) {
    if (t < Scalar(0) || t > path.horizon() * (Scalar(1) + Scalar(1e-12)) + Scalar(1e-300))
        throw std::out_of_range("time " + std::to_string(static_cast<double>(t)) + " beyond path horizon " +
                                std::to_string(static_cast<double>(path.horizon())));
}

/// Left-endpoint rectangle weight of frame k on [0, t].
template <typename Scalar>
Scalar left_rectangle_weight(const Path<Scalar>& path, Eigen::Index k, Scalar t) {
    const Scalar tk = path.time(k);
    if (k >= path.steps() || tk >= t - Scalar(1e-12) * path.dt) return Scalar(0);
    return std::min(path.dt, t - tk);
}

/// Frames that lie in [0, t].
template <typename Scalar>
Eigen::Index last_frame_within(const Path<Scalar>& path, Scalar t) {
    const auto k = static_cast<Eigen::Index>(std::floor(static_cast<double>(t / path.dt) + 1e-9));
    return std::min(k, path.steps());
}

template <typename Scalar, typename Column>
Scalar spatial_norm(const Layout<Scalar>& layout, const Column& frame, Scalar p) {
    const int m = layout.components;
    Scalar acc(0);
    for (Eigen::Index i = 0; i < layout.points(); ++i) {
        const Scalar mag = m == 1 ? std::abs(frame[i]) : frame.segment(i * m, m).norm();
        if (is_infinite(p)) {
            acc = std::max(acc, mag);
        } else if (p == Scalar(2)) {
            acc += layout.weights[i] * mag * mag;
        } else {
            acc += layout.weights[i] * std::pow(mag, p);
        }
    }
    if (is_infinite(p)) return acc;
    return p == Scalar(2) ? std::sqrt(acc) : std::pow(acc, Scalar(1) / p);
}

}  // namespace detail

/// Spatial L^p norm of frame k.
template <typename Scalar>
Scalar frame_norm(const Path<Scalar>& path, Eigen::Index k, Scalar p) {
    return detail::spatial_norm(path.layout, path.frame(k), p);
}

/// Discrete ||u||_{p,q;t}: spatial L^p per frame, then L^q over [0, t] by
/// the left-endpoint rectangle rule (sup over frames in [0, t] for q = inf).
template <typename Scalar>
Scalar mixed_norm(const Path<Scalar>& path, Scalar p, Scalar q, Scalar t) {
    if (p < Scalar(1) || q < Scalar(1)) throw std::invalid_argument("mixed_norm exponents must be >= 1");
    detail::require_horizon(path, t);
    if (is_infinite(q)) {
        Scalar s(0);
        for (Eigen::Index k = 0; k <= detail::last_frame_within(path, t); ++k) s = std::max(s, frame_norm(path, k, p));
        return s;
    }
    Scalar acc(0);
    for (Eigen::Index k = 0; k < path.steps(); ++k) {
        const Scalar w = detail::left_rectangle_weight(path, k, t);
        if (w == Scalar(0)) break;
        const Scalar s = frame_norm(path, k, p);
        acc += w * (q == Scalar(2) ? s * s : std::pow(s, q));
    }
    return q == Scalar(2) ? std::sqrt(acc) : std::pow(acc, Scalar(1) / q);
}

/// ||u||_{#;t} = max(||u||_{2,inf;t}, ||u||_{2*,2;t}).
template <typename Scalar>
Scalar sharp_norm(const Path<Scalar>& path, Scalar t, const NormToolbox<Scalar>& tb) {
    return std::max(mixed_norm(path, Scalar(2), infinity<Scalar>(), t),
                    mixed_norm(path, tb.sobolev_exponent, Scalar(2), t));
}

/// Upper bound on the dual norm ||v||*_{#;t}: the smallest single-space norm
/// over the toolbox's pairs in I'. The true norm is an infimum over
/// decompositions, so this value is an upper bound, never the exact norm.
template <typename Scalar>
Scalar dual_sharp_upper(const Path<Scalar>& path, Scalar t, const NormToolbox<Scalar>& tb) {
    if (tb.dual_pairs.empty()) throw std::invalid_argument("norm toolbox has no dual pairs");
    Scalar best = infinity<Scalar>();
    for (const auto& pq : tb.dual_pairs) best = std::min(best, mixed_norm(path, pq.p, pq.q, t));
    return best;
}

/// Discrete int_0^t int u v dx ds (component dot product for vector fields).
template <typename Scalar>
Scalar pairing(const Path<Scalar>& u, const Path<Scalar>& v, Scalar t) {
    if (!u.matches(v)) throw DiscretizationMismatch("pairing needs paths on the same layout and time grid");
    detail::require_horizon(u, t);
    const int m = u.layout.components;
    Scalar acc(0);
    for (Eigen::Index k = 0; k < u.steps(); ++k) {
        const Scalar w = detail::left_rectangle_weight(u, k, t);
        if (w == Scalar(0)) break;
        Scalar s(0);
        for (Eigen::Index i = 0; i < u.layout.points(); ++i)
            s += u.layout.weights[i] * u.data.col(k).segment(i * m, m).dot(v.data.col(k).segment(i * m, m));
        acc += w * s;
    }
    return acc;
}

/// ||u||_{I;t} for I = I(first, second): max of the two extreme norms.
template <typename Scalar>
Scalar intersection_norm(const Path<Scalar>& path, ExponentPair<Scalar> first, ExponentPair<Scalar> second,
                         Scalar t) {
    return std::max(mixed_norm(path, first.p, first.q, t), mixed_norm(path, second.p, second.q, t));
}

}  // namespace rspde
