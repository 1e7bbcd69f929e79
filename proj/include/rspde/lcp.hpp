#pragma once

#include "rspde/grid.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <vector>

namespace rspde {

struct PsorOptions {
    double relaxation = 1.5;
    double tolerance = 1e-10;
    long max_sweeps = 100000;
    /// Primal-dual active-set refinement after PSOR; makes complementarity
    /// hold to round-off instead of to the sweep tolerance.
    bool polish = true;
    int max_polish_iterations = 50;
};

struct LcpReport {
    long sweeps = 0;
    int polish_iterations = 0;
    bool converged = false;
    bool polished = false;
    double residual = 0.0;  // max |min(u - s, M u - b)|
};

/// Solves the LCP  u >= s,  r = M u - b >= 0,  r^T (u - s) = 0  for a
/// symmetric M-matrix M by projected SOR, then refines the active set.
///
/// `u` holds the initial guess on entry and the solution on exit.
template <typename Scalar>
class ProjectedSor {
public:
    using Sparse = Eigen::SparseMatrix<Scalar>;

    ProjectedSor(const Sparse& M, PsorOptions options) : M_(M), options_(options) {
        diag_ = M_.diagonal();
        reduced_ = M_;
        solver_.analyzePattern(reduced_);
    }

    LcpReport solve(const VectorX<Scalar>& b, const VectorX<Scalar>& s, VectorX<Scalar>& u) {
        LcpReport rep;
        const Eigen::Index n = b.size();
        const Scalar omega = static_cast<Scalar>(options_.relaxation);
        const Scalar tol = static_cast<Scalar>(options_.tolerance);
        u = u.cwiseMax(s);
        for (rep.sweeps = 1; rep.sweeps <= options_.max_sweeps; ++rep.sweeps) {
            Scalar change(0);
            for (Eigen::Index i = 0; i < n; ++i) {
                Scalar off(0);
                for (typename Sparse::InnerIterator it(M_, i); it; ++it)
                    if (it.row() != i) off += it.value() * u[it.row()];
                const Scalar gs = (b[i] - off) / diag_[i];
                const Scalar next = std::max(s[i], u[i] + omega * (gs - u[i]));
                change = std::max(change, std::abs(next - u[i]));
                u[i] = next;
            }
            if (change <= tol) {
                rep.converged = true;
                break;
            }
        }
        if (!rep.converged) return rep;

        if (options_.polish) {
            std::vector<bool> active(static_cast<std::size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) active[i] = u[i] <= s[i] + Scalar(10) * tol;
            VectorX<Scalar> candidate(n);
            for (int it = 1; it <= options_.max_polish_iterations; ++it) {
                if (!solve_reduced(b, s, active, candidate)) break;
                const VectorX<Scalar> r = M_ * candidate - b;
                bool changed = false;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const bool next = active[i] ? r[i] >= Scalar(0) : candidate[i] < s[i];
                    if (next != static_cast<bool>(active[i])) {
                        active[i] = next;
                        changed = true;
                    }
                }
                rep.polish_iterations = it;
                if (!changed) {
                    u = candidate;
                    rep.polished = true;
                    break;
                }
            }
        }
        rep.residual = static_cast<double>(complementarity_residual(b, s, u));
        return rep;
    }

    /// max_i |min(u_i - s_i, (M u - b)_i)|
    Scalar complementarity_residual(const VectorX<Scalar>& b, const VectorX<Scalar>& s,
                                    const VectorX<Scalar>& u) const {
        const VectorX<Scalar> r = M_ * u - b;
        Scalar worst(0);
        for (Eigen::Index i = 0; i < u.size(); ++i) worst = std::max(worst, std::abs(std::min(u[i] - s[i], r[i])));
        return worst;
    }

private:
    /// Solves M_FF u_F = b_F - M_FA s_A with u_A = s_A, keeping the sparsity
    /// pattern of M so the symbolic factorization is reused.
    bool solve_reduced(const VectorX<Scalar>& b, const VectorX<Scalar>& s, const std::vector<bool>& active,
                       VectorX<Scalar>& out) {
        const Eigen::Index n = b.size();
        VectorX<Scalar> fixed = VectorX<Scalar>::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (active[i]) fixed[i] = s[i];
        VectorX<Scalar> rhs = b - M_ * fixed;
        for (Eigen::Index j = 0; j < M_.outerSize(); ++j) {
            typename Sparse::InnerIterator src(M_, j);
            for (typename Sparse::InnerIterator it(reduced_, j); it; ++it, ++src) {
                const Eigen::Index i = it.row();
                if (i == j)
                    it.valueRef() = active[i] ? Scalar(1) : src.value();
                else
                    it.valueRef() = (active[i] || active[j]) ? Scalar(0) : src.value();
            }
        }
        for (Eigen::Index i = 0; i < n; ++i)
            if (active[i]) rhs[i] = s[i];
        solver_.factorize(reduced_);
        if (solver_.info() != Eigen::Success) return false;
        out = solver_.solve(rhs);
        return solver_.info() == Eigen::Success;
    }

    const Sparse& M_;
    PsorOptions options_;
    VectorX<Scalar> diag_;
    Sparse reduced_;
    Eigen::SimplicialLDLT<Sparse> solver_;
};

}  // namespace rspde
