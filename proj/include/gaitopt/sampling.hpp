#pragma once

#include <Eigen/Core>
#include <numeric>
#include <vector>

#include "gaitopt/rng.hpp"

namespace gaitopt {

/// Axis-aligned box in R^d. Used both for the gait design space and for the
/// small synthetic boxes in tests.
struct Bounds {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    int dim() const { return static_cast<int>(lower.size()); }

    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
        for (int i = 0; i < dim(); ++i)
            if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
        return true;
    }

    Eigen::VectorXd clip(Eigen::VectorXd x) const {
        for (int i = 0; i < dim(); ++i)
            x[i] = std::min(upper[i], std::max(lower[i], x[i]));
        return x;
    }

    /// Map to the unit cube.
    Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
        return (x - lower).cwiseQuotient(upper - lower);
    }

    Eigen::VectorXd denormalize(const Eigen::VectorXd& u) const {
        return lower + u.cwiseProduct(upper - lower);
    }
};

/// Seeded Latin hypercube design, rows are points inside `bounds`.
inline Eigen::MatrixXd latin_hypercube(int n, const Bounds& bounds, std::uint64_t seed) {
    const int d = bounds.dim();
    Eigen::MatrixXd out(n, d);
    Rng rng(seed);
    std::vector<int> perm(n);
    for (int j = 0; j < d; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = n - 1; i > 0; --i)
            std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        for (int i = 0; i < n; ++i) {
            const double u = (perm[i] + rng.uniform01()) / n;
            out(i, j) = bounds.lower[j] + u * (bounds.upper[j] - bounds.lower[j]);
        }
    }
    return out;
}

/// Halton sequence with a seeded Cranley-Patterson rotation; deterministic
/// low-discrepancy candidates for acquisition search and plant sweeps.
class HaltonSequence {
public:
    HaltonSequence(int dim, std::uint64_t seed) : dim_(dim), shift_(dim) {
        static constexpr int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                         31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
        if (dim > 20) throw std::invalid_argument("HaltonSequence: dim > 20");
        bases_.assign(primes, primes + dim);
        Rng rng(seed);
        for (int j = 0; j < dim; ++j) shift_[j] = rng.uniform01();
    }

    /// i-th point in the unit cube (i >= 0).
    Eigen::VectorXd point(std::int64_t i) const {
        Eigen::VectorXd u(dim_);
        for (int j = 0; j < dim_; ++j) {
            double v = radical_inverse(i + 1, bases_[j]) + shift_[j];
            u[j] = v - std::floor(v);
        }
        return u;
    }

private:
    static double radical_inverse(std::int64_t i, int base) {
        double f = 1.0, r = 0.0;
        while (i > 0) {
            f /= base;
            r += f * static_cast<double>(i % base);
            i /= base;
        }
        return r;
    }

    int dim_;
    std::vector<int> bases_;
    Eigen::VectorXd shift_;
};

}  // namespace gaitopt
