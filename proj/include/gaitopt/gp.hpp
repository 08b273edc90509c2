#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gaitopt/ascent.hpp"
#include "gaitopt/rng.hpp"

namespace gaitopt {

/// Squared-exponential ARD kernel hyperparameters, in the (normalized input,
/// standardized output) space the models are fitted in.
struct Kernel {
    double signal_variance = 1.0;
    Eigen::VectorXd lengthscales;
    double noise_variance = 1e-4;

    void validate() const {
        if (!(signal_variance > 0.0) || !(noise_variance > 0.0))
            throw std::invalid_argument("Kernel: variances must be positive");
        for (int i = 0; i < lengthscales.size(); ++i)
            if (!(lengthscales[i] > 0.0))
                throw std::invalid_argument("Kernel: lengthscales must be positive");
    }
};

inline double kernel_eval(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Kernel& k) {
    double q = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double d = (a[i] - b[i]) / k.lengthscales[i];
        q += d * d;
    }
    return k.signal_variance * std::exp(-0.5 * q);
}

/// Noise-free covariance matrix K(X, X).
inline Eigen::MatrixXd covariance_matrix(const Eigen::MatrixXd& X, const Kernel& k) {
    const auto n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = k.signal_variance;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = kernel_eval(X.row(i).transpose(), X.row(j).transpose(), k);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

/// k(X, Xq): n x m cross-covariance, vectorized over query columns.
inline Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Xq,
                                        const Kernel& k) {
    const auto n = X.rows();
    const auto m = Xq.rows();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, m);
    for (Eigen::Index d = 0; d < X.cols(); ++d) {
        const double inv_l = 1.0 / k.lengthscales[d];
        const Eigen::VectorXd xc = X.col(d) * inv_l;
        const Eigen::VectorXd qc = Xq.col(d) * inv_l;
        D.noalias() += (xc.replicate(1, m) - qc.transpose().replicate(n, 1)).array().square().matrix();
    }
    return k.signal_variance * (-0.5 * D.array()).exp().matrix();
}

namespace detail {

/// Cholesky with the escalating-jitter policy: start at 1e-10, multiply by 10
/// up to 1e-4, then give up.
struct RobustCholesky {
    Eigen::MatrixXd L;
    double jitter = 0.0;
};

inline RobustCholesky robust_cholesky(Eigen::MatrixXd K) {
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() == Eigen::Success) return {Eigen::MatrixXd(llt.matrixL()), 0.0};
    for (double jitter = 1e-10; jitter <= 1e-4 * 1.0000001; jitter *= 10.0) {
        Eigen::MatrixXd Kj = K;
        Kj.diagonal().array() += jitter;
        llt.compute(Kj);
        if (llt.info() == Eigen::Success) return {Eigen::MatrixXd(llt.matrixL()), jitter};
    }
    throw std::runtime_error("robust_cholesky: covariance not positive definite at jitter 1e-4");
}

inline double lml_from_factor(const Eigen::MatrixXd& L, const Eigen::VectorXd& y) {
    const Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(y);
    const auto n = static_cast<double>(y.size());
    return -0.5 * w.squaredNorm() - L.diagonal().array().log().sum() -
           0.5 * n * std::log(2.0 * 3.141592653589793238462643383279502884);
}

}  // namespace detail

/// Log marginal likelihood of outputs y at inputs X under kernel k (noise
/// included on the diagonal). Throws if the covariance is not positive
/// definite even after jitter escalation.
inline double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const Kernel& k) {
    if (y.size() < 1) throw std::invalid_argument("log_marginal_likelihood: empty data");
    Eigen::MatrixXd K = covariance_matrix(X, k);
    K.diagonal().array() += k.noise_variance;
    const auto chol = detail::robust_cholesky(std::move(K));
    return detail::lml_from_factor(chol.L, y);
}

struct GpFitOptions {
    int restarts = 8;  ///< seeded random restarts on top of the heuristic start
    std::uint64_t seed = 1;
    AscentOptions ascent{};
    double lengthscale_lo = 0.01, lengthscale_hi = 10.0;
    double signal_lo = 0.01, signal_hi = 100.0;
    double noise_lo = 1e-8, noise_hi = 1.0;
    /// Warm start: single ascent from `warm_kernel` with `warm_passes` passes.
    std::optional<Kernel> warm_kernel;
    int warm_passes = 2;
};

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

/// Single-output GP regressor with cached Cholesky factor. Inputs are
/// expected pre-normalized (the optimization layer maps the design box to
/// [0,1]^d); outputs are standardized internally by fit().
class GpModel {
public:
    GpModel() = default;

    /// Model with fixed hyperparameters, no output standardization.
    static GpModel with_kernel(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Kernel& kernel) {
        kernel.validate();
        GpModel m;
        m.kernel_ = kernel;
        m.x_ = X;
        m.y_raw_ = y;
        m.y_mean_ = 0.0;
        m.y_sd_ = 1.0;
        m.factorize();
        return m;
    }

    /// Maximum-marginal-likelihood fit with multi-start coordinate ascent in
    /// log hyperparameter space. Deterministic given opts.seed.
    static GpModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const GpFitOptions& opts = {}) {
        if (y.size() < 2) throw std::invalid_argument("GpModel::fit: need at least 2 points");
        const auto d = X.cols();
        GpModel m;
        m.x_ = X;
        m.y_raw_ = y;
        m.y_mean_ = y.mean();
        const double sd = std::sqrt((y.array() - m.y_mean_).square().sum() /
                                    static_cast<double>(y.size()));
        if (sd < 1e-14 * std::max(1.0, std::abs(m.y_mean_))) {
            // all outputs identical: no signal to fit, keep a prior-like model
            m.degenerate_ = true;
            m.y_sd_ = 1.0;
            m.kernel_.signal_variance = opts.signal_lo;
            m.kernel_.lengthscales = Eigen::VectorXd::Constant(d, 1.0);
            m.kernel_.noise_variance = std::max(opts.noise_lo, 1e-6);
            m.factorize();
            return m;
        }
        m.y_sd_ = sd;
        const Eigen::VectorXd ys = (y.array() - m.y_mean_) / m.y_sd_;

        Eigen::VectorXd lo(d + 2), hi(d + 2);
        for (Eigen::Index j = 0; j < d; ++j) {
            lo[j] = std::log(opts.lengthscale_lo);
            hi[j] = std::log(opts.lengthscale_hi);
        }
        lo[d] = std::log(opts.signal_lo);
        hi[d] = std::log(opts.signal_hi);
        lo[d + 1] = std::log(opts.noise_lo);
        hi[d + 1] = std::log(opts.noise_hi);

        auto decode = [d](const Eigen::VectorXd& t) {
            Kernel k;
            k.lengthscales = t.head(d).array().exp();
            k.signal_variance = std::exp(t[d]);
            k.noise_variance = std::exp(t[d + 1]);
            return k;
        };
        auto objective = [&](const Eigen::VectorXd& t) {
            try {
                return log_marginal_likelihood(m.x_, ys, decode(t));
            } catch (const std::runtime_error&) {
                return -std::numeric_limits<double>::infinity();
            }
        };

        AscentResult best;
        if (opts.warm_kernel) {
            Eigen::VectorXd t0(d + 2);
            for (Eigen::Index j = 0; j < d; ++j) t0[j] = std::log(opts.warm_kernel->lengthscales[j]);
            t0[d] = std::log(opts.warm_kernel->signal_variance);
            t0[d + 1] = std::log(opts.warm_kernel->noise_variance);
            t0 = t0.cwiseMax(lo).cwiseMin(hi);
            AscentOptions a = opts.ascent;
            a.max_passes = opts.warm_passes;
            best = coordinate_ascent(objective, lo, hi, t0, a);
        } else {
            Eigen::MatrixXd starts(opts.restarts + 1, d + 2);
            for (Eigen::Index j = 0; j < d; ++j) starts(0, j) = std::log(0.3);
            starts(0, d) = 0.0;
            starts(0, d + 1) = std::log(1e-2);
            Rng rng(opts.seed);
            for (int r = 1; r <= opts.restarts; ++r)
                for (Eigen::Index j = 0; j < d + 2; ++j)
                    starts(r, j) = rng.uniform(lo[j], hi[j]);
            best = multistart_ascent(objective, lo, hi, starts, opts.ascent);
        }
        m.kernel_ = decode(best.x);
        m.factorize();
        return m;
    }

    Prediction predict(const Eigen::VectorXd& x) const {
        Eigen::MatrixXd q(1, x.size());
        q.row(0) = x.transpose();
        const auto [mu, var] = predict_batch(q);
        return Prediction{mu[0], var[0]};
    }

    /// Batched posterior mean/variance at query rows (objective units).
    std::pair<Eigen::VectorXd, Eigen::VectorXd> predict_batch(const Eigen::MatrixXd& Xq) const {
        const Eigen::MatrixXd Ks = cross_covariance(x_, Xq, kernel_);
        const Eigen::MatrixXd V = l_.triangularView<Eigen::Lower>().solve(Ks);
        Eigen::VectorXd mu = Ks.transpose() * alpha_;
        Eigen::VectorXd var =
            (kernel_.signal_variance - V.array().square().colwise().sum().transpose()).matrix();
        mu = (mu.array() * y_sd_ + y_mean_).matrix();
        var *= y_sd_ * y_sd_;
        return {std::move(mu), std::move(var)};
    }

    /// Append one observation, updating the Cholesky factor in O(n^2).
    void append(const Eigen::VectorXd& x, double v) {
        const auto n = x_.rows();
        Eigen::VectorXd knew(n);
        for (Eigen::Index i = 0; i < n; ++i)
            knew[i] = kernel_eval(x_.row(i).transpose(), x, kernel_);
        const Eigen::VectorXd w = l_.triangularView<Eigen::Lower>().solve(knew);
        const double diag2 =
            kernel_.signal_variance + kernel_.noise_variance + jitter_ - w.squaredNorm();
        x_.conservativeResize(n + 1, Eigen::NoChange);
        x_.row(n) = x.transpose();
        y_raw_.conservativeResize(n + 1);
        y_raw_[n] = v;
        if (diag2 <= 1e-12 * kernel_.signal_variance) {
            factorize();  // fall back to a fresh factorization with jitter policy
            return;
        }
        l_.conservativeResize(n + 1, n + 1);
        l_.row(n).head(n) = w.transpose();
        l_.col(n).setZero();
        l_(n, n) = std::sqrt(diag2);
        refresh_alpha();
    }

    double lml() const {
        return detail::lml_from_factor(l_, ((y_raw_.array() - y_mean_) / y_sd_).matrix());
    }

    const Kernel& kernel() const { return kernel_; }
    const Eigen::MatrixXd& inputs() const { return x_; }
    const Eigen::VectorXd& outputs() const { return y_raw_; }
    double output_mean() const { return y_mean_; }
    double output_sd() const { return y_sd_; }
    bool degenerate() const { return degenerate_; }
    double jitter() const { return jitter_; }
    Eigen::Index size() const { return y_raw_.size(); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format"] = "gaitopt-model";
        j["version"] = 1;
        j["type"] = "gp";
        j["kernel"] = {{"signal_variance", kernel_.signal_variance},
                       {"noise_variance", kernel_.noise_variance},
                       {"lengthscales", std::vector<double>(kernel_.lengthscales.begin(),
                                                            kernel_.lengthscales.end())}};
        j["x"] = nlohmann::json::array();
        for (Eigen::Index i = 0; i < x_.rows(); ++i)
            j["x"].push_back(std::vector<double>(x_.row(i).begin(), x_.row(i).end()));
        j["y"] = std::vector<double>(y_raw_.begin(), y_raw_.end());
        j["y_mean"] = y_mean_;
        j["y_sd"] = y_sd_;
        j["degenerate"] = degenerate_;
        return j;
    }

    static GpModel from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "gaitopt-model" || j.value("version", 0) != 1)
            throw std::invalid_argument("GpModel::from_json: unknown format/version");
        if (j.value("type", "") != "gp")
            throw std::invalid_argument("GpModel::from_json: not a gp model");
        GpModel m;
        const auto& jk = j.at("kernel");
        m.kernel_.signal_variance = jk.at("signal_variance").get<double>();
        m.kernel_.noise_variance = jk.at("noise_variance").get<double>();
        const auto ls = jk.at("lengthscales").get<std::vector<double>>();
        m.kernel_.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), ls.size());
        const auto xs = j.at("x").get<std::vector<std::vector<double>>>();
        m.x_.resize(xs.size(), ls.size());
        for (std::size_t i = 0; i < xs.size(); ++i)
            m.x_.row(i) = Eigen::Map<const Eigen::VectorXd>(xs[i].data(), xs[i].size()).transpose();
        const auto ys = j.at("y").get<std::vector<double>>();
        m.y_raw_ = Eigen::Map<const Eigen::VectorXd>(ys.data(), ys.size());
        m.y_mean_ = j.at("y_mean").get<double>();
        m.y_sd_ = j.at("y_sd").get<double>();
        m.degenerate_ = j.value("degenerate", false);
        m.factorize();
        return m;
    }

private:
    void factorize() {
        Eigen::MatrixXd K = covariance_matrix(x_, kernel_);
        K.diagonal().array() += kernel_.noise_variance;
        auto chol = detail::robust_cholesky(std::move(K));
        l_ = std::move(chol.L);
        jitter_ = chol.jitter;
        refresh_alpha();
    }

    void refresh_alpha() {
        const Eigen::VectorXd ys = ((y_raw_.array() - y_mean_) / y_sd_).matrix();
        alpha_ = l_.triangularView<Eigen::Lower>().solve(ys);
        alpha_ = l_.transpose().triangularView<Eigen::Upper>().solve(alpha_);
    }

    Kernel kernel_;
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_raw_;
    double y_mean_ = 0.0, y_sd_ = 1.0;
    Eigen::MatrixXd l_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
    bool degenerate_ = false;
};

}  // namespace gaitopt
