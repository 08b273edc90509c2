#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <vector>

#include "gaitopt/gp.hpp"

namespace gaitopt {

/// Data-source tag of an observation.
enum class Fidelity : int {
    Simulation = 1,  ///< cheap low-fidelity source
    Physical = 2,    ///< expensive high-fidelity source
};

inline int fidelity_index(Fidelity f) { return static_cast<int>(f) - 1; }

inline Fidelity fidelity_from_int(int j) {
    if (j != 1 && j != 2) throw std::invalid_argument("fidelity must be 1 or 2");
    return static_cast<Fidelity>(j);
}

/// Heterotopic collection of fidelity-tagged observations.
struct FidelityDataset {
    Eigen::MatrixXd x;            ///< N x d inputs (normalized)
    std::vector<Fidelity> tags;   ///< N tags
    Eigen::VectorXd v;            ///< N outputs

    Eigen::Index size() const { return v.size(); }

    int count(Fidelity f) const {
        int n = 0;
        for (auto t : tags)
            if (t == f) ++n;
        return n;
    }

    void append(const Eigen::VectorXd& point, Fidelity tag, double value) {
        const auto n = x.rows();
        if (n == 0 && x.cols() == 0) x.resize(0, point.size());
        x.conservativeResize(n + 1, Eigen::NoChange);
        x.row(n) = point.transpose();
        tags.push_back(tag);
        v.conservativeResize(n + 1);
        v[n] = value;
    }
};

/// 2x2 coregionalization matrix K_f = L * L^T, kept as its Cholesky factor so
/// likelihood ascent over its entries is unconstrained while K_f stays PSD.
struct CoregionalizationMatrix {
    double l11 = 1.0;
    double l21 = 0.0;
    double l22 = 1.0;

    static CoregionalizationMatrix from_factor(double a11, double a21, double a22) {
        CoregionalizationMatrix m;
        m.l11 = a11;
        m.l21 = a21;
        m.l22 = a22;
        return m;
    }

    /// Factor a symmetric PSD matrix with positive diagonal.
    static CoregionalizationMatrix from_matrix(const Eigen::Matrix2d& k) {
        if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0))
            throw std::invalid_argument("CoregionalizationMatrix: diagonal must be positive");
        if (std::abs(k(0, 1) - k(1, 0)) > 1e-12 * std::max(1.0, std::abs(k(0, 1))))
            throw std::invalid_argument("CoregionalizationMatrix: matrix must be symmetric");
        CoregionalizationMatrix m;
        m.l11 = std::sqrt(k(0, 0));
        m.l21 = k(0, 1) / m.l11;
        const double rest = k(1, 1) - m.l21 * m.l21;
        if (rest < -1e-12) throw std::invalid_argument("CoregionalizationMatrix: not PSD");
        m.l22 = std::sqrt(std::max(0.0, rest));
        return m;
    }

    Eigen::Matrix2d matrix() const {
        Eigen::Matrix2d k;
        k(0, 0) = l11 * l11;
        k(0, 1) = k(1, 0) = l11 * l21;
        k(1, 1) = l21 * l21 + l22 * l22;
        return k;
    }

    double operator()(Fidelity a, Fidelity b) const {
        return matrix()(fidelity_index(a), fidelity_index(b));
    }
};

/// Diagonal normalization of K_f (unit inner-task entries); the off-diagonal
/// becomes the cross-fidelity correlation in [-1, 1].
inline Eigen::Matrix2d normalize_kf(const Eigen::Matrix2d& kf) {
    if (!(kf(0, 0) > 0.0) || !(kf(1, 1) > 0.0))
        throw std::invalid_argument("normalize_kf: diagonal entries must be positive");
    Eigen::Matrix2d out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) out(i, j) = kf(i, j) / std::sqrt(kf(i, i) * kf(j, j));
    return out;
}

/// Product kernel over fidelity-tagged points.
inline double mt_kernel(const Eigen::VectorXd& p, Fidelity j, const Eigen::VectorXd& q,
                        Fidelity jq, const CoregionalizationMatrix& kf, const Kernel& base) {
    return kf(j, jq) * kernel_eval(p, q, base);
}

/// Element-wise N x N covariance over a heterotopic dataset (no noise). For
/// isotopic tag-major data this equals the Kronecker product K_f (x) K_P.
inline Eigen::MatrixXd assemble_covariance(const FidelityDataset& data,
                                           const CoregionalizationMatrix& kf, const Kernel& base) {
    const auto n = data.size();
    Eigen::MatrixXd k(n, n);
    const Eigen::Matrix2d kfm = kf.matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = kfm(fidelity_index(data.tags[i]), fidelity_index(data.tags[i])) *
                  base.signal_variance;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = kfm(fidelity_index(data.tags[i]), fidelity_index(data.tags[j])) *
                             kernel_eval(data.x.row(i).transpose(), data.x.row(j).transpose(), base);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

struct MtgpFitOptions {
    int restarts = 6;
    std::uint64_t seed = 1;
    AscentOptions ascent{};
    double lengthscale_lo = 0.01, lengthscale_hi = 10.0;
    double signal_lo = 0.01, signal_hi = 100.0;
    double noise_lo = 1e-8, noise_hi = 1.0;
    double init_kf_offdiag = 0.5;  ///< Algorithm input: initial guess of K_f
    double l21_lo = -3.0, l21_hi = 3.0;
    double l22_lo = 0.05, l22_hi = 3.0;
    std::optional<std::pair<Kernel, CoregionalizationMatrix>> warm;  ///< warm start (plus noise2 below)
    double warm_noise2 = 1e-2;
    int warm_passes = 2;
};

/// Multi-task GP over two fidelity levels: shared SE-ARD base kernel,
/// coregionalization matrix with K_f[1][1] pinned to 1 (its scale is
/// indistinguishable from the signal variance), per-fidelity noise.
class MtgpModel {
public:
    MtgpModel() = default;

    static MtgpModel with_params(const FidelityDataset& data, const Kernel& base,
                                 const CoregionalizationMatrix& kf, double noise2) {
        base.validate();
        MtgpModel m;
        m.data_ = data;
        m.kernel_ = base;
        m.kf_ = kf;
        m.noise2_ = noise2;
        m.y_mean_ = 0.0;
        m.y_sd_ = 1.0;
        m.cross_identifiable_ = data.count(Fidelity::Simulation) > 0 &&
                                data.count(Fidelity::Physical) > 0;
        m.factorize();
        return m;
    }

    /// Joint maximum-marginal-likelihood fit of the base hyperparameters and
    /// the K_f factor. Datasets with a single tag keep K_f at the initial
    /// guess and come back flagged (cross_identifiable() == false).
    static MtgpModel fit(const FidelityDataset& data, const MtgpFitOptions& opts = {}) {
        if (data.size() < 2) throw std::invalid_argument("MtgpModel::fit: need at least 2 points");
        const auto d = data.x.cols();
        MtgpModel m;
        m.data_ = data;
        m.y_mean_ = data.v.mean();
        const double sd = std::sqrt((data.v.array() - m.y_mean_).square().sum() /
                                    static_cast<double>(data.v.size()));
        m.y_sd_ = sd < 1e-14 * std::max(1.0, std::abs(m.y_mean_)) ? 1.0 : sd;
        m.degenerate_ = sd < 1e-14 * std::max(1.0, std::abs(m.y_mean_));
        m.cross_identifiable_ = data.count(Fidelity::Simulation) > 0 &&
                                data.count(Fidelity::Physical) > 0;
        FidelityDataset std_data = data;
        std_data.v = ((data.v.array() - m.y_mean_) / m.y_sd_).matrix();

        // theta = [log l_1..d, log sv, log nv1, log nv2, l21, log l22]
        const auto dim = d + 5;
        Eigen::VectorXd lo(dim), hi(dim);
        for (Eigen::Index j = 0; j < d; ++j) {
            lo[j] = std::log(opts.lengthscale_lo);
            hi[j] = std::log(opts.lengthscale_hi);
        }
        lo[d] = std::log(opts.signal_lo);
        hi[d] = std::log(opts.signal_hi);
        lo[d + 1] = lo[d + 2] = std::log(opts.noise_lo);
        hi[d + 1] = hi[d + 2] = std::log(opts.noise_hi);
        lo[d + 3] = opts.l21_lo;
        hi[d + 3] = opts.l21_hi;
        lo[d + 4] = std::log(opts.l22_lo);
        hi[d + 4] = std::log(opts.l22_hi);

        const double init_l21 = opts.init_kf_offdiag;
        const double init_l22 =
            std::sqrt(std::max(1e-4, 1.0 - opts.init_kf_offdiag * opts.init_kf_offdiag));
        if (!m.cross_identifiable_) {
            lo[d + 3] = hi[d + 3] = init_l21;  // pinned: unidentifiable without both tags
            lo[d + 4] = hi[d + 4] = std::log(init_l22);
        }

        auto decode = [d](const Eigen::VectorXd& t, Kernel& k, CoregionalizationMatrix& kf,
                          double& noise2) {
            k.lengthscales = t.head(d).array().exp();
            k.signal_variance = std::exp(t[d]);
            k.noise_variance = std::exp(t[d + 1]);
            noise2 = std::exp(t[d + 2]);
            kf = CoregionalizationMatrix::from_factor(1.0, t[d + 3], std::exp(t[d + 4]));
        };
        auto objective = [&](const Eigen::VectorXd& t) {
            Kernel k;
            CoregionalizationMatrix kf;
            double noise2 = 0.0;
            decode(t, k, kf, noise2);
            try {
                return lml(std_data, k, kf, noise2);
            } catch (const std::runtime_error&) {
                return -std::numeric_limits<double>::infinity();
            }
        };

        AscentResult best;
        if (opts.warm) {
            Eigen::VectorXd t0(dim);
            for (Eigen::Index j = 0; j < d; ++j)
                t0[j] = std::log(opts.warm->first.lengthscales[j]);
            t0[d] = std::log(opts.warm->first.signal_variance);
            t0[d + 1] = std::log(opts.warm->first.noise_variance);
            t0[d + 2] = std::log(opts.warm_noise2);
            t0[d + 3] = opts.warm->second.l21;
            t0[d + 4] = std::log(std::max(opts.l22_lo, opts.warm->second.l22));
            t0 = t0.cwiseMax(lo).cwiseMin(hi);
            AscentOptions a = opts.ascent;
            a.max_passes = opts.warm_passes;
            best = coordinate_ascent(objective, lo, hi, t0, a);
        } else {
            Eigen::MatrixXd starts(opts.restarts + 1, dim);
            for (Eigen::Index j = 0; j < d; ++j) starts(0, j) = std::log(0.3);
            starts(0, d) = 0.0;
            starts(0, d + 1) = std::log(1e-2);
            starts(0, d + 2) = std::log(1e-2);
            starts(0, d + 3) = init_l21;
            starts(0, d + 4) = std::log(init_l22);
            Rng rng(opts.seed);
            for (int r = 1; r <= opts.restarts; ++r) {
                for (Eigen::Index j = 0; j < d + 3; ++j)
                    starts(r, j) = rng.uniform(lo[j], hi[j]);
                starts(r, d + 3) = m.cross_identifiable_ ? rng.uniform(-1.0, 1.0) : init_l21;
                starts(r, d + 4) =
                    m.cross_identifiable_ ? rng.uniform(std::log(0.3), std::log(1.5))
                                          : std::log(init_l22);
            }
            best = multistart_ascent(objective, lo, hi, starts, opts.ascent);
        }
        decode(best.x, m.kernel_, m.kf_, m.noise2_);
        m.factorize();
        return m;
    }

    /// Posterior at a tagged query point, in objective units.
    Prediction predict(const Eigen::VectorXd& x, Fidelity j) const {
        Eigen::MatrixXd q(1, x.size());
        q.row(0) = x.transpose();
        const auto [mu, var] = predict_batch(q, j);
        return Prediction{mu[0], var[0]};
    }

    std::pair<Eigen::VectorXd, Eigen::VectorXd> predict_batch(const Eigen::MatrixXd& xq,
                                                              Fidelity j) const {
        Eigen::MatrixXd ks = cross_covariance(data_.x, xq, kernel_);
        const Eigen::Matrix2d kfm = kf_.matrix();
        for (Eigen::Index r = 0; r < data_.size(); ++r)
            ks.row(r) *= kfm(fidelity_index(data_.tags[r]), fidelity_index(j));
        const Eigen::MatrixXd v = l_.triangularView<Eigen::Lower>().solve(ks);
        Eigen::VectorXd mu = ks.transpose() * alpha_;
        const double prior = kfm(fidelity_index(j), fidelity_index(j)) * kernel_.signal_variance;
        Eigen::VectorXd var = (prior - v.array().square().colwise().sum().transpose()).matrix();
        mu = (mu.array() * y_sd_ + y_mean_).matrix();
        var *= y_sd_ * y_sd_;
        return {std::move(mu), std::move(var)};
    }

    /// Heterotopic log marginal likelihood for given parameters.
    static double lml(const FidelityDataset& data, const Kernel& base,
                      const CoregionalizationMatrix& kf, double noise2) {
        Eigen::MatrixXd k = assemble_covariance(data, kf, base);
        for (Eigen::Index i = 0; i < data.size(); ++i)
            k(i, i) += data.tags[i] == Fidelity::Simulation ? base.noise_variance : noise2;
        const auto chol = detail::robust_cholesky(std::move(k));
        return detail::lml_from_factor(chol.L, data.v);
    }

    double lml() const {
        FidelityDataset std_data = data_;
        std_data.v = ((data_.v.array() - y_mean_) / y_sd_).matrix();
        return lml(std_data, kernel_, kf_, noise2_);
    }

    const Kernel& kernel() const { return kernel_; }
    const CoregionalizationMatrix& kf() const { return kf_; }
    Eigen::Matrix2d kf_normalized() const { return normalize_kf(kf_.matrix()); }
    double noise2() const { return noise2_; }
    const FidelityDataset& dataset() const { return data_; }
    bool cross_identifiable() const { return cross_identifiable_; }
    bool degenerate() const { return degenerate_; }
    double output_mean() const { return y_mean_; }
    double output_sd() const { return y_sd_; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format"] = "gaitopt-model";
        j["version"] = 1;
        j["type"] = "mtgp";
        j["kernel"] = {{"signal_variance", kernel_.signal_variance},
                       {"noise_variance", kernel_.noise_variance},
                       {"lengthscales", std::vector<double>(kernel_.lengthscales.begin(),
                                                            kernel_.lengthscales.end())}};
        j["noise_variance_2"] = noise2_;
        j["kf_factor"] = {kf_.l11, kf_.l21, kf_.l22};
        j["x"] = nlohmann::json::array();
        for (Eigen::Index i = 0; i < data_.x.rows(); ++i)
            j["x"].push_back(std::vector<double>(data_.x.row(i).begin(), data_.x.row(i).end()));
        std::vector<int> tags;
        for (auto t : data_.tags) tags.push_back(static_cast<int>(t));
        j["tags"] = tags;
        j["y"] = std::vector<double>(data_.v.begin(), data_.v.end());
        j["y_mean"] = y_mean_;
        j["y_sd"] = y_sd_;
        j["cross_identifiable"] = cross_identifiable_;
        return j;
    }

    static MtgpModel from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "gaitopt-model" || j.value("version", 0) != 1)
            throw std::invalid_argument("MtgpModel::from_json: unknown format/version");
        if (j.value("type", "") != "mtgp")
            throw std::invalid_argument("MtgpModel::from_json: not an mtgp model");
        MtgpModel m;
        const auto& jk = j.at("kernel");
        m.kernel_.signal_variance = jk.at("signal_variance").get<double>();
        m.kernel_.noise_variance = jk.at("noise_variance").get<double>();
        const auto ls = jk.at("lengthscales").get<std::vector<double>>();
        m.kernel_.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), ls.size());
        m.noise2_ = j.at("noise_variance_2").get<double>();
        const auto lf = j.at("kf_factor").get<std::vector<double>>();
        m.kf_ = CoregionalizationMatrix::from_factor(lf.at(0), lf.at(1), lf.at(2));
        const auto xs = j.at("x").get<std::vector<std::vector<double>>>();
        m.data_.x.resize(xs.size(), ls.size());
        for (std::size_t i = 0; i < xs.size(); ++i)
            m.data_.x.row(i) =
                Eigen::Map<const Eigen::VectorXd>(xs[i].data(), xs[i].size()).transpose();
        for (int t : j.at("tags").get<std::vector<int>>())
            m.data_.tags.push_back(fidelity_from_int(t));
        const auto ys = j.at("y").get<std::vector<double>>();
        m.data_.v = Eigen::Map<const Eigen::VectorXd>(ys.data(), ys.size());
        m.y_mean_ = j.at("y_mean").get<double>();
        m.y_sd_ = j.at("y_sd").get<double>();
        m.cross_identifiable_ = j.value("cross_identifiable", true);
        m.factorize();
        return m;
    }

private:
    void factorize() {
        Eigen::MatrixXd k = assemble_covariance(data_, kf_, kernel_);
        for (Eigen::Index i = 0; i < data_.size(); ++i)
            k(i, i) += data_.tags[i] == Fidelity::Simulation ? kernel_.noise_variance : noise2_;
        auto chol = detail::robust_cholesky(std::move(k));
        l_ = std::move(chol.L);
        const Eigen::VectorXd ys = ((data_.v.array() - y_mean_) / y_sd_).matrix();
        alpha_ = l_.triangularView<Eigen::Lower>().solve(ys);
        alpha_ = l_.transpose().triangularView<Eigen::Upper>().solve(alpha_);
    }

    FidelityDataset data_;
    Kernel kernel_;
    CoregionalizationMatrix kf_;
    double noise2_ = 1e-4;
    double y_mean_ = 0.0, y_sd_ = 1.0;
    Eigen::MatrixXd l_;
    Eigen::VectorXd alpha_;
    bool cross_identifiable_ = true;
    bool degenerate_ = false;
};

}  // namespace gaitopt
