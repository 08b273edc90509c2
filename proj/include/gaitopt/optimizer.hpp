#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <string>

#include "gaitopt/kinematics.hpp"
#include "gaitopt/mtgp.hpp"
#include "gaitopt/sampling.hpp"

namespace gaitopt {

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Budgets and search settings for BO / MFBO / baselines.
struct BoConfig {
    Bounds bounds;
    int n_init = 10;
    int i_max = 70;
    int k_max = 25;
    std::uint64_t seed = 1;

    int acquisition_candidates = 2048;  ///< quasi-random EI screen size
    int acquisition_restarts = 32;      ///< top candidates refined by pattern search
    int acquisition_steps = 50;
    double ei_variance_floor = 1e-12;

    int budget = 300;  ///< evaluation budget for RS / SA

    double sa_t0 = 0.03;  ///< ~0.1x the typical objective scale
    double sa_temp_decay = 0.97;
    double sa_step0 = 0.15;  ///< proposal sd in normalized coordinates
    double sa_step_decay = 0.99331;

    int ags_rounds = 3;
    int ags_grid = 4;

    void validate() const {
        if (bounds.dim() < 1) throw std::invalid_argument("BoConfig: empty bounds");
        for (int i = 0; i < bounds.dim(); ++i)
            if (!(bounds.lower[i] < bounds.upper[i]) || !std::isfinite(bounds.lower[i]) ||
                !std::isfinite(bounds.upper[i]))
                throw std::invalid_argument("BoConfig: bounds must be finite with lower < upper");
        if (n_init < 2) throw std::invalid_argument("BoConfig: n_init must be >= 2");
        if (i_max < 1 || k_max < 1)
            throw std::invalid_argument("BoConfig: iteration budgets must be >= 1");
    }
};

struct HistoryRecord {
    int iteration = 0;  ///< 1-based evaluation index within the run
    Fidelity tag = Fidelity::Simulation;
    Eigen::VectorXd point;
    double value = 0.0;
    double best = 0.0;  ///< running best, non-decreasing
};

struct Provenance {
    std::string method;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<double> wall_ms;  ///< per evaluation
    /// MFBO extra: argmax of the posterior mean over the tag-2 points, for
    /// comparison with the noisy observed argmax.
    std::optional<Eigen::VectorXd> posterior_argmax;
};

struct OptimizationHistory {
    std::vector<HistoryRecord> records;
    Provenance provenance;

    const HistoryRecord& best_record() const {
        if (records.empty()) throw std::runtime_error("history is empty");
        std::size_t best = 0;
        for (std::size_t i = 1; i < records.size(); ++i)
            if (records[i].value > records[best].value) best = i;
        return records[best];
    }

    double best_value() const { return best_record().value; }
};

/// Closed-form expected improvement over incumbent j_star for a Gaussian
/// posterior. Below the variance floor the improvement collapses to its
/// deterministic limit max(0, mu - j_star).
inline double expected_improvement(double mu, double sigma_sq, double j_star,
                                   double variance_floor = 1e-12) {
    if (sigma_sq < variance_floor) return std::max(0.0, mu - j_star);
    const double sigma = std::sqrt(sigma_sq);
    const double gamma = (mu - j_star) / sigma;
    const double pdf = std::exp(-0.5 * gamma * gamma) / std::sqrt(2.0 * kPi);
    const double cdf = 0.5 * std::erfc(-gamma / std::sqrt(2.0));
    return std::max(0.0, sigma * (gamma * cdf + pdf));
}

namespace detail {

/// EI maximization in the unit cube: quasi-random screen, then coordinate-wise
/// pattern search on the top screen hits. `predict` maps a row-matrix of
/// normalized points to posterior (mean, variance) in objective units.
template <typename PredictFn>
Eigen::VectorXd maximize_ei_normalized(PredictFn&& predict, int dim, double j_star,
                                       const BoConfig& cfg, std::uint64_t seed) {
    const int m = cfg.acquisition_candidates;
    HaltonSequence halton(dim, seed);
    Eigen::MatrixXd cand(m, dim);
    for (int i = 0; i < m; ++i) cand.row(i) = halton.point(i).transpose();

    auto ei_of = [&](const Eigen::MatrixXd& pts) {
        const auto [mu, var] = predict(pts);
        Eigen::VectorXd out(pts.rows());
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            out[i] = expected_improvement(mu[i], var[i], j_star, cfg.ei_variance_floor);
        return out;
    };

    const Eigen::VectorXd ei = ei_of(cand);
    const int top = std::min<int>(cfg.acquisition_restarts, m);
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](int a, int b) {
        if (ei[a] != ei[b]) return ei[a] > ei[b];
        return a < b;
    });

    Eigen::MatrixXd pts(top, dim);
    Eigen::VectorXd val(top);
    std::vector<double> step(top, 0.05);
    for (int r = 0; r < top; ++r) {
        pts.row(r) = cand.row(order[r]);
        val[r] = ei[order[r]];
    }
    Eigen::MatrixXd probes(2 * top, dim);
    for (int s = 0; s < cfg.acquisition_steps; ++s) {
        const int j = s % dim;
        for (int r = 0; r < top; ++r) {
            probes.row(r) = pts.row(r);
            probes(r, j) = std::clamp(pts(r, j) + step[r], 0.0, 1.0);
            probes.row(top + r) = pts.row(r);
            probes(top + r, j) = std::clamp(pts(r, j) - step[r], 0.0, 1.0);
        }
        const Eigen::VectorXd pe = ei_of(probes);
        for (int r = 0; r < top; ++r) {
            const double up = pe[r], dn = pe[top + r];
            if (up > val[r] && up >= dn) {
                val[r] = up;
                pts(r, j) = probes(r, j);
            } else if (dn > val[r]) {
                val[r] = dn;
                pts(r, j) = probes(top + r, j);
            } else if (j == dim - 1) {
                step[r] *= 0.6;  // shrink once per sweep without progress
            }
        }
    }
    int best = 0;
    for (int r = 1; r < top; ++r)
        if (val[r] > val[best]) best = r;
    return pts.row(best).transpose();
}

inline double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
    // failed evaluations are recorded as zero-speed observations so dataset
    // sizes stay deterministic
    try {
        const double v = f(x);
        return std::isfinite(v) ? v : 0.0;
    } catch (const std::exception&) {
        return 0.0;
    }
}

class StopWatch {
public:
    StopWatch() : t0_(std::chrono::steady_clock::now()) {}
    double lap_ms() {
        const auto now = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - t0_).count();
        t0_ = now;
        return ms;
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

struct BoResult {
    OptimizationHistory history;
    GpModel model;
};

/// Single-fidelity Bayesian optimization: seeded Latin-hypercube init, then
/// fit / propose / evaluate until i_max proposals. The surrogate is refit on
/// a deterministic schedule (full multi-start early and periodically,
/// warm-started ascent in between, factor append otherwise).
inline BoResult run_bo(const Objective& objective, const BoConfig& cfg) {
    cfg.validate();
    const int dim = cfg.bounds.dim();
    OptimizationHistory hist;
    hist.provenance.method = "bo";
    hist.provenance.seed = cfg.seed;
    detail::StopWatch watch;

    Eigen::MatrixXd x_norm(cfg.n_init, dim);
    Eigen::VectorXd y(cfg.n_init);
    const Eigen::MatrixXd init = latin_hypercube(cfg.n_init, cfg.bounds, cfg.seed);
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cfg.n_init; ++i) {
        const Eigen::VectorXd p = init.row(i).transpose();
        const double v = detail::safe_eval(objective, p);
        x_norm.row(i) = cfg.bounds.normalize(p).transpose();
        y[i] = v;
        best = std::max(best, v);
        hist.records.push_back({i + 1, Fidelity::Simulation, p, v, best});
        hist.provenance.wall_ms.push_back(watch.lap_ms());
    }

    GpModel model;
    bool have_model = false;
    for (int it = 1; it <= cfg.i_max; ++it) {
        const int n = cfg.n_init + it - 1;
        const bool full_fit = n <= 25 || n % 25 == 0 || !have_model;
        const bool warm_fit = !full_fit && (n <= 100 || it % 5 == 0);
        if (full_fit || warm_fit) {
            GpFitOptions opts;
            opts.seed = hash_combine(cfg.seed, static_cast<std::uint64_t>(0xf17));
            if (full_fit) {
                opts.restarts = n > 150 ? 2 : 8;
                if (have_model) {
                    // keep the incumbent kernel in play alongside the restarts
                    GpFitOptions warm_opts = opts;
                    warm_opts.warm_kernel = model.kernel();
                    warm_opts.warm_passes = 2;
                    GpModel warm = GpModel::fit(x_norm, y, warm_opts);
                    GpModel fresh = GpModel::fit(x_norm, y, opts);
                    model = fresh.lml() >= warm.lml() ? std::move(fresh) : std::move(warm);
                } else {
                    model = GpModel::fit(x_norm, y, opts);
                }
            } else {
                opts.warm_kernel = model.kernel();
                opts.warm_passes = 2;
                model = GpModel::fit(x_norm, y, opts);
            }
            have_model = true;
        }

        const Eigen::VectorXd next_norm = detail::maximize_ei_normalized(
            [&](const Eigen::MatrixXd& q) { return model.predict_batch(q); }, dim, best, cfg,
            hash_combine(cfg.seed, static_cast<std::uint64_t>(it)));
        const Eigen::VectorXd next = cfg.bounds.clip(cfg.bounds.denormalize(next_norm));
        const double v = detail::safe_eval(objective, next);

        const auto n_new = x_norm.rows();
        x_norm.conservativeResize(n_new + 1, Eigen::NoChange);
        x_norm.row(n_new) = cfg.bounds.normalize(next).transpose();
        y.conservativeResize(n_new + 1);
        y[n_new] = v;
        model.append(x_norm.row(n_new).transpose(), v);

        best = std::max(best, v);
        hist.records.push_back({cfg.n_init + it, Fidelity::Simulation, next, v, best});
        hist.provenance.wall_ms.push_back(watch.lap_ms());
    }
    return BoResult{std::move(hist), std::move(model)};
}

struct MfboResult {
    OptimizationHistory history;  ///< phase-2 (tag-2) evaluations only
    MtgpModel model;
};

/// Multi-fidelity phase: warm-start from the phase-1 history, evaluate its
/// best point on the high-fidelity objective first, then iterate MTGP fit /
/// tag-2 EI / evaluate. The EI incumbent uses tag-2 observations only.
inline MfboResult run_mfbo(const Objective& high, const BoConfig& cfg,
                           const OptimizationHistory& warm_history) {
    cfg.validate();
    if (warm_history.records.empty())
        throw std::invalid_argument("run_mfbo: missing warm-start history");
    const int dim = cfg.bounds.dim();

    FidelityDataset data;
    for (const auto& rec : warm_history.records)
        data.append(cfg.bounds.normalize(rec.point), Fidelity::Simulation, rec.value);

    OptimizationHistory hist;
    hist.provenance.method = "mfbo";
    hist.provenance.seed = cfg.seed;
    detail::StopWatch watch;

    const Eigen::VectorXd p_star1 = warm_history.best_record().point;
    double best2 = -std::numeric_limits<double>::infinity();
    MtgpModel model;
    bool have_model = false;

    for (int k = 1; k <= cfg.k_max; ++k) {
        Eigen::VectorXd next;
        if (k == 1) {
            next = p_star1;
        } else {
            MtgpFitOptions opts;
            opts.seed = hash_combine(cfg.seed, static_cast<std::uint64_t>(0x3f1d));
            if (have_model) {
                opts.warm = std::make_pair(model.kernel(), model.kf());
                opts.warm_noise2 = model.noise2();
                opts.warm_passes = 2;
            }
            model = MtgpModel::fit(data, opts);
            have_model = true;
            const Eigen::VectorXd next_norm = detail::maximize_ei_normalized(
                [&](const Eigen::MatrixXd& q) {
                    return model.predict_batch(q, Fidelity::Physical);
                },
                dim, best2, cfg, hash_combine(cfg.seed, static_cast<std::uint64_t>(1000 + k)));
            next = cfg.bounds.clip(cfg.bounds.denormalize(next_norm));
        }
        const double v = detail::safe_eval(high, next);
        data.append(cfg.bounds.normalize(next), Fidelity::Physical, v);
        best2 = std::max(best2, v);
        hist.records.push_back({k, Fidelity::Physical, next, v, best2});
        hist.provenance.wall_ms.push_back(watch.lap_ms());
    }

    {
        // refresh the model with the final point included
        MtgpFitOptions opts;
        opts.seed = hash_combine(cfg.seed, static_cast<std::uint64_t>(0x3f1d));
        if (have_model) {
            opts.warm = std::make_pair(model.kernel(), model.kf());
            opts.warm_noise2 = model.noise2();
            opts.warm_passes = 2;
        }
        model = MtgpModel::fit(data, opts);
    }

    // report the model-posterior argmax over the evaluated tag-2 points
    // alongside the noisy observed argmax
    Eigen::MatrixXd q(hist.records.size(), dim);
    for (std::size_t i = 0; i < hist.records.size(); ++i)
        q.row(i) = cfg.bounds.normalize(hist.records[i].point).transpose();
    const auto [mu, var] = model.predict_batch(q, Fidelity::Physical);
    Eigen::Index arg = 0;
    mu.maxCoeff(&arg);
    hist.provenance.posterior_argmax = hist.records[static_cast<std::size_t>(arg)].point;

    return MfboResult{std::move(hist), std::move(model)};
}

enum class BaselineMethod { SimulatedAnnealing, RandomSearch, AdaptiveGridSearch };

inline std::string to_string(BaselineMethod m) {
    switch (m) {
        case BaselineMethod::SimulatedAnnealing: return "sa";
        case BaselineMethod::RandomSearch: return "rs";
        case BaselineMethod::AdaptiveGridSearch: return "ags";
    }
    return "?";
}

namespace detail {

/// Metropolis acceptance for maximization; at zero temperature only strict
/// improvements pass.
inline bool sa_accept(double delta, double temperature, double u) {
    if (delta > 0.0) return true;
    if (temperature <= 0.0) return false;
    return u < std::exp(delta / temperature);
}

inline OptimizationHistory run_random_search(const Objective& f, const BoConfig& cfg) {
    OptimizationHistory hist;
    hist.provenance.method = "rs";
    hist.provenance.seed = cfg.seed;
    Rng rng(cfg.seed);
    StopWatch watch;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 1; i <= cfg.budget; ++i) {
        Eigen::VectorXd p(cfg.bounds.dim());
        for (int j = 0; j < cfg.bounds.dim(); ++j)
            p[j] = rng.uniform(cfg.bounds.lower[j], cfg.bounds.upper[j]);
        const double v = safe_eval(f, p);
        best = std::max(best, v);
        hist.records.push_back({i, Fidelity::Simulation, p, v, best});
        hist.provenance.wall_ms.push_back(watch.lap_ms());
    }
    return hist;
}

inline OptimizationHistory run_simulated_annealing(const Objective& f, const BoConfig& cfg) {
    OptimizationHistory hist;
    hist.provenance.method = "sa";
    hist.provenance.seed = cfg.seed;
    Rng rng(cfg.seed);
    StopWatch watch;
    const int dim = cfg.bounds.dim();
    Eigen::VectorXd cur(dim);
    for (int j = 0; j < dim; ++j) cur[j] = rng.uniform(cfg.bounds.lower[j], cfg.bounds.upper[j]);
    double cur_v = safe_eval(f, cur);
    double best = cur_v;
    hist.records.push_back({1, Fidelity::Simulation, cur, cur_v, best});
    hist.provenance.wall_ms.push_back(watch.lap_ms());
    double temp = cfg.sa_t0;
    double step = cfg.sa_step0;
    for (int t = 2; t <= cfg.budget; ++t) {
        Eigen::VectorXd prop = cur;
        for (int j = 0; j < dim; ++j) {
            const double range = cfg.bounds.upper[j] - cfg.bounds.lower[j];
            prop[j] += step * range * rng.gaussian();
        }
        prop = cfg.bounds.clip(prop);
        const double v = safe_eval(f, prop);
        if (sa_accept(v - cur_v, temp, rng.uniform01())) {
            cur = prop;
            cur_v = v;
        }
        temp *= cfg.sa_temp_decay;
        step *= cfg.sa_step_decay;
        best = std::max(best, v);
        hist.records.push_back({t, Fidelity::Simulation, prop, v, best});
        hist.provenance.wall_ms.push_back(watch.lap_ms());
    }
    return hist;
}

inline OptimizationHistory run_adaptive_grid_search(const Objective& f, const BoConfig& cfg) {
    OptimizationHistory hist;
    hist.provenance.method = "ags";
    hist.provenance.seed = cfg.seed;
    StopWatch watch;
    const int dim = cfg.bounds.dim();
    if (dim > 6) throw std::invalid_argument("AGS: grid search beyond 6 dimensions");
    Bounds box = cfg.bounds;
    double best = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd incumbent = box.lower;
    int iter = 0;
    const int g = cfg.ags_grid;
    for (int round = 0; round < cfg.ags_rounds; ++round) {
        Eigen::MatrixXd levels(g, dim);
        for (int j = 0; j < dim; ++j)
            for (int l = 0; l < g; ++l)
                levels(l, j) = box.lower[j] + (box.upper[j] - box.lower[j]) * l / (g - 1);
        std::vector<int> idx(dim, 0);
        Eigen::VectorXd round_best_point = incumbent;
        double round_best = -std::numeric_limits<double>::infinity();
        while (true) {
            Eigen::VectorXd p(dim);
            for (int j = 0; j < dim; ++j) p[j] = levels(idx[j], j);
            const double v = safe_eval(f, p);
            best = std::max(best, v);
            if (v > round_best) {
                round_best = v;
                round_best_point = p;
            }
            hist.records.push_back({++iter, Fidelity::Simulation, p, v, best});
            hist.provenance.wall_ms.push_back(watch.lap_ms());
            int j = 0;
            while (j < dim && ++idx[j] == g) idx[j++] = 0;
            if (j == dim) break;
        }
        incumbent = round_best_point;
        // shrink to the incumbent's grid-cell neighborhood
        for (int j = 0; j < dim; ++j) {
            const double cell = (box.upper[j] - box.lower[j]) / (g - 1);
            box.lower[j] = std::max(cfg.bounds.lower[j], incumbent[j] - cell);
            box.upper[j] = std::min(cfg.bounds.upper[j], incumbent[j] + cell);
        }
    }
    return hist;
}

}  // namespace detail

/// Non-model baselines from the evaluation study.
inline OptimizationHistory run_baseline(BaselineMethod method, const Objective& objective,
                                        const BoConfig& cfg) {
    cfg.validate();
    switch (method) {
        case BaselineMethod::RandomSearch: return detail::run_random_search(objective, cfg);
        case BaselineMethod::SimulatedAnnealing:
            return detail::run_simulated_annealing(objective, cfg);
        case BaselineMethod::AdaptiveGridSearch:
            return detail::run_adaptive_grid_search(objective, cfg);
    }
    throw std::invalid_argument("run_baseline: unknown method");
}

}  // namespace gaitopt
