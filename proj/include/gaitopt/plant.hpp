#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gaitopt/cpg.hpp"
#include "gaitopt/kinematics.hpp"
#include "gaitopt/optimizer.hpp"

namespace gaitopt {

/// Systematic biases applied by the high-fidelity variant: multiplicative
/// per-coordinate scaling of the commanded gait vector (an actuator that
/// under-delivers amplitude, a clock that runs off, ...) plus a leg-length
/// bias in the forward map.
struct MorphologyPerturbation {
    std::array<double, 5> param_scale = {1.0, 1.0, 1.0, 1.0, 1.0};
    double lleg_scale = 1.0;

    bool is_identity() const {
        for (double s : param_scale)
            if (s != 1.0) return false;
        return lleg_scale == 1.0;
    }
};

/// Synthetic gait plant standing in for the multibody simulator and the
/// physical robot. The mechanism is deliberately simple (stance-velocity body
/// speed with a slip penalty) so a full evaluation stays in the 10 ms range;
/// none of its outputs are claimed to match any real robot's numbers.
struct PlantConfig {
    std::string preset_name = "default";
    LegGeometry geometry{0.02, 0.10};
    CpgConstants cpg{};
    Bounds bounds = design_bounds();            ///< admissible gait vectors
    double ground_clearance_threshold = 0.004;  ///< m; foot is in stance below this
    double slip_gain = 0.5;                     ///< penalty per m/s^2 over budget
    double slip_accel_budget = 1.0;             ///< m/s^2 tolerated in stance
    MorphologyPerturbation morphology_perturbation{};
    double noise_sd = 0.01;  ///< m/s observation noise on the high-fidelity tag
    double duration = 25.0;  ///< s; must cover 10 periods of the slowest gait
    double dt = 1e-3;        ///< s
    std::uint64_t seed = 0;

    void validate() const {
        if (!(noise_sd >= 0.0)) throw std::invalid_argument("PlantConfig: noise_sd must be >= 0");
        if (!(duration > 0.0) || !(dt > 0.0))
            throw std::invalid_argument("PlantConfig: duration and dt must be positive");
    }
};

/// Named plant presets used across experiments and tests.
inline PlantConfig make_preset(const std::string& name) {
    PlantConfig cfg;
    cfg.preset_name = name;
    if (name == "default") {
        // calibrated so the low/high Pearson correlation over 200 quasi-random
        // points lands near 0.6 (inside the [0.45, 0.75] contract band)
        cfg.morphology_perturbation.param_scale = {0.78, 0.90, 1.10, 1.30, 1.20};
        cfg.morphology_perturbation.lleg_scale = 1.15;
        cfg.noise_sd = 0.004;
    } else if (name == "zero-gap") {
        cfg.morphology_perturbation = MorphologyPerturbation{};
        cfg.noise_sd = 0.0;
    } else if (name == "extreme-gap") {
        cfg.morphology_perturbation.param_scale = {0.55, 1.6, 1.25, 0.6, 1.7};
        cfg.morphology_perturbation.lleg_scale = 0.7;
        cfg.noise_sd = 0.02;
    } else {
        throw std::invalid_argument("unknown plant preset: " + name);
    }
    return cfg;
}

struct GaitEvaluation {
    double speed = 0.0;  ///< m/s, stabilized mean; 0 when invalid
    bool valid = false;
    double duty_factor = 0.0;
    double stride_length = 0.0;  ///< m per cycle
    double step_height = 0.0;    ///< m
};

/// Mean of the samples after the transient cutoff.
inline double stabilized_speed(const std::vector<double>& series, double dt, double cutoff) {
    const auto first = static_cast<std::size_t>(std::ceil(cutoff / dt + 1e-9));
    if (first >= series.size())
        throw std::invalid_argument("stabilized_speed: series shorter than the cutoff");
    double acc = 0.0;
    for (std::size_t i = first; i < series.size(); ++i) acc += series[i];
    return acc / static_cast<double>(series.size() - first);
}

namespace detail {

/// Clamp a perturbed coordinate vector back into simulable territory.
inline Eigen::VectorXd sanitize_coordinates(Eigen::VectorXd c) {
    c[0] = std::max(c[0], 1e-3);
    c[1] = std::max(c[1], 0.0);
    c[2] = std::max(c[2], 0.05);
    c[3] = std::min(std::max(c[3], 0.02), 0.98);
    c[4] = std::fmod(c[4], kTwoPi);
    if (c[4] < 0.0) c[4] += kTwoPi;
    return c;
}

}  // namespace detail

/// Evaluate the stabilized walking speed of a gait vector. Fidelity 1 is the
/// noiseless unperturbed landscape; fidelity 2 applies the morphology biases
/// and additive observation noise. Deterministic in (point, cfg, fidelity,
/// seed).
inline GaitEvaluation evaluate_gait(const Eigen::VectorXd& point, const PlantConfig& cfg,
                                    Fidelity fidelity, std::uint64_t seed) {
    cfg.validate();
    if (!cfg.bounds.contains(point, 1e-9))
        throw std::out_of_range("evaluate_gait: point outside the design bounds");

    Eigen::VectorXd c = point;
    LegGeometry geom = cfg.geometry;
    if (fidelity == Fidelity::Physical) {
        for (int j = 0; j < 5; ++j) c[j] *= cfg.morphology_perturbation.param_scale[j];
        c = detail::sanitize_coordinates(std::move(c));
        geom = LegGeometry(geom.r_d, geom.l_leg * cfg.morphology_perturbation.lleg_scale);
    }
    const GaitParams params = params_from_point(c);
    const auto traj = leg_trajectories(params, cfg.cpg, cfg.duration, cfg.dt);
    const auto n = traj.samples();

    // planar foot tracks
    const double cos_rot = std::cos(cfg.cpg.theta_ref);
    std::array<std::vector<double>, 4> fx, fz;
    for (int leg = 0; leg < 4; ++leg) {
        fx[leg].resize(n);
        fz[leg].resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double ab = traj.alpha_b[leg][k];
            fx[leg][k] = geom.l_leg * std::sin(ab) * cos_rot;
            fz[leg][k] = geom.l_leg * (1.0 - std::cos(ab)) + traj.z_l[leg][k];
        }
    }

    // body speed from backward stance-foot velocity, with a slip penalty on
    // stance-foot acceleration beyond the friction budget
    const double dt = cfg.dt;
    std::vector<double> body_speed(n, 0.0);
    const double cutoff = traj.transient_cutoff;
    std::size_t transitions = 0;
    double duty_acc = 0.0;
    std::size_t duty_n = 0;
    const auto first_measured = static_cast<std::size_t>(std::ceil(cutoff / dt + 1e-9));
    for (std::size_t k = 1; k + 1 < n; ++k) {
        int stance = 0;
        double vsum = 0.0;
        double asum = 0.0;
        for (int leg = 0; leg < 4; ++leg) {
            const bool down = fz[leg][k] < cfg.ground_clearance_threshold;
            if (k >= first_measured) {
                duty_acc += down ? 1.0 : 0.0;
                ++duty_n;
                const bool down_prev = fz[leg][k - 1] < cfg.ground_clearance_threshold;
                if (down != down_prev) ++transitions;
            }
            if (!down) continue;
            ++stance;
            vsum += -(fx[leg][k + 1] - fx[leg][k - 1]) / (2.0 * dt);
            asum += std::abs(fx[leg][k + 1] - 2.0 * fx[leg][k] + fx[leg][k - 1]) / (dt * dt);
        }
        if (stance == 0) continue;
        const double mean_acc = asum / stance;
        const double slip = 1.0 / (1.0 + cfg.slip_gain *
                                             std::max(0.0, mean_acc - cfg.slip_accel_budget));
        body_speed[k] = (vsum / 4.0) * slip;
    }

    GaitEvaluation out;
    double speed = stabilized_speed(body_speed, dt, cutoff);
    if (fidelity == Fidelity::Physical && cfg.noise_sd > 0.0) {
        std::uint64_t h = hash_combine(cfg.seed, seed);
        h = hash_combine(h, static_cast<std::uint64_t>(fidelity == Fidelity::Physical ? 2 : 1));
        for (int j = 0; j < 5; ++j) h = hash_combine(h, point[j]);
        Rng rng(h);
        speed += cfg.noise_sd * rng.gaussian();
    }
    out.valid = transitions >= 1 && speed > 0.0;
    out.speed = out.valid ? speed : 0.0;
    out.duty_factor = duty_n > 0 ? duty_acc / static_cast<double>(duty_n) : 0.0;
    out.stride_length = out.speed * params.period();
    double height = 0.0;
    for (int leg = 0; leg < 4; ++leg) {
        double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
        for (std::size_t k = first_measured; k < n; ++k) {
            zmin = std::min(zmin, fz[leg][k]);
            zmax = std::max(zmax, fz[leg][k]);
        }
        height += zmax - zmin;
    }
    out.step_height = height / 4.0;
    return out;
}

inline GaitEvaluation evaluate_gait(const GaitParams& p, const PlantConfig& cfg, Fidelity fidelity,
                                    std::uint64_t seed) {
    return evaluate_gait(point_from_params(p), cfg, fidelity, seed);
}

/// The (low, high) objective pair the optimizer consumes. Evaluations are
/// pure functions of (point, cfg, seed).
inline std::pair<Objective, Objective> make_fidelity_pair(const PlantConfig& cfg) {
    Objective low = [cfg](const Eigen::VectorXd& p) {
        return evaluate_gait(p, cfg, Fidelity::Simulation, cfg.seed).speed;
    };
    Objective high = [cfg](const Eigen::VectorXd& p) {
        return evaluate_gait(p, cfg, Fidelity::Physical, cfg.seed).speed;
    };
    return {std::move(low), std::move(high)};
}

/// High-fidelity landscape with the observation noise switched off; the
/// acceptance measurements score candidates on this.
inline Objective make_noiseless_high(PlantConfig cfg) {
    cfg.noise_sd = 0.0;
    return [cfg](const Eigen::VectorXd& p) {
        return evaluate_gait(p, cfg, Fidelity::Physical, cfg.seed).speed;
    };
}

/// Planar foot-track export (t, leg, x, z) for foot-pattern plots.
template <typename Stream>
void export_foot_pattern_csv(const Eigen::VectorXd& point, const PlantConfig& cfg,
                             Fidelity fidelity, Stream& os) {
    cfg.validate();
    Eigen::VectorXd c = point;
    LegGeometry geom = cfg.geometry;
    if (fidelity == Fidelity::Physical) {
        for (int j = 0; j < 5; ++j) c[j] *= cfg.morphology_perturbation.param_scale[j];
        c = detail::sanitize_coordinates(std::move(c));
        geom = LegGeometry(geom.r_d, geom.l_leg * cfg.morphology_perturbation.lleg_scale);
    }
    const GaitParams params = params_from_point(c);
    const auto traj = leg_trajectories(params, cfg.cpg, cfg.duration, cfg.dt);
    os << "t,leg,x,z\n";
    char buf[128];
    for (std::size_t k = 0; k < traj.samples(); ++k) {
        for (int leg = 0; leg < 4; ++leg) {
            const auto fp = foot_position(traj.state(leg, k), geom);
            std::snprintf(buf, sizeof(buf), "%.6f,%d,%.9g,%.9g\n", traj.time[k], leg + 1, fp.x,
                          fp.z);
            os << buf;
        }
    }
}

}  // namespace gaitopt
