#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gaitopt/kinematics.hpp"
#include "gaitopt/sampling.hpp"

namespace gaitopt {

/// The 5-dimensional gait design vector. The optimizer works on a fixed box
/// whose fifth coordinate is a phase angle in [0, 2*pi]; here the delay is
/// stored in seconds, so phi always lies in [0, 1/f] regardless of f.
struct GaitParams {
    double a_alpha_b;  ///< bend amplitude, rad
    double a_z_l;      ///< compression amplitude, m
    double f;          ///< base frequency, Hz
    double alpha;      ///< shape ratio in (0, 1)
    double phi;        ///< bend-to-compression delay, s, in [0, 1/f]

    GaitParams(double bend_amp, double comp_amp, double freq, double shape, double delay)
        : a_alpha_b(bend_amp), a_z_l(comp_amp), f(freq), alpha(shape), phi(delay) {
        if (!(a_alpha_b > 0.0)) throw std::invalid_argument("GaitParams: a_alpha_b must be > 0");
        if (!(a_z_l >= 0.0)) throw std::invalid_argument("GaitParams: a_z_l must be >= 0");
        if (!(f > 0.0)) throw std::invalid_argument("GaitParams: f must be > 0");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("GaitParams: alpha must be strictly inside (0, 1)");
        if (!(phi >= -1e-12 && phi <= 1.0 / f + 1e-12))
            throw std::invalid_argument("GaitParams: phi must lie in [0, 1/f]");
        phi = std::min(std::max(phi, 0.0), 1.0 / f);
    }

    double period() const { return 1.0 / f; }
};

/// Default design-space box (coordinates: bend amp, compression amp,
/// frequency, shape ratio, phase angle in [0, 2*pi]).
inline Bounds design_bounds() {
    Bounds b;
    b.lower.resize(5);
    b.upper.resize(5);
    b.lower << 0.1, 0.001, 0.4, 0.1, 0.0;
    b.upper << 0.7, 0.008, 2.0, 0.9, kTwoPi;
    return b;
}

/// Decode a design-space point into physical gait parameters.
inline GaitParams params_from_point(const Eigen::VectorXd& c) {
    if (c.size() != 5) throw std::invalid_argument("params_from_point: expected 5 coordinates");
    return GaitParams(c[0], c[1], c[2], c[3], c[4] / kTwoPi / c[2]);
}

inline Eigen::VectorXd point_from_params(const GaitParams& p) {
    Eigen::VectorXd c(5);
    c << p.a_alpha_b, p.a_z_l, p.f, p.alpha, p.phi * p.f * kTwoPi;
    return c;
}

/// Oscillator-network constants. These shape convergence and coordination but
/// not the steady-state gait, so they stay fixed during optimization.
struct CpgConstants {
    double k = 1000.0;    ///< convergence gain, 1/s
    double tau = 1.0;     ///< sigmoid time-constant scale
    double epsilon = 5.0; ///< coupling strength
    std::array<double, 4> theta = {0.0, kPi, kPi, 0.0};  ///< per-leg phase offsets (trot)
    double theta_ref = 0.0;  ///< movement direction, sets alpha_r

    void validate() const {
        if (!(k > 0.0)) throw std::invalid_argument("CpgConstants: k must be > 0");
        if (!(epsilon >= 0.0)) throw std::invalid_argument("CpgConstants: epsilon must be >= 0");
    }
};

/// State-modulated oscillation frequency. At alpha = 0.5 this is constant f;
/// otherwise it switches between f/(2*alpha) (o2 < 0) and f/(2*(1-alpha))
/// (o2 > 0) through a sigmoid of steepness tau.
inline double modulated_frequency(double o2, double f, double alpha, double tau) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("modulated_frequency: alpha must be inside (0, 1)");
    if (!(f > 0.0)) throw std::invalid_argument("modulated_frequency: f must be > 0");
    const double x = tau * o2;
    double sig;  // 1/(1+e^{-x}) without overflow on either tail
    if (x >= 0.0) {
        sig = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        sig = e / (1.0 + e);
    }
    return f / (2.0 * alpha) + (2.0 * alpha - 1.0) * f * sig / (2.0 * alpha * (1.0 - alpha));
}

struct OscState {
    double o1 = 0.0;
    double o2 = 0.0;

    double radius() const { return std::hypot(o1, o2); }
};

struct CouplingTerm {
    double q1 = 0.0;
    double q2 = 0.0;
};

/// Perturbation injected into a leg oscillator from the primitive state,
/// rotated by theta_i.
inline CouplingTerm coupling_term(const OscState& primitive, double theta_i, double epsilon) {
    return CouplingTerm{0.0, epsilon * (primitive.o1 * std::sin(theta_i) +
                                        primitive.o2 * std::cos(theta_i))};
}

/// Right-hand side of the Hopf oscillator with modulated frequency f_a and
/// additive coupling q.
inline OscState oscillator_derivative(const OscState& s, const CouplingTerm& q, double amplitude,
                                      double f_a, double k) {
    const double radial = k * (amplitude * amplitude - s.o1 * s.o1 - s.o2 * s.o2);
    const double w = kTwoPi * f_a;
    return OscState{radial * s.o1 - w * s.o2 + q.q1, radial * s.o2 + w * s.o1 + q.q2};
}

/// Sharpness applied to the frequency sigmoid inside the bank, normalized by
/// amplitude. Saturating the sigmoid is what makes the shape ratio act on the
/// waveform (fraction of the period per half-cycle) while the period itself
/// stays 1/f; with the raw state as argument the period would drift with
/// alpha and amplitude.
inline constexpr double kSigmoidSharpness = 4000.0;

namespace detail {

/// Rotate an oscillator state backward in time by dt_back along the ideal
/// saturated two-rate cycle (rate f/(2*(1-alpha)) on the upper half circle,
/// f/(2*alpha) on the lower). For alpha = 0.5 this is a plain rotation by
/// -2*pi*f*dt_back. Radius is preserved.
inline OscState rotate_back_time(const OscState& o, double f, double alpha, double dt_back) {
    if (dt_back <= 0.0) return o;
    const double r = o.radius();
    if (r == 0.0) return o;
    const double w_up = kTwoPi * f / (2.0 * (1.0 - alpha));
    const double w_dn = kTwoPi * f / (2.0 * alpha);
    double chi = std::atan2(o.o2, o.o1);
    if (chi < 0.0) chi += kTwoPi;
    double rem = dt_back;
    for (int guard = 0; guard < 8 && rem > 0.0; ++guard) {
        if (chi > 0.0 && chi <= kPi) {  // upper half, exits backward at chi = 0
            const double t_edge = chi / w_up;
            if (t_edge >= rem) {
                chi -= w_up * rem;
                rem = 0.0;
            } else {
                chi = kTwoPi;  // wrap into the lower half
                rem -= t_edge;
            }
        } else {  // lower half (pi, 2*pi], exits backward at chi = pi
            if (chi == 0.0) chi = kTwoPi;
            const double t_edge = (chi - kPi) / w_dn;
            if (t_edge >= rem) {
                chi -= w_dn * rem;
                rem = 0.0;
            } else {
                chi = kPi;
                rem -= t_edge;
            }
        }
    }
    return OscState{r * std::cos(chi), r * std::sin(chi)};
}

}  // namespace detail

/// Primitive plus four coupled leg oscillators.
struct OscillatorBank {
    OscState primitive;
    std::array<OscState, 4> legs;
    double t = 0.0;
};

/// Bank whose legs start on their locked targets: primitive at (A, 0), each
/// leg rotated back by its phase delay. Production trajectories then only
/// carry a radial/waveform transient.
inline OscillatorBank initial_bank(const GaitParams& p, const CpgConstants& consts) {
    consts.validate();
    OscillatorBank bank;
    bank.primitive = OscState{p.a_alpha_b, 0.0};
    for (int i = 0; i < 4; ++i) {
        double th = std::fmod(consts.theta[i], kTwoPi);
        if (th < 0.0) th += kTwoPi;
        bank.legs[i] = detail::rotate_back_time(bank.primitive, p.f, p.alpha,
                                                th / kTwoPi * p.period());
    }
    return bank;
}

/// Randomized start (all oscillators placed uniformly in the amplitude disk).
inline OscillatorBank initial_bank_randomized(const GaitParams& p, const CpgConstants& consts,
                                              std::uint64_t seed) {
    consts.validate();
    Rng rng(seed);
    auto draw = [&] {
        // rejection-free: radius in [0.2A, A], angle uniform
        const double r = p.a_alpha_b * (0.2 + 0.8 * rng.uniform01());
        const double a = kTwoPi * rng.uniform01();
        return OscState{r * std::cos(a), r * std::sin(a)};
    };
    OscillatorBank bank;
    bank.primitive = draw();
    for (auto& leg : bank.legs) leg = draw();
    return bank;
}

namespace detail {

using BankVec = std::array<double, 10>;

inline BankVec to_vec(const OscillatorBank& b) {
    BankVec v{};
    v[0] = b.primitive.o1;
    v[1] = b.primitive.o2;
    for (int i = 0; i < 4; ++i) {
        v[2 + 2 * i] = b.legs[i].o1;
        v[3 + 2 * i] = b.legs[i].o2;
    }
    return v;
}

inline void from_vec(const BankVec& v, OscillatorBank& b) {
    b.primitive = OscState{v[0], v[1]};
    for (int i = 0; i < 4; ++i) b.legs[i] = OscState{v[2 + 2 * i], v[3 + 2 * i]};
}

struct BankDynamics {
    const GaitParams& p;
    const CpgConstants& consts;
    std::array<double, 4> delay;  ///< per-leg time delay theta_i/(2*pi)*T

    explicit BankDynamics(const GaitParams& params, const CpgConstants& c) : p(params), consts(c) {
        for (int i = 0; i < 4; ++i) {
            double th = std::fmod(c.theta[i], kTwoPi);
            if (th < 0.0) th += kTwoPi;
            delay[i] = th / kTwoPi * p.period();
        }
    }

    BankVec operator()(const BankVec& v) const {
        const double amp = p.a_alpha_b;
        const double tau_eff = consts.tau * kSigmoidSharpness / amp;
        BankVec d{};
        const OscState prim{v[0], v[1]};
        {
            const double fa = modulated_frequency(prim.o2, p.f, p.alpha, tau_eff);
            const OscState dp = oscillator_derivative(prim, CouplingTerm{}, amp, fa, consts.k);
            d[0] = dp.o1;
            d[1] = dp.o2;
        }
        // memoize the rotated primitive per distinct delay (trot has two)
        double memo_delay = -1.0;
        OscState memo_state{};
        for (int i = 0; i < 4; ++i) {
            const OscState leg{v[2 + 2 * i], v[3 + 2 * i]};
            OscState target = prim;
            if (delay[i] > 0.0) {
                if (delay[i] == memo_delay) {
                    target = memo_state;
                } else {
                    target = rotate_back_time(prim, p.f, p.alpha, delay[i]);
                    memo_delay = delay[i];
                    memo_state = target;
                }
            }
            // diffusive coupling: the locked orbit (leg == delayed primitive)
            // is an exact solution for any epsilon
            const CouplingTerm q{0.0, coupling_term(target, 0.0, consts.epsilon).q2 -
                                          coupling_term(leg, 0.0, consts.epsilon).q2};
            const double fa = modulated_frequency(leg.o2, p.f, p.alpha, tau_eff);
            const OscState dl = oscillator_derivative(leg, q, amp, fa, consts.k);
            d[2 + 2 * i] = dl.o1;
            d[3 + 2 * i] = dl.o2;
        }
        return d;
    }
};

}  // namespace detail

/// Advance the whole bank by one classical RK4 step. dt must not exceed
/// T/100 (stiff radial dynamics for large k).
inline OscillatorBank step_bank(const OscillatorBank& bank, const GaitParams& p,
                                const CpgConstants& consts, double dt) {
    consts.validate();
    if (!(dt > 0.0) || dt > p.period() / 100.0 + 1e-15)
        throw std::invalid_argument("step_bank: require 0 < dt <= T/100");
    const detail::BankDynamics dyn(p, consts);
    auto y = detail::to_vec(bank);
    const auto k1 = dyn(y);
    detail::BankVec y2{}, y3{}, y4{};
    for (int i = 0; i < 10; ++i) y2[i] = y[i] + 0.5 * dt * k1[i];
    const auto k2 = dyn(y2);
    for (int i = 0; i < 10; ++i) y3[i] = y[i] + 0.5 * dt * k2[i];
    const auto k3 = dyn(y3);
    for (int i = 0; i < 10; ++i) y4[i] = y[i] + dt * k3[i];
    const auto k4 = dyn(y4);
    for (int i = 0; i < 10; ++i) y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    OscillatorBank out;
    detail::from_vec(y, out);
    out.t = bank.t + dt;
    return out;
}

/// Sampled per-leg gait trajectories (struct-of-arrays layout; alpha_r is a
/// single constant).
struct LegTrajectories {
    double dt = 0.0;
    double transient_cutoff = 0.0;  ///< seconds to discard before measuring
    double theta_ref = 0.0;
    std::vector<double> time;
    std::array<std::vector<double>, 4> alpha_b;
    std::array<std::vector<double>, 4> z_l;
    std::array<std::vector<double>, 4> raw_o1;  ///< unscaled oscillator output

    std::size_t samples() const { return time.size(); }

    LegState state(int leg, std::size_t k) const {
        return LegState(alpha_b[leg][k], theta_ref, z_l[leg][k]);
    }
};

/// Transient discard rule shared with the plant.
inline double transient_cutoff_seconds(const GaitParams& p, const CpgConstants& consts) {
    return std::max(10.0 / consts.k, 3.0 * p.period());
}

/// Integrate the bank and emit per-leg LegState series. The oscillator output
/// is shifted and rescaled to swing in [0, amplitude] (non-negative bend and
/// compression); the compression channel is the bend waveform delayed by phi.
inline LegTrajectories leg_trajectories(const GaitParams& p, const CpgConstants& consts,
                                        double duration, double dt,
                                        const OscillatorBank* start = nullptr) {
    if (!(duration >= 10.0 / p.f))
        throw std::invalid_argument("leg_trajectories: duration must cover at least 10 periods");
    OscillatorBank bank = start ? *start : initial_bank(p, consts);
    const auto n = static_cast<std::size_t>(std::llround(duration / dt));
    LegTrajectories out;
    out.dt = dt;
    out.transient_cutoff = transient_cutoff_seconds(p, consts);
    out.theta_ref = consts.theta_ref;
    out.time.resize(n + 1);
    for (auto& v : out.raw_o1) v.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        out.time[k] = bank.t;
        for (int i = 0; i < 4; ++i) out.raw_o1[i][k] = bank.legs[i].o1;
        if (k < n) bank = step_bank(bank, p, consts, dt);
    }
    const double amp = p.a_alpha_b;
    const auto delay_steps = static_cast<std::size_t>(std::llround(p.phi / dt));
    for (int i = 0; i < 4; ++i) {
        out.alpha_b[i].resize(n + 1);
        out.z_l[i].resize(n + 1);
        for (std::size_t k = 0; k <= n; ++k) {
            const double bend = (out.raw_o1[i][k] + amp) * (p.a_alpha_b / (2.0 * amp));
            out.alpha_b[i][k] = std::max(0.0, bend);
            const std::size_t kd = k >= delay_steps ? k - delay_steps : 0;
            const double comp = (out.raw_o1[i][kd] + amp) * (p.a_z_l / (2.0 * amp));
            out.z_l[i][k] = std::max(0.0, comp);
        }
    }
    return out;
}

/// CSV export: t, leg, alpha_b, alpha_r, z_l, x_a, x_b, x_c.
template <typename Stream>
void export_trajectory_csv(const LegTrajectories& traj, const LegGeometry& geom, Stream& os) {
    os << "t,leg,alpha_b,alpha_r,z_l,x_a,x_b,x_c\n";
    char buf[256];
    for (std::size_t k = 0; k < traj.samples(); ++k) {
        for (int leg = 0; leg < 4; ++leg) {
            const LegState s = traj.state(leg, k);
            const TendonDisplacement x = inverse_kinematics(s, geom);
            std::snprintf(buf, sizeof(buf), "%.6f,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                          traj.time[k], leg + 1, s.alpha_b, s.alpha_r, s.z_l, x.x_a, x.x_b, x.x_c);
            os << buf;
        }
    }
}

}  // namespace gaitopt
