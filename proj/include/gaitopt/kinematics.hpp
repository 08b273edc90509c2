#pragma once

#include <cmath>
#include <stdexcept>

namespace gaitopt {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Per-leg actuation state: bend magnitude, bend direction, axial compression.
/// Bend direction is carried entirely by alpha_r, so alpha_b is non-negative;
/// tendons can only pull, so z_l is non-negative too.
struct LegState {
    double alpha_b = 0.0;  ///< bend angle, rad, >= 0
    double alpha_r = 0.0;  ///< rotation angle, rad
    double z_l = 0.0;      ///< compression, m, >= 0

    LegState() = default;
    LegState(double bend, double rotation, double compression)
        : alpha_b(bend), alpha_r(rotation), z_l(compression) {
        if (!(alpha_b >= 0.0)) throw std::invalid_argument("LegState: alpha_b must be >= 0");
        if (!(z_l >= 0.0)) throw std::invalid_argument("LegState: z_l must be >= 0");
    }
};

/// Displacement of the three cables driving one leg, meters.
struct TendonDisplacement {
    double x_a = 0.0;
    double x_b = 0.0;
    double x_c = 0.0;

    double sum() const { return x_a + x_b + x_c; }
};

struct LegGeometry {
    double r_d = 0.02;    ///< guide-disk hole-circle radius, m
    double l_leg = 0.10;  ///< effective lower-leg length, m (synthetic plant only)

    LegGeometry() = default;
    LegGeometry(double disk_radius, double leg_length) : r_d(disk_radius), l_leg(leg_length) {
        if (!(r_d > 0.0) || !(l_leg > 0.0))
            throw std::invalid_argument("LegGeometry: r_d and l_leg must be positive");
    }
};

/// Maps a leg state to the three tendon displacements (motor references).
/// The three direction cosines are 2*pi/3 apart, so they sum to zero and the
/// total displacement always equals 3*z_l.
inline TendonDisplacement inverse_kinematics(const LegState& s, const LegGeometry& geom) {
    const double b = geom.r_d * s.alpha_b;
    return TendonDisplacement{
        b * std::cos(s.alpha_r) + s.z_l,
        b * std::cos(s.alpha_r + 2.0 * kPi / 3.0) + s.z_l,
        b * std::cos(s.alpha_r + 4.0 * kPi / 3.0) + s.z_l,
    };
}

struct FootPosition {
    double x = 0.0;  ///< m forward
    double z = 0.0;  ///< m height above full leg extension
};

/// Planar arc-geometry forward map used by the synthetic plant. The real
/// robot's foot placement comes from a multibody simulation; this closed form
/// only preserves the qualitative x-z foot pattern.
inline FootPosition foot_position(const LegState& s, const LegGeometry& geom) {
    return FootPosition{
        geom.l_leg * std::sin(s.alpha_b) * std::cos(s.alpha_r),
        geom.l_leg * (1.0 - std::cos(s.alpha_b)) + s.z_l,
    };
}

}  // namespace gaitopt
