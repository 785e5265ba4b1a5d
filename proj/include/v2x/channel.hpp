#pragma once

// Channel quality: Rayleigh fast fading times a three-regime urban path loss.

#include <v2x/errors.hpp>
#include <v2x/grid.hpp>
#include <v2x/rng.hpp>

#include <cmath>
#include <vector>

namespace v2x {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

struct PathLossParams {
    double rho = db_to_linear(-68.5);
    double xi = db_to_linear(-54.5);
    double exponent = 1.61;
    double phi0 = 15.0;

    /// The NLOS gain constant must stay below the LOS one at half the
    /// near-intersection distance.
    bool consistent() const { return xi < rho * std::pow(phi0 / 2.0, exponent); }
};

/// How the unit-scale Rayleigh draw enters the power gain.
enum class FadingMode {
    Power,      // nu = amplitude^2 (exponential, mean 2)
    Amplitude,  // nu = amplitude (mean sqrt(pi/2))
    None,       // nu = 1
};

inline const char* to_string(FadingMode m) {
    switch (m) {
        case FadingMode::Power: return "power";
        case FadingMode::Amplitude: return "amplitude";
        case FadingMode::None: return "none";
    }
    return "?";
}

using ChannelGains = std::vector<double>;

inline double path_loss(const PairPose& pose, Regime regime, const PathLossParams& params) {
    const double dx = std::abs(pose.tx.x - pose.rx.x);
    const double dy = std::abs(pose.tx.y - pose.rx.y);
    switch (regime) {
        case Regime::LOS: return params.rho * std::pow(std::hypot(dx, dy), -params.exponent);
        case Regime::WLOS: return params.rho * std::pow(dx + dy, -params.exponent);
        case Regime::NLOS:
            if (dx == 0.0 || dy == 0.0) {
                throw DegenerateGeometryError("NLOS path loss needs both coordinate offsets non-zero");
            }
            return params.xi * std::pow(dx * dy, -params.exponent);
    }
    return 0.0;
}

/// One unit-scale Rayleigh amplitude sample by inversion.
inline double rayleigh_amplitude(Rng& rng) {
    // 1 - U keeps the argument of log in (0, 1].
    return std::sqrt(-2.0 * std::log(1.0 - uniform01(rng)));
}

inline double fading_factor(FadingMode mode, Rng& rng) {
    switch (mode) {
        case FadingMode::Power: {
            const double a = rayleigh_amplitude(rng);
            return a * a;
        }
        case FadingMode::Amplitude: return rayleigh_amplitude(rng);
        case FadingMode::None: return 1.0;
    }
    return 1.0;
}

/// Draws an independent fading factor per channel on top of the pose's path loss.
inline ChannelGains draw_gains(const PairPose& pose, const GridMap& map, const PathLossParams& params,
                               int channels, FadingMode mode, Rng& rng) {
    if (channels < 1) throw InvalidStateError("need at least one channel");
    const double h = path_loss(pose, classify_geometry(pose, map, params.phi0), params);
    ChannelGains g(static_cast<std::size_t>(channels));
    for (auto& gj : g) {
        gj = h * fading_factor(mode, rng);
        // a zero fading draw has probability ~2^-53; keep gains strictly positive
        if (!(gj > 0.0)) gj = h * 0x1.0p-53;
    }
    return g;
}

}  // namespace v2x
