#pragma once

// Hong-Ou-Mandel coincidence probability versus relative delay.
//
// For a CW-pumped degenerate pair the signal and idler detunings are
// anti-correlated, so a delay tau imposes a relative phase 2 Omega tau:
//
//   P(tau) = 1/2 [1 - kappa Re( int phi(W) phi*(-W) e^{-2 i W tau} dW / int |phi|^2 dW )]

#include <span>
#include <vector>

#include "bspdc/spectrum.hpp"

namespace bspdc {

struct HomTrace {
    std::vector<double> delay;
    std::vector<double> probability;
};

HomTrace hom_trace(const SpectralAmplitude& spec, std::span<const double> delay_grid, double indistinguishability);

struct TriangleFit {
    double base_width;  ///< base-to-base, seconds
    double visibility;  ///< (P_out - P_min) / P_out
    double center;
    double baseline;
    double depth;
    double rms_residual;
};

/// Least-squares fit of baseline - depth * max(0, 1 - |tau - center| / (width/2)).
/// Throws NumericalError when no dip is found or the residual is not small
/// compared with the dip depth.
TriangleFit fit_triangle(std::span<const double> delay, std::span<const double> values);
TriangleFit fit_triangle(const HomTrace& trace);

/// Model curve used by fit_triangle.
double triangle_dip(double tau, double baseline, double depth, double center, double base_width);

struct DipVisibility {
    double raw;
    double corrected;
};

/// Dip visibility before and after removing a flat accidental level.
DipVisibility visibility_with_accidentals(double raw_min, double raw_out, double accidental_level);

}  // namespace bspdc
