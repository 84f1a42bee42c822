#include "bspdc/hom.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>

#include "bspdc/errors.hpp"

namespace bspdc {

HomTrace hom_trace(const SpectralAmplitude& spec, std::span<const double> delay_grid, double indistinguishability)
{
    if (!(indistinguishability >= 0.0 && indistinguishability <= 1.0)) {
        throw std::invalid_argument("hom_trace: indistinguishability must lie in [0, 1]");
    }
    const std::size_t n = spec.size();
    if (n < 3 || delay_grid.empty()) {
        throw std::invalid_argument("hom_trace: empty spectral or delay grid");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs(spec.detuning[i] - spec.detuning[i - 1] - spec.spacing) > 1e-6 * std::abs(spec.spacing)) {
            throw std::invalid_argument("hom_trace: spectral grid must be uniform");
        }
    }
    if (!spec.symmetric_grid()) {
        throw std::invalid_argument("hom_trace: spectral grid must be symmetric about zero detuning");
    }

    // Trapezoid weights; the common spacing cancels in the ratio.
    std::vector<std::complex<double>> product(n);
    double norm = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
        product[k] = w * spec.amplitude[k] * std::conj(spec.amplitude[n - 1 - k]);
        norm += w * std::norm(spec.amplitude[k]);
    }
    if (!(norm > 0.0)) {
        throw std::invalid_argument("hom_trace: spectrum has zero energy");
    }

    HomTrace trace;
    trace.delay.assign(delay_grid.begin(), delay_grid.end());
    trace.probability.reserve(delay_grid.size());
    for (const double tau : delay_grid) {
        std::complex<double> overlap{0.0, 0.0};
        for (std::size_t k = 0; k < n; ++k) {
            overlap += product[k] * std::polar(1.0, -2.0 * spec.detuning[k] * tau);
        }
        trace.probability.push_back(0.5 * (1.0 - indistinguishability * overlap.real() / norm));
    }
    return trace;
}

double triangle_dip(double tau, double baseline, double depth, double center, double base_width)
{
    const double shape = std::max(0.0, 1.0 - std::abs(tau - center) / (0.5 * base_width));
    return baseline - depth * shape;
}

namespace {

struct LinearPart {
    double baseline;
    double depth;
    double sse;
};

// For fixed centre and width the model is linear in (baseline, depth).
LinearPart solve_linear(std::span<const double> x, std::span<const double> y, double center, double width)
{
    double s11 = 0.0, s12 = 0.0, s22 = 0.0, b1 = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double g = -std::max(0.0, 1.0 - std::abs(x[i] - center) / (0.5 * width));
        s11 += 1.0;
        s12 += g;
        s22 += g * g;
        b1 += y[i];
        b2 += g * y[i];
    }
    const double det = s11 * s22 - s12 * s12;
    if (std::abs(det) < 1e-300) {
        return {0.0, 0.0, std::numeric_limits<double>::infinity()};
    }
    LinearPart part{(b1 * s22 - b2 * s12) / det, (s11 * b2 - s12 * b1) / det, 0.0};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - triangle_dip(x[i], part.baseline, part.depth, center, width);
        part.sse += r * r;
    }
    return part;
}

template <class F>
double scan_then_refine(F f, double lo, double hi, int coarse)
{
    double best_x = lo;
    double best = std::numeric_limits<double>::infinity();
    const double step = (hi - lo) / coarse;
    for (int i = 0; i <= coarse; ++i) {
        const double xi = lo + step * i;
        const double v = f(xi);
        if (v < best) {
            best = v;
            best_x = xi;
        }
    }
    const double a = std::max(lo, best_x - step);
    const double b = std::min(hi, best_x + step);
    return boost::math::tools::brent_find_minima(f, a, b, 40).first;
}

}  // namespace

TriangleFit fit_triangle(std::span<const double> delay, std::span<const double> y)
{
    if (delay.size() != y.size() || delay.size() < 5) {
        throw std::invalid_argument("fit_triangle: need at least 5 (delay, value) pairs");
    }
    const double raw_span = delay.back() - delay.front();
    if (!(raw_span > 0.0)) {
        throw std::invalid_argument("fit_triangle: delays must be increasing");
    }
    // Work in units of the mean sample spacing, origin at the first sample.
    const double unit = raw_span / static_cast<double>(delay.size() - 1);
    std::vector<double> x(delay.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = (delay[i] - delay.front()) / unit;
    }
    const double span = x.back();
    const auto argmin = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
    const double c0 = x[argmin];
    const double c_radius = 0.1 * span;

    auto best_center = [&](double width) {
        return scan_then_refine([&](double c) { return solve_linear(x, y, c, width).sse; }, c0 - c_radius,
                                c0 + c_radius, 40);
    };
    auto sse_for_width = [&](double width) { return solve_linear(x, y, best_center(width), width).sse; };

    const double width = scan_then_refine(sse_for_width, 2.0, span, 200);
    const double center = best_center(width);
    const LinearPart part = solve_linear(x, y, center, width);

    TriangleFit fit{};
    fit.base_width = width * unit;
    fit.center = delay.front() + center * unit;
    fit.baseline = part.baseline;
    fit.depth = part.depth;
    fit.rms_residual = std::sqrt(part.sse / static_cast<double>(x.size()));
    if (!(part.depth > 0.0) || !(part.baseline > 0.0) || !std::isfinite(fit.rms_residual)) {
        throw NumericalError("fit_triangle: no dip found");
    }
    if (fit.rms_residual > 0.5 * part.depth) {
        throw NumericalError("fit_triangle: residual too large for a triangular dip");
    }
    fit.visibility = part.depth / part.baseline;
    return fit;
}

TriangleFit fit_triangle(const HomTrace& trace)
{
    return fit_triangle(trace.delay, trace.probability);
}

DipVisibility visibility_with_accidentals(double raw_min, double raw_out, double accidental_level)
{
    if (!(raw_min >= 0.0) || !(raw_out > raw_min)) {
        throw std::invalid_argument("visibility_with_accidentals: need raw_out > raw_min >= 0");
    }
    if (!(accidental_level >= 0.0) || accidental_level > raw_min) {
        throw std::invalid_argument("visibility_with_accidentals: accidental level gives negative corrected counts");
    }
    const double out = raw_out - accidental_level;
    const double min = raw_min - accidental_level;
    return {(raw_out - raw_min) / raw_out, (out - min) / out};
}

}  // namespace bspdc
