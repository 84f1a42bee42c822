#include "bspdc/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include <boost/math/tools/toms748_solve.hpp>

#include "json.hpp"

#include "bspdc/errors.hpp"
#include "bspdc/random.hpp"

namespace bspdc {

namespace {

constexpr double pi = std::numbers::pi;
constexpr double two_pi = 2.0 * std::numbers::pi;

SellmeierAxis kato_y()
{
    return {3.45018, {{0.04341, 0.04597}, {16.98825, 39.43799}}, 0.0, 0.0};
}

SellmeierAxis kato_z()
{
    return {4.59423, {{0.06206, 0.04763}, {110.80672, 86.12171}}, 0.0, 0.0};
}

// Uniform effective-index shift that puts the degenerate root of the Kato
// set at 776.74 nm for a 1.3 um third-order grating.
constexpr double waveguide_index_offset = -0.0059624090;

SellmeierAxis axis_from_json(const nlohmann::json& j)
{
    SellmeierAxis axis;
    axis.a = j.at("a").get<double>();
    for (const auto& pole : j.value("poles", nlohmann::json::array())) {
        axis.poles.emplace_back(pole.at(0).get<double>(), pole.at(1).get<double>());
    }
    axis.ir = j.value("ir", 0.0);
    axis.offset = j.value("offset", 0.0);
    return axis;
}

}  // namespace

double SellmeierAxis::index(double lambda_m) const
{
    const double l2 = std::pow(lambda_m * 1e6, 2);
    double n2 = a - ir * l2;
    for (const auto& [b, c] : poles) {
        n2 += b / (l2 - c);
    }
    return std::sqrt(n2) + offset;
}

DispersionModel::DispersionModel(std::string name, SellmeierAxis y, SellmeierAxis z, double valid_min_m,
                                 double valid_max_m)
    : name_(std::move(name)), y_(std::move(y)), z_(std::move(z)), valid_min_m_(valid_min_m), valid_max_m_(valid_max_m)
{
    if (!(valid_min_m_ > 0.0 && valid_max_m_ > valid_min_m_)) {
        throw ConfigError("dispersion '" + name_ + "': invalid validity window");
    }
    for (int i = 0; i <= 64; ++i) {
        const double l = valid_min_m_ + (valid_max_m_ - valid_min_m_) * i / 64.0;
        const double ny = y_.index(l);
        const double nz = z_.index(l);
        if (!(ny > 1.0) || !(nz > 1.0)) {
            throw ConfigError("dispersion '" + name_ + "': index <= 1 inside the validity window");
        }
    }
}

DispersionModel DispersionModel::flat(double n, double valid_min_m, double valid_max_m)
{
    const SellmeierAxis axis{n * n, {}, 0.0, 0.0};
    return DispersionModel("flat", axis, axis, valid_min_m, valid_max_m);
}

bool DispersionModel::in_window(double lambda_m) const
{
    return lambda_m >= valid_min_m_ && lambda_m <= valid_max_m_;
}

double DispersionModel::n_y(double lambda_m) const
{
    if (!in_window(lambda_m)) {
        throw std::invalid_argument("wavelength outside the validity window of '" + name_ + "'");
    }
    return y_.index(lambda_m);
}

double DispersionModel::n_z(double lambda_m) const
{
    if (!in_window(lambda_m)) {
        throw std::invalid_argument("wavelength outside the validity window of '" + name_ + "'");
    }
    return z_.index(lambda_m);
}

DispersionModel named_dispersion(const std::string& name)
{
    if (name == "flat") {
        return DispersionModel::flat(1.8);
    }
    if (name == "ktp_kato2002") {
        return DispersionModel(name, kato_y(), kato_z(), 430e-9, 3540e-9);
    }
    if (name == "ktp_waveguide_matched") {
        SellmeierAxis y = kato_y();
        SellmeierAxis z = kato_z();
        y.offset = waveguide_index_offset;
        z.offset = waveguide_index_offset;
        return DispersionModel(name, y, z, 430e-9, 3540e-9);
    }
    throw ConfigError("unknown dispersion set '" + name + "'");
}

std::vector<std::string> named_dispersion_sets()
{
    return {"flat", "ktp_kato2002", "ktp_waveguide_matched"};
}

std::map<std::string, DispersionModel> load_dispersion_sets(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open dispersion file '" + path + "'");
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("dispersion file '" + path + "': " + e.what());
    }
    std::map<std::string, DispersionModel> sets;
    try {
        for (const auto& [name, entry] : doc.at("sets").items()) {
            sets.emplace(name, DispersionModel(name, axis_from_json(entry.at("n_y")), axis_from_json(entry.at("n_z")),
                                               entry.at("valid_min_m").get<double>(),
                                               entry.at("valid_max_m").get<double>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("dispersion file '" + path + "': " + e.what());
    }
    return sets;
}

void QpmGrating::validate() const
{
    if (!(period_m > 0.0) || order < 1 || !(length_m > 0.0)) {
        throw std::invalid_argument("grating needs period > 0, order >= 1, length > 0");
    }
}

double QpmGrating::reciprocal_vector() const
{
    return two_pi * order / period_m;
}

QpmGrating waveguide_grating()
{
    return {1.3e-6, 3, 10.41e-3};
}

double idler_wavelength(double lambda_p, double lambda_s)
{
    if (!(lambda_p > 0.0) || !(lambda_s > lambda_p)) {
        throw std::invalid_argument("need lambda_s > lambda_p > 0 for an idler solution");
    }
    return 1.0 / (1.0 / lambda_p - 1.0 / lambda_s);
}

double backward_mismatch(const DispersionModel& disp, const QpmGrating& grating, double lambda_p, double lambda_s)
{
    grating.validate();
    const double lambda_i = idler_wavelength(lambda_p, lambda_s);
    const double k_p = two_pi * disp.n_y(lambda_p) / lambda_p;
    const double k_s = two_pi * disp.n_y(lambda_s) / lambda_s;
    const double k_i = two_pi * disp.n_z(lambda_i) / lambda_i;
    return k_p - k_s + k_i - grating.reciprocal_vector();
}

double sinc(double x)
{
    if (std::abs(x) < 1e-8) {
        return 1.0 - x * x / 6.0;
    }
    return std::sin(x) / x;
}

double sinc2_half_max_root()
{
    double lo = 0.0;
    double hi = pi;
    while (hi - lo > 1e-15) {
        const double mid = 0.5 * (lo + hi);
        (sinc(mid) * sinc(mid) > 0.5 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

TuningCurve sinc2_tuning_curve(const DispersionModel& disp, const QpmGrating& grating,
                               std::span<const double> pump_grid)
{
    TuningCurve curve;
    curve.pump_wavelength_m.assign(pump_grid.begin(), pump_grid.end());
    for (const double lp : pump_grid) {
        const double dk = backward_mismatch(disp, grating, lp, 2.0 * lp);
        const double s = sinc(0.5 * dk * grating.length_m);
        curve.mismatch.push_back(dk);
        curve.efficiency.push_back(s * s);
    }
    return curve;
}

std::vector<double> SpectralAmplitude::intensity() const
{
    std::vector<double> out(amplitude.size());
    std::transform(amplitude.begin(), amplitude.end(), out.begin(), [](auto a) { return std::norm(a); });
    return out;
}

bool SpectralAmplitude::symmetric_grid(double rel_tol) const
{
    const std::size_t n = detuning.size();
    if (n < 2) {
        return false;
    }
    const double scale = std::max(std::abs(detuning.front()), std::abs(detuning.back()));
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(detuning[i] + detuning[n - 1 - i]) > rel_tol * scale) {
            return false;
        }
    }
    return true;
}

SpectralAmplitude SpectralAmplitude::mirrored() const
{
    if (!symmetric_grid()) {
        throw std::invalid_argument("mirrored: detuning grid must be symmetric about zero");
    }
    SpectralAmplitude out = *this;
    std::reverse(out.amplitude.begin(), out.amplitude.end());
    return out;
}

double SpectralAmplitude::energy() const
{
    double e = 0.0;
    for (const auto a : amplitude) {
        e += std::norm(a);
    }
    return e * spacing;
}

double SpectralAmplitude::center_wavelength() const
{
    return two_pi * speed_of_light / center_omega;
}

double SpectralAmplitude::fwhm_omega() const
{
    const auto y = intensity();
    return sampled_fwhm(detuning, y);
}

double SpectralAmplitude::fwhm_hz() const
{
    return fwhm_omega() / two_pi;
}

double SpectralAmplitude::fwhm_wavelength() const
{
    return bandwidth_to_wavelength(fwhm_hz(), center_wavelength());
}

std::vector<double> detuning_grid(double half_span, std::size_t points)
{
    if (!(half_span > 0.0) || points < 3) {
        throw std::invalid_argument("detuning_grid: need half_span > 0 and at least 3 points");
    }
    std::vector<double> grid(points);
    const double step = 2.0 * half_span / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = -half_span + step * static_cast<double>(i);
    }
    // Exact mirror symmetry, so that index i and n-1-i are +/- the same value.
    for (std::size_t i = 0; i < points / 2; ++i) {
        grid[points - 1 - i] = -grid[i];
    }
    if (points % 2 == 1) {
        grid[points / 2] = 0.0;
    }
    return grid;
}

double sampled_fwhm(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 3) {
        throw std::invalid_argument("sampled_fwhm: need matching x/y with at least 3 samples");
    }
    const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    const double half = 0.5 * y[peak];
    std::size_t l = peak;
    while (l > 0 && y[l - 1] >= half) {
        --l;
    }
    std::size_t r = peak;
    while (r + 1 < y.size() && y[r + 1] >= half) {
        ++r;
    }
    if (l == 0 || r + 1 == y.size()) {
        throw NumericalError("sampled_fwhm: half-maximum not crossed inside the grid");
    }
    auto cross = [&](std::size_t in, std::size_t out) {
        return x[out] + (half - y[out]) * (x[in] - x[out]) / (y[in] - y[out]);
    };
    return cross(r, r + 1) - cross(l, l - 1);
}

namespace {

// Integral of d(z) exp(-i q z) over the poled length, d = +1/-1 per domain.
std::complex<double> disordered_grating_integral(double q, const std::vector<double>& walls)
{
    std::complex<double> sum{0.0, 0.0};
    const std::complex<double> minus_i{0.0, -1.0};
    double sign = 1.0;
    for (std::size_t k = 0; k + 1 < walls.size(); ++k) {
        const double a = walls[k];
        const double b = walls[k + 1];
        sum += sign * (std::exp(minus_i * q * b) - std::exp(minus_i * q * a));
        sign = -sign;
    }
    return sum / (minus_i * q);
}

std::vector<double> domain_walls(const QpmGrating& grating, const DomainDisorder& disorder)
{
    std::mt19937_64 rng(disorder.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto periods = static_cast<std::size_t>(std::floor(grating.length_m / grating.period_m));
    std::vector<double> walls;
    walls.reserve(2 * periods + 1);
    for (std::size_t k = 0; k < periods; ++k) {
        const double start = static_cast<double>(k) * grating.period_m;
        const double duty = std::clamp(0.5 + disorder.duty_sigma * gauss(rng), 0.05, 0.95);
        walls.push_back(start);
        walls.push_back(start + duty * grating.period_m);
    }
    walls.push_back(static_cast<double>(periods) * grating.period_m);
    return walls;
}

}  // namespace

BspdcSpectrum bspdc_spectrum(const DispersionModel& disp, const QpmGrating& grating, double lambda_p,
                             std::span<const double> detuning, std::optional<DomainDisorder> disorder)
{
    grating.validate();
    if (detuning.size() < 3) {
        throw std::invalid_argument("bspdc_spectrum: detuning grid too small");
    }
    const double omega_p = two_pi * speed_of_light / lambda_p;
    const double omega_0 = 0.5 * omega_p;

    SpectralAmplitude signal;
    signal.detuning.assign(detuning.begin(), detuning.end());
    signal.spacing = (detuning.back() - detuning.front()) / static_cast<double>(detuning.size() - 1);
    signal.center_omega = omega_0;
    for (std::size_t i = 1; i < detuning.size(); ++i) {
        if (std::abs(detuning[i] - detuning[i - 1] - signal.spacing) > 1e-6 * std::abs(signal.spacing)) {
            throw std::invalid_argument("bspdc_spectrum: detuning grid must be uniform");
        }
    }

    std::vector<double> walls;
    if (disorder) {
        walls = domain_walls(grating, *disorder);
    }

    signal.amplitude.reserve(detuning.size());
    for (const double omega : detuning) {
        const double lambda_s = two_pi * speed_of_light / (omega_0 + omega);
        const double dk = backward_mismatch(disp, grating, lambda_p, lambda_s);
        if (disorder) {
            const double q = dk + grating.reciprocal_vector();
            const std::complex<double> centring = std::exp(std::complex<double>(0.0, 0.5 * dk * grating.length_m));
            signal.amplitude.push_back(disordered_grating_integral(q, walls) * centring);
        } else {
            signal.amplitude.emplace_back(sinc(0.5 * dk * grating.length_m), 0.0);
        }
    }

    double peak = 0.0;
    for (const auto a : signal.amplitude) {
        peak = std::max(peak, std::abs(a));
    }
    if (!(peak > 0.0)) {
        throw NumericalError("bspdc_spectrum: zero amplitude on the grid");
    }
    for (auto& a : signal.amplitude) {
        a /= peak;
    }
    if (!disorder) {
        // sinc peaks at 1 only where dk = 0; a grid that never gets close has no phase matching.
        if (peak * peak < 0.5) {
            throw NumericalError("bspdc_spectrum: no phase-matching solution inside the detuning grid");
        }
    }

    BspdcSpectrum out{signal, signal.mirrored(), 0.0, 0.0, 0.0, 0.0};
    out.signal_fwhm_hz = out.signal.fwhm_hz();
    out.signal_fwhm_m = out.signal.fwhm_wavelength();
    out.idler_fwhm_hz = out.idler.fwhm_hz();
    out.idler_fwhm_m = out.idler.fwhm_wavelength();
    return out;
}

void FilterSpec::validate() const
{
    if (!(center_m > 0.0) || !(fwhm_m > 0.0)) {
        throw std::invalid_argument("filter needs positive centre and linewidth");
    }
    if (shape == FilterShape::airy && !(fsr_m > fwhm_m)) {
        throw std::invalid_argument("airy filter needs a free spectral range larger than its linewidth");
    }
}

double FilterSpec::transmission(double lambda_m) const
{
    const double d = lambda_m - center_m;
    if (shape == FilterShape::lorentzian) {
        const double x = 2.0 * d / fwhm_m;
        return 1.0 / (1.0 + x * x);
    }
    const double edge = std::sin(pi * fwhm_m / (2.0 * fsr_m));
    const double coefficient = 1.0 / (edge * edge);
    const double s = std::sin(pi * d / fsr_m);
    return 1.0 / (1.0 + coefficient * s * s);
}

SpectralAmplitude apply_filter(const SpectralAmplitude& spec, const FilterSpec& filter)
{
    filter.validate();
    const double lambda_a = two_pi * speed_of_light / (spec.center_omega + spec.detuning.front());
    const double lambda_b = two_pi * speed_of_light / (spec.center_omega + spec.detuning.back());
    if (filter.center_m < std::min(lambda_a, lambda_b) || filter.center_m > std::max(lambda_a, lambda_b)) {
        throw std::invalid_argument("apply_filter: filter centre outside the spectral grid");
    }
    SpectralAmplitude out = spec;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double lambda = two_pi * speed_of_light / (spec.center_omega + spec.detuning[i]);
        out.amplitude[i] *= std::sqrt(filter.transmission(lambda));
    }
    return out;
}

double convert_bandwidth(double delta_lambda_m, double center_lambda_m)
{
    if (!(delta_lambda_m > 0.0) || !(center_lambda_m > 0.0)) {
        throw std::invalid_argument("convert_bandwidth: inputs must be positive");
    }
    return speed_of_light * delta_lambda_m / (center_lambda_m * center_lambda_m);
}

double bandwidth_to_wavelength(double delta_nu_hz, double center_lambda_m)
{
    if (!(delta_nu_hz > 0.0) || !(center_lambda_m > 0.0)) {
        throw std::invalid_argument("bandwidth_to_wavelength: inputs must be positive");
    }
    return delta_nu_hz * center_lambda_m * center_lambda_m / speed_of_light;
}

DegeneracyPoint solve_degeneracy(const DispersionModel& disp, const QpmGrating& grating)
{
    grating.validate();
    auto f = [&](double lp) { return backward_mismatch(disp, grating, lp, 2.0 * lp); };
    const double lo = disp.valid_min();
    const double hi = 0.5 * disp.valid_max();
    if (!(hi > lo)) {
        throw NumericalError("solve_degeneracy: validity window cannot hold pump and degenerate signal");
    }
    constexpr int scan = 4000;
    double a = lo;
    double fa = f(a);
    for (int i = 1; i <= scan; ++i) {
        const double b = lo + (hi - lo) * i / scan;
        const double fb = f(b);
        if (fa == 0.0) {
            return {a, 2.0 * a};
        }
        if ((fa < 0.0) != (fb < 0.0)) {
            std::uintmax_t iterations = 200;
            const auto [x0, x1] = boost::math::tools::toms748_solve(
                f, a, b, fa, fb, [](double u, double v) { return std::abs(u - v) <= 1e-16; }, iterations);
            const double root = 0.5 * (x0 + x1);
            return {root, 2.0 * root};
        }
        a = b;
        fa = fb;
    }
    throw NumericalError("solve_degeneracy: no sign change of the mismatch inside the validity window");
}

double linearized_bandwidth_hz(const DispersionModel& disp, const QpmGrating& grating, double lambda_p)
{
    const double omega_0 = 0.5 * two_pi * speed_of_light / lambda_p;
    const double h = 1e-6 * omega_0;
    auto dk = [&](double omega) {
        return backward_mismatch(disp, grating, lambda_p, two_pi * speed_of_light / (omega_0 + omega));
    };
    const double slope = std::abs(dk(h) - dk(-h)) / (2.0 * h);
    return 4.0 * sinc2_half_max_root() / (two_pi * slope * grating.length_m);
}

}  // namespace bspdc
