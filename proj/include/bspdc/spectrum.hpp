#pragma once

// Spectral model of counterpropagating quasi-phase-matched down-conversion.
//
// Geometry: the pump (H, y axis) and signal (H, y axis) travel forward, the
// idler (V, z axis) travels backward. Momentum bookkeeping along the
// propagation axis gives
//
//     dk = k_p - k_s + k_i - 2 pi m / Lambda
//
// where the backward idler enters with a plus sign. All wavelengths are
// vacuum wavelengths in meters; detunings are angular frequencies in rad/s.

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bspdc {

inline constexpr double speed_of_light = 299'792'458.0;

/// One material axis in generalised Sellmeier form, wavelength in um:
///   n^2 = a + sum_j b_j / (lambda^2 - c_j) - ir * lambda^2,   n += offset
struct SellmeierAxis {
    double a = 1.0;
    std::vector<std::pair<double, double>> poles;
    double ir = 0.0;
    double offset = 0.0;

    double index(double lambda_m) const;
};

class DispersionModel {
public:
    DispersionModel(std::string name, SellmeierAxis y, SellmeierAxis z, double valid_min_m, double valid_max_m);

    /// Wavelength-independent index on both axes.
    static DispersionModel flat(double n, double valid_min_m = 400e-9, double valid_max_m = 4000e-9);

    const std::string& name() const { return name_; }
    double n_y(double lambda_m) const;
    double n_z(double lambda_m) const;
    double valid_min() const { return valid_min_m_; }
    double valid_max() const { return valid_max_m_; }
    bool in_window(double lambda_m) const;

private:
    std::string name_;
    SellmeierAxis y_;
    SellmeierAxis z_;
    double valid_min_m_;
    double valid_max_m_;
};

/// Shipped coefficient sets: "flat", "ktp_kato2002", "ktp_waveguide_matched".
DispersionModel named_dispersion(const std::string& name);
std::vector<std::string> named_dispersion_sets();

/// Loads named sets from a JSON file (see data/dispersion.json).
std::map<std::string, DispersionModel> load_dispersion_sets(const std::string& path);

struct QpmGrating {
    double period_m;
    int order;
    double length_m;

    void validate() const;
    double reciprocal_vector() const;
};

/// Grating that phase matches 776.74 nm -> 2 x 1553.48 nm with the
/// matched dispersion set and gives a 57 pm signal bandwidth.
QpmGrating waveguide_grating();

double idler_wavelength(double lambda_p, double lambda_s);

/// Phase mismatch in rad/m for a given pump and signal wavelength.
double backward_mismatch(const DispersionModel& disp, const QpmGrating& grating, double lambda_p, double lambda_s);

double sinc(double x);

/// Positive x with sinc^2(x) = 1/2, by bisection.
double sinc2_half_max_root();

struct TuningCurve {
    std::vector<double> pump_wavelength_m;
    std::vector<double> mismatch;
    std::vector<double> efficiency;
};

/// SFG / degenerate BSPDC tuning curve: sinc^2(dk L/2) with
/// lambda_s = lambda_i = 2 lambda_p at each grid point.
TuningCurve sinc2_tuning_curve(const DispersionModel& disp, const QpmGrating& grating,
                               std::span<const double> pump_grid);

/// Uniformly sampled complex spectral amplitude over detuning from a
/// centre angular frequency.
struct SpectralAmplitude {
    std::vector<double> detuning;
    std::vector<std::complex<double>> amplitude;
    double spacing = 0.0;
    double center_omega = 0.0;

    std::size_t size() const { return detuning.size(); }
    std::vector<double> intensity() const;
    /// amplitude(-detuning); requires a grid symmetric about zero.
    SpectralAmplitude mirrored() const;
    bool symmetric_grid(double rel_tol = 1e-9) const;
    double energy() const;
    double center_wavelength() const;
    double fwhm_omega() const;
    double fwhm_hz() const;
    double fwhm_wavelength() const;
};

/// points samples uniformly over [-half_span, +half_span].
std::vector<double> detuning_grid(double half_span, std::size_t points);

/// Linear-interpolated FWHM of the highest peak of y(x).
double sampled_fwhm(std::span<const double> x, std::span<const double> y);

/// Optional Monte Carlo model of poling imperfections. Each period gets a
/// duty cycle 0.5 + duty_sigma * N(0, 1).
struct DomainDisorder {
    double duty_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct BspdcSpectrum {
    SpectralAmplitude signal;
    SpectralAmplitude idler;
    double signal_fwhm_hz;
    double signal_fwhm_m;
    double idler_fwhm_hz;
    double idler_fwhm_m;
};

BspdcSpectrum bspdc_spectrum(const DispersionModel& disp, const QpmGrating& grating, double lambda_p,
                             std::span<const double> detuning,
                             std::optional<DomainDisorder> disorder = std::nullopt);

enum class FilterShape { lorentzian, airy };

struct FilterSpec {
    double center_m;
    double fwhm_m;
    FilterShape shape = FilterShape::lorentzian;
    /// Free spectral range, only used by the airy shape.
    double fsr_m = 8.3e-9;

    void validate() const;
    double transmission(double lambda_m) const;
};

SpectralAmplitude apply_filter(const SpectralAmplitude& spec, const FilterSpec& filter);

/// dnu = c dlambda / lambda^2.
double convert_bandwidth(double delta_lambda_m, double center_lambda_m);
double bandwidth_to_wavelength(double delta_nu_hz, double center_lambda_m);

struct DegeneracyPoint {
    double pump_m;
    double signal_m;
};

/// Pump wavelength at which dk(lambda_p, 2 lambda_p) = 0.
DegeneracyPoint solve_degeneracy(const DispersionModel& disp, const QpmGrating& grating);

/// First-order estimate: FWHM in Hz from the group delay slope of dk.
double linearized_bandwidth_hz(const DispersionModel& disp, const QpmGrating& grating, double lambda_p);

}  // namespace bspdc
