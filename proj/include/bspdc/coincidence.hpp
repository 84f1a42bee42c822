#pragma once

// Projective coincidence counting: forward model, Poisson sampling,
// HWP fringe fits, accidental subtraction and the counts-file format.
//
// Counts files hold one JSON object per line:
//   {"qwp_r": deg, "hwp_r": deg, "qwp_l": deg, "hwp_l": deg,
//    "coincidences": int, "singles_r": int, "singles_l": int,
//    "duration_s": float, "window_s": float}
// An optional "label" string is carried through untouched.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bspdc/polarization.hpp"
#include "bspdc/quantum_state.hpp"

namespace bspdc {

struct MeasurementSetting {
    AnalyzerAngles r;
    AnalyzerAngles l;
    std::string label;

    static MeasurementSetting from_labels(Basis r, Basis l);
    JonesMatrix projector_r() const { return projector(r); }
    JonesMatrix projector_l() const { return projector(l); }
};

struct CountsRecord {
    MeasurementSetting setting;
    std::int64_t coincidences = 0;
    std::int64_t singles_r = 0;
    std::int64_t singles_l = 0;
    double duration_s = 1.0;
    double window_s = 1e-9;

    void validate() const;
};

/// Source and detection parameters shared by every simulated setting.
struct CountsModel {
    double pair_rate_hz = 1e4;
    double duration_s = 1.0;
    double window_s = 1e-9;
    NoiseModel noise{};

    void validate() const;
};

/// Mean coincidences: rate * T * eta_R * eta_L * p(setting) + accidental_rate * T.
double expected_coincidences(const DensityMatrix& rho, const MeasurementSetting& setting, const CountsModel& model);

CountsRecord simulate_counts(const DensityMatrix& rho, const MeasurementSetting& setting, const CountsModel& model,
                             std::uint64_t seed);

/// One record per setting; record i uses child_seed(seed, i), so the result
/// does not depend on how the work is scheduled.
std::vector<CountsRecord> simulate_settings(const DensityMatrix& rho, std::span<const MeasurementSetting> settings,
                                            const CountsModel& model, std::uint64_t seed);

/// R arm fixed to H, V, D or A through its HWP; L arm HWP scanned.
std::vector<CountsRecord> fringe_scan(const DensityMatrix& rho, Basis fixed_r, std::span<const double> hwp_l_grid,
                                      const CountsModel& model, std::uint64_t seed);

struct FringeFit {
    double offset;
    double amplitude;
    /// C(theta) = offset + amplitude * cos(4 theta - phase), phase in [0, 2pi).
    double phase;
    double period;
    double visibility;
    double visibility_error;
};

/// Poisson-weighted fit of a 4-theta fringe in the L-arm HWP angle.
FringeFit fit_fringe(std::span<const CountsRecord> records);
FringeFit fit_fringe(std::span<const double> hwp_angles, std::span<const double> counts);

enum class RateUnit { hertz, kilohertz };

/// Pairs per (GHz mW s).
double spectral_brightness(double pair_rate, double bandwidth_ghz, double pump_power_mw,
                           RateUnit unit = RateUnit::hertz);

struct AccidentalCorrection {
    double accidentals;
    double corrected;
    bool floored;
};

/// Accidentals from the singles product: S_R * S_L * window / T.
AccidentalCorrection subtract_accidentals(const CountsRecord& record);

nlohmann::json to_json(const CountsRecord& record);
CountsRecord counts_record_from_json(const nlohmann::json& j);

/// Throws DataError naming the offending line.
std::vector<CountsRecord> read_counts(std::istream& in);
std::vector<CountsRecord> read_counts_file(const std::string& path);
void write_counts(std::ostream& out, std::span<const CountsRecord> records);
void write_counts_file(const std::string& path, std::span<const CountsRecord> records);

}  // namespace bspdc
