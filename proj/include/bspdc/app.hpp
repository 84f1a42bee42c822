#pragma once

// Command layer behind the bspdc executable. Each command reads a RunConfig,
// writes its tables and summaries into an output directory and returns the
// list of files written.
//
// Config files are INI style with named sections. Every physical quantity
// carries its unit in the key name:
//
//   [spectrum]
//   dispersion = ktp_waveguide_matched
//   period_um = 1.3
//   length_mm = 10.41

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace bspdc::app {

enum class Format { csv, json };

struct RunConfig {
    // [spectrum]
    std::string dispersion = "ktp_waveguide_matched";
    std::string dispersion_file;
    double period_um = 1.3;
    int order = 3;
    double length_mm = 10.41;
    double pump_nm = 0.0;  ///< 0 solves for the degenerate point
    double half_span_ghz = 40.0;
    int spectrum_points = 4001;
    double tuning_half_span_pm = 150.0;
    int tuning_points = 601;
    double filter_fwhm_pm = 132.0;
    std::string filter_shape = "lorentzian";
    double filter_fsr_nm = 8.3;
    double duty_sigma = 0.0;

    // [hom]
    double indistinguishability = 0.971;
    double delay_half_span_ps = 300.0;
    int delay_points = 241;
    double hom_out_counts = 1000.0;
    double hom_accidental_counts = 72.0;

    // [state]
    double phi_deg = 180.0;
    double mix = 0.943;

    // [source]
    double pair_rate_hz = 168.0;
    double duration_s = 15.0;
    double window_ns = 1.0;
    double efficiency_r = 1.0;
    double efficiency_l = 1.0;
    double accidental_rate_hz = 0.0;
    double dark_rate_hz = 0.0;
    double pump_power_mw = 1.0;
    double bandwidth_ghz = 7.1;

    // [fringes]
    double hwp_span_deg = 180.0;
    int fringe_points = 37;

    // [tomography]
    double counts_per_basis = 1e4;
    int resamples = 100;
    std::string target = "psi-minus";

    // [run]
    std::uint64_t seed = 1;

    void validate() const;
    /// Effective configuration as sorted "section.key = value" lines.
    std::string canonical() const;
    std::uint64_t hash() const;
};

/// Parses an INI file; unknown sections or keys and malformed values throw ConfigError.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

struct Context {
    RunConfig config;
    std::filesystem::path out_dir = ".";
    Format format = Format::csv;
};

using Files = std::vector<std::filesystem::path>;

Files cmd_spectrum(const Context& ctx);
Files cmd_hom(const Context& ctx);
Files cmd_fringes(const Context& ctx);
/// Reconstructs from a counts file, or simulates counts from [state] when none is given.
Files cmd_tomography(const Context& ctx, const std::optional<std::filesystem::path>& counts,
                     const std::optional<std::string>& target);
Files cmd_bell(const Context& ctx, const std::optional<std::filesystem::path>& counts);

struct ReproduceRow {
    std::string quantity;
    std::string reference;
    double computed;
    std::string tolerance;
    std::string verdict;  ///< "pass", "FAIL" or "info"
};

std::vector<ReproduceRow> reproduce_rows(std::uint64_t seed);
/// Writes the comparison table; throws NumericalError if any gated row fails.
Files cmd_reproduce(const Context& ctx);

}  // namespace bspdc::app
