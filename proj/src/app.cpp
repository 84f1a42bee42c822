#include "bspdc/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "bspdc/chsh.hpp"
#include "bspdc/coincidence.hpp"
#include "bspdc/errors.hpp"
#include "bspdc/hom.hpp"
#include "bspdc/random.hpp"
#include "bspdc/spectrum.hpp"
#include "bspdc/tomography.hpp"

namespace bspdc::app {

namespace {

constexpr double pi = std::numbers::pi;
constexpr double two_pi = 2.0 * std::numbers::pi;

using ojson = nlohmann::ordered_json;

// ---- config keys -----------------------------------------------------------

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
    std::string section;
    std::string name;
    Setter set;
    Getter get;
};

std::string format_number(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& text)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size() || !std::isfinite(v)) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    }
}

long long parse_integer(const std::string& key, const std::string& text)
{
    try {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
    }
}

Key real_key(const std::string& section, const std::string& name, double RunConfig::*field)
{
    const std::string full = section + "." + name;
    return {section, name, [field, full](RunConfig& c, const std::string& v) { c.*field = parse_double(full, v); },
            [field](const RunConfig& c) { return format_number(c.*field); }};
}

Key int_key(const std::string& section, const std::string& name, int RunConfig::*field)
{
    const std::string full = section + "." + name;
    return {section, name,
            [field, full](RunConfig& c, const std::string& v) { c.*field = static_cast<int>(parse_integer(full, v)); },
            [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

Key text_key(const std::string& section, const std::string& name, std::string RunConfig::*field)
{
    return {section, name, [field](RunConfig& c, const std::string& v) { c.*field = v; },
            [field](const RunConfig& c) { return c.*field; }};
}

const std::vector<Key>& keys()
{
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        k.push_back(text_key("spectrum", "dispersion", &RunConfig::dispersion));
        k.push_back(text_key("spectrum", "dispersion_file", &RunConfig::dispersion_file));
        k.push_back(real_key("spectrum", "period_um", &RunConfig::period_um));
        k.push_back(int_key("spectrum", "order", &RunConfig::order));
        k.push_back(real_key("spectrum", "length_mm", &RunConfig::length_mm));
        k.push_back(real_key("spectrum", "pump_nm", &RunConfig::pump_nm));
        k.push_back(real_key("spectrum", "half_span_ghz", &RunConfig::half_span_ghz));
        k.push_back(int_key("spectrum", "points", &RunConfig::spectrum_points));
        k.push_back(real_key("spectrum", "tuning_half_span_pm", &RunConfig::tuning_half_span_pm));
        k.push_back(int_key("spectrum", "tuning_points", &RunConfig::tuning_points));
        k.push_back(real_key("spectrum", "filter_fwhm_pm", &RunConfig::filter_fwhm_pm));
        k.push_back(text_key("spectrum", "filter_shape", &RunConfig::filter_shape));
        k.push_back(real_key("spectrum", "filter_fsr_nm", &RunConfig::filter_fsr_nm));
        k.push_back(real_key("spectrum", "duty_sigma", &RunConfig::duty_sigma));
        k.push_back(real_key("hom", "indistinguishability", &RunConfig::indistinguishability));
        k.push_back(real_key("hom", "delay_half_span_ps", &RunConfig::delay_half_span_ps));
        k.push_back(int_key("hom", "delay_points", &RunConfig::delay_points));
        k.push_back(real_key("hom", "out_counts", &RunConfig::hom_out_counts));
        k.push_back(real_key("hom", "accidental_counts", &RunConfig::hom_accidental_counts));
        k.push_back(real_key("state", "phi_deg", &RunConfig::phi_deg));
        k.push_back(real_key("state", "mix", &RunConfig::mix));
        k.push_back(real_key("source", "pair_rate_hz", &RunConfig::pair_rate_hz));
        k.push_back(real_key("source", "duration_s", &RunConfig::duration_s));
        k.push_back(real_key("source", "window_ns", &RunConfig::window_ns));
        k.push_back(real_key("source", "efficiency_r", &RunConfig::efficiency_r));
        k.push_back(real_key("source", "efficiency_l", &RunConfig::efficiency_l));
        k.push_back(real_key("source", "accidental_rate_hz", &RunConfig::accidental_rate_hz));
        k.push_back(real_key("source", "dark_rate_hz", &RunConfig::dark_rate_hz));
        k.push_back(real_key("source", "pump_power_mw", &RunConfig::pump_power_mw));
        k.push_back(real_key("source", "bandwidth_ghz", &RunConfig::bandwidth_ghz));
        k.push_back(real_key("fringes", "hwp_span_deg", &RunConfig::hwp_span_deg));
        k.push_back(int_key("fringes", "points", &RunConfig::fringe_points));
        k.push_back(real_key("tomography", "counts_per_basis", &RunConfig::counts_per_basis));
        k.push_back(int_key("tomography", "resamples", &RunConfig::resamples));
        k.push_back(text_key("tomography", "target", &RunConfig::target));
        k.push_back({"run", "seed",
                     [](RunConfig& c, const std::string& v) {
                         const long long s = parse_integer("run.seed", v);
                         if (s < 0) {
                             throw ConfigError("config key 'run.seed' must be non-negative");
                         }
                         c.seed = static_cast<std::uint64_t>(s);
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }});
        return k;
    }();
    return table;
}

// ---- output ----------------------------------------------------------------

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<ojson>> rows;
};

std::string csv_cell(const ojson& v)
{
    if (v.is_number()) {
        return format_number(v.get<double>());
    }
    if (v.is_boolean()) {
        return v.get<bool>() ? "true" : "false";
    }
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    if (s.find_first_of(",\"\n") != std::string::npos) {
        std::string quoted = "\"";
        for (const char c : s) {
            quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
        }
        return quoted + "\"";
    }
    return s;
}

std::string hash_hex(std::uint64_t h)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write '" + path.string() + "'");
    }
    return out;
}

std::filesystem::path write_table(const Context& ctx, const Table& t)
{
    if (ctx.format == Format::csv) {
        const auto path = ctx.out_dir / (t.name + ".csv");
        auto out = open_output(path);
        out << "# config_hash=" << hash_hex(ctx.config.hash()) << " seed=" << ctx.config.seed << '\n';
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            out << (i ? "," : "") << t.columns[i];
        }
        out << '\n';
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                out << (i ? "," : "") << csv_cell(row[i]);
            }
            out << '\n';
        }
        return path;
    }
    const auto path = ctx.out_dir / (t.name + ".json");
    ojson doc;
    doc["config_hash"] = hash_hex(ctx.config.hash());
    doc["seed"] = ctx.config.seed;
    doc["columns"] = t.columns;
    doc["rows"] = ojson::array();
    for (const auto& row : t.rows) {
        ojson r = ojson::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
            r[t.columns[i]] = row[i];
        }
        doc["rows"].push_back(r);
    }
    open_output(path) << doc.dump(2) << '\n';
    return path;
}

std::filesystem::path write_summary(const Context& ctx, const std::string& name, ojson doc)
{
    ojson wrapped;
    wrapped["config_hash"] = hash_hex(ctx.config.hash());
    wrapped["seed"] = ctx.config.seed;
    for (auto& [k, v] : doc.items()) {
        wrapped[k] = v;
    }
    const auto path = ctx.out_dir / (name + ".json");
    open_output(path) << wrapped.dump(2) << '\n';
    return path;
}

// ---- shared model pieces ---------------------------------------------------

DispersionModel dispersion(const RunConfig& c)
{
    if (c.dispersion_file.empty()) {
        return named_dispersion(c.dispersion);
    }
    auto sets = load_dispersion_sets(c.dispersion_file);
    const auto it = sets.find(c.dispersion);
    if (it == sets.end()) {
        throw ConfigError("dispersion set '" + c.dispersion + "' not found in '" + c.dispersion_file + "'");
    }
    return it->second;
}

QpmGrating grating(const RunConfig& c)
{
    return {c.period_um * 1e-6, c.order, c.length_mm * 1e-3};
}

double pump_wavelength(const RunConfig& c, const DispersionModel& disp, const QpmGrating& g)
{
    return c.pump_nm > 0.0 ? c.pump_nm * 1e-9 : solve_degeneracy(disp, g).pump_m;
}

FilterShape parse_filter_shape(const std::string& name)
{
    if (name == "lorentzian") {
        return FilterShape::lorentzian;
    }
    if (name == "airy") {
        return FilterShape::airy;
    }
    throw ConfigError("spectrum.filter_shape must be 'lorentzian' or 'airy', got '" + name + "'");
}

CountsModel counts_model(const RunConfig& c)
{
    CountsModel m;
    m.pair_rate_hz = c.pair_rate_hz;
    m.duration_s = c.duration_s;
    m.window_s = c.window_ns * 1e-9;
    m.noise.efficiency_r = c.efficiency_r;
    m.noise.efficiency_l = c.efficiency_l;
    m.noise.accidental_rate_hz = c.accidental_rate_hz;
    m.noise.dark_rate_hz = c.dark_rate_hz;
    return m;
}

DensityMatrix configured_state(const RunConfig& c)
{
    return werner_state(eq1_state(deg_to_rad(c.phi_deg)), c.mix);
}

std::vector<double> linspace(double a, double b, int n)
{
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
    }
    return v;
}

// Wide grid for HOM integrals: the sinc^2 tails must be well resolved.
SpectralAmplitude hom_signal(const DispersionModel& disp, const QpmGrating& g, double lp)
{
    const double fwhm_hz = linearized_bandwidth_hz(disp, g, lp);
    const auto grid = detuning_grid(two_pi * 56.0 * fwhm_hz, 8001);
    return bspdc_spectrum(disp, g, lp, grid).signal;
}

ojson matrix_json(const Eigen::Matrix4d& m)
{
    ojson a = ojson::array();
    for (int r = 0; r < 4; ++r) {
        ojson row = ojson::array();
        for (int c = 0; c < 4; ++c) {
            row.push_back(m(r, c));
        }
        a.push_back(row);
    }
    return a;
}

const std::array<const char*, 4> basis_labels{"HH", "HV", "VH", "VV"};

struct HomNumbers {
    TriangleFit probability_fit;
    TriangleFit counts_fit;
    std::optional<DipVisibility> corrected;
};

std::optional<DipVisibility> corrected_visibility(const TriangleFit& fit, double accidentals)
{
    const double out = fit.baseline;
    const double min = fit.baseline - fit.depth;
    if (!(accidentals <= min) || !(out > min)) {
        return std::nullopt;
    }
    return visibility_with_accidentals(std::max(0.0, min), out, accidentals);
}

std::vector<double> hom_expected_counts(const HomTrace& trace, double out, double accidentals)
{
    std::vector<double> counts;
    for (const double p : trace.probability) {
        counts.push_back(accidentals + (out - accidentals) * 2.0 * p);
    }
    return counts;
}

}  // namespace

// ---- RunConfig -------------------------------------------------------------

void RunConfig::validate() const
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ConfigError("invalid config: " + what);
        }
    };
    require(period_um > 0.0, "spectrum.period_um must be positive");
    require(order >= 1, "spectrum.order must be >= 1");
    require(length_mm > 0.0, "spectrum.length_mm must be positive");
    require(pump_nm >= 0.0, "spectrum.pump_nm must be positive (0 solves for degeneracy)");
    require(half_span_ghz > 0.0, "spectrum.half_span_ghz must be positive");
    require(spectrum_points >= 11, "spectrum.points must be >= 11");
    require(tuning_half_span_pm > 0.0, "spectrum.tuning_half_span_pm must be positive");
    require(tuning_points >= 11, "spectrum.tuning_points must be >= 11");
    require(filter_fwhm_pm > 0.0, "spectrum.filter_fwhm_pm must be positive");
    parse_filter_shape(filter_shape);
    require(filter_fsr_nm * 1e3 > filter_fwhm_pm, "spectrum.filter_fsr_nm must exceed the filter linewidth");
    require(duty_sigma >= 0.0 && duty_sigma < 0.5, "spectrum.duty_sigma must lie in [0, 0.5)");
    require(indistinguishability >= 0.0 && indistinguishability <= 1.0, "hom.indistinguishability must lie in [0, 1]");
    require(delay_half_span_ps > 0.0, "hom.delay_half_span_ps must be positive");
    require(delay_points >= 5, "hom.delay_points must be >= 5");
    require(hom_out_counts > 0.0, "hom.out_counts must be positive");
    require(hom_accidental_counts >= 0.0 && hom_accidental_counts < hom_out_counts,
            "hom.accidental_counts must lie in [0, out_counts)");
    require(std::isfinite(phi_deg), "state.phi_deg must be finite");
    require(mix >= 0.0 && mix <= 1.0, "state.mix must lie in [0, 1]");
    require(pair_rate_hz > 0.0, "source.pair_rate_hz must be positive");
    require(duration_s > 0.0, "source.duration_s must be positive");
    require(window_ns > 0.0, "source.window_ns must be positive");
    require(efficiency_r > 0.0 && efficiency_r <= 1.0, "source.efficiency_r must lie in (0, 1]");
    require(efficiency_l > 0.0 && efficiency_l <= 1.0, "source.efficiency_l must lie in (0, 1]");
    require(accidental_rate_hz >= 0.0, "source.accidental_rate_hz must be non-negative");
    require(dark_rate_hz >= 0.0, "source.dark_rate_hz must be non-negative");
    require(pump_power_mw > 0.0, "source.pump_power_mw must be positive");
    require(bandwidth_ghz > 0.0, "source.bandwidth_ghz must be positive");
    require(hwp_span_deg >= 45.0, "fringes.hwp_span_deg must be at least 45 (half a fringe)");
    require(fringe_points >= 5, "fringes.points must be >= 5");
    require(counts_per_basis > 0.0, "tomography.counts_per_basis must be positive");
    require(resamples >= 50, "tomography.resamples must be >= 50");
    try {
        named_target(target);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("tomography.target: ") + e.what());
    }
}

std::string RunConfig::canonical() const
{
    std::vector<std::string> lines;
    for (const auto& k : keys()) {
        if (k.section == "run") {
            continue;
        }
        lines.push_back(k.section + "." + k.name + " = " + k.get(*this));
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) {
        out += l + "\n";
    }
    return out;
}

std::uint64_t RunConfig::hash() const
{
    return fnv1a(canonical());
}

std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RunConfig parse_config(const std::string& text)
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig c;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ConfigError("config key '" + section + "' is outside any section");
        }
        for (const auto& [name, value] : body) {
            const auto it = std::find_if(keys().begin(), keys().end(),
                                         [&](const Key& k) { return k.section == section && k.name == name; });
            if (it == keys().end()) {
                throw ConfigError("unknown config key '" + section + "." + name + "'");
            }
            it->set(c, value.get_value<std::string>());
        }
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

// ---- commands --------------------------------------------------------------

Files cmd_spectrum(const Context& ctx)
{
    const RunConfig& c = ctx.config;
    const auto disp = dispersion(c);
    const auto g = grating(c);
    const double lp = pump_wavelength(c, disp, g);
    Files files;

    const auto pump_grid = linspace(lp - c.tuning_half_span_pm * 1e-12, lp + c.tuning_half_span_pm * 1e-12,
                                    c.tuning_points);
    const auto tuning = sinc2_tuning_curve(disp, g, pump_grid);
    Table sfg{"sfg_tuning", {"pump_nm", "mismatch_per_m", "efficiency"}, {}};
    std::vector<double> pump_pm;
    for (std::size_t i = 0; i < pump_grid.size(); ++i) {
        sfg.rows.push_back({pump_grid[i] * 1e9, tuning.mismatch[i], tuning.efficiency[i]});
        pump_pm.push_back(pump_grid[i] * 1e12);
    }
    files.push_back(write_table(ctx, sfg));

    std::optional<DomainDisorder> disorder;
    if (c.duty_sigma > 0.0) {
        disorder = DomainDisorder{c.duty_sigma, child_seed(c.seed, 1)};
    }
    const auto grid = detuning_grid(two_pi * c.half_span_ghz * 1e9, static_cast<std::size_t>(c.spectrum_points));
    const auto s = bspdc_spectrum(disp, g, lp, grid, disorder);
    const FilterSpec filter{s.signal.center_wavelength(), c.filter_fwhm_pm * 1e-12, parse_filter_shape(c.filter_shape),
                            c.filter_fsr_nm * 1e-9};
    const auto filtered_signal = apply_filter(s.signal, filter);
    const auto filtered_idler = apply_filter(s.idler, filter);

    auto spectrum_table = [&](const std::string& name, const SpectralAmplitude& a, const SpectralAmplitude& f,
                              double sign) {
        Table t{name, {"detuning_hz", "wavelength_nm", "amplitude_re", "amplitude_im", "intensity", "filtered_intensity"},
                {}};
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double omega = a.center_omega + sign * a.detuning[i];
            t.rows.push_back({sign * a.detuning[i] / two_pi, two_pi * speed_of_light / omega * 1e9,
                              a.amplitude[i].real(), a.amplitude[i].imag(), std::norm(a.amplitude[i]),
                              std::norm(f.amplitude[i])});
        }
        return t;
    };
    files.push_back(write_table(ctx, spectrum_table("signal_spectrum", s.signal, filtered_signal, 1.0)));
    files.push_back(write_table(ctx, spectrum_table("idler_spectrum", s.idler, filtered_idler, 1.0)));

    ojson summary;
    summary["dispersion"] = disp.name();
    summary["grating"] = {{"period_um", c.period_um}, {"order", c.order}, {"length_mm", c.length_mm}};
    summary["pump_nm"] = lp * 1e9;
    summary["signal_nm"] = 2.0 * lp * 1e9;
    summary["signal_fwhm_pm"] = s.signal_fwhm_m * 1e12;
    summary["signal_fwhm_ghz"] = s.signal_fwhm_hz * 1e-9;
    summary["idler_fwhm_pm"] = s.idler_fwhm_m * 1e12;
    summary["idler_fwhm_ghz"] = s.idler_fwhm_hz * 1e-9;
    summary["linearized_fwhm_ghz"] = linearized_bandwidth_hz(disp, g, lp) * 1e-9;
    const double filtered_fwhm = filtered_signal.fwhm_wavelength();
    summary["filter"] = {{"shape", c.filter_shape},
                         {"fwhm_pm", c.filter_fwhm_pm},
                         {"filtered_fwhm_pm", filtered_fwhm * 1e12},
                         {"relative_change", filtered_fwhm / s.signal_fwhm_m - 1.0}};
    summary["sfg_fwhm_pump_pm"] = sampled_fwhm(pump_pm, tuning.efficiency);
    summary["sfg_fwhm_fundamental_pm"] = 2.0 * sampled_fwhm(pump_pm, tuning.efficiency);
    summary["sinc2_half_max_root"] = sinc2_half_max_root();
    summary["duty_sigma"] = c.duty_sigma;
    files.push_back(write_summary(ctx, "spectrum_summary", summary));
    return files;
}

Files cmd_hom(const Context& ctx)
{
    const RunConfig& c = ctx.config;
    const auto disp = dispersion(c);
    const auto g = grating(c);
    const double lp = pump_wavelength(c, disp, g);
    const auto signal = hom_signal(disp, g, lp);
    const auto delays = linspace(-c.delay_half_span_ps * 1e-12, c.delay_half_span_ps * 1e-12, c.delay_points);
    const auto trace = hom_trace(signal, delays, c.indistinguishability);

    const auto expected = hom_expected_counts(trace, c.hom_out_counts, c.hom_accidental_counts);
    std::vector<double> sampled;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        Rng rng(child_seed(c.seed, i));
        sampled.push_back(static_cast<double>(poisson_sample(expected[i], rng)));
    }

    ojson summary;
    summary["indistinguishability"] = c.indistinguishability;
    summary["accidental_counts"] = c.hom_accidental_counts;
    summary["out_counts"] = c.hom_out_counts;

    std::vector<double> fit_curve(delays.size(), 0.0);
    if (c.indistinguishability > 0.0) {
        const auto pfit = fit_triangle(trace);
        summary["base_width_ps"] = pfit.base_width * 1e12;
        summary["reference_base_width_ps"] = 155.0;
        summary["base_width_note"] = "symmetric sinc model; the measured width depends on the source model";
        summary["probability_visibility"] = pfit.visibility;

        auto block = [&](const std::vector<double>& counts) {
            const auto fit = fit_triangle(delays, counts);
            ojson b;
            b["raw_visibility"] = fit.visibility;
            const auto corr = corrected_visibility(fit, c.hom_accidental_counts);
            b["corrected_visibility"] = corr ? ojson(corr->corrected) : ojson(nullptr);
            b["base_width_ps"] = fit.base_width * 1e12;
            b["baseline_counts"] = fit.baseline;
            b["min_counts"] = fit.baseline - fit.depth;
            return std::pair{b, fit};
        };
        const auto [expected_block, expected_fit] = block(expected);
        const auto [sampled_block, sampled_fit] = block(sampled);
        summary["expected_counts_fit"] = expected_block;
        summary["sampled_counts_fit"] = sampled_block;
        for (std::size_t i = 0; i < delays.size(); ++i) {
            fit_curve[i] = triangle_dip(delays[i], sampled_fit.baseline, sampled_fit.depth, sampled_fit.center,
                                        sampled_fit.base_width);
        }
    } else {
        summary["base_width_ps"] = nullptr;
        summary["probability_visibility"] = 0.0;
        for (std::size_t i = 0; i < delays.size(); ++i) {
            fit_curve[i] = c.hom_out_counts;
        }
    }

    Table t{"hom_trace", {"delay_ps", "probability", "expected_counts", "counts", "fit_counts"}, {}};
    for (std::size_t i = 0; i < delays.size(); ++i) {
        t.rows.push_back({delays[i] * 1e12, trace.probability[i], expected[i], sampled[i], fit_curve[i]});
    }
    Files files{write_table(ctx, t)};
    files.push_back(write_summary(ctx, "hom_summary", summary));
    return files;
}

Files cmd_fringes(const Context& ctx)
{
    const RunConfig& c = ctx.config;
    const auto rho = configured_state(c);
    const auto model = counts_model(c);
    const auto grid_deg = linspace(0.0, c.hwp_span_deg, c.fringe_points);
    std::vector<double> grid;
    for (const double d : grid_deg) {
        grid.push_back(deg_to_rad(d));
    }

    Files files;
    ojson summary;
    summary["state"] = {{"phi_deg", c.phi_deg}, {"mix", c.mix}};
    ojson fits = ojson::object();
    const std::array<Basis, 4> bases{Basis::H, Basis::V, Basis::D, Basis::A};
    for (std::size_t k = 0; k < bases.size(); ++k) {
        const auto records = fringe_scan(rho, bases[k], grid, model, child_seed(c.seed, k));
        const auto fit = fit_fringe(records);
        const std::string label(to_string(bases[k]));
        Table t{"fringe_" + label, {"hwp_l_deg", "expected", "coincidences", "singles_r", "singles_l", "fit"}, {}};
        double max_counts = 0.0;
        double min_counts = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < records.size(); ++i) {
            const double n = static_cast<double>(records[i].coincidences);
            max_counts = std::max(max_counts, n);
            min_counts = std::min(min_counts, n);
            t.rows.push_back({grid_deg[i], expected_coincidences(rho, records[i].setting, model), records[i].coincidences,
                              records[i].singles_r, records[i].singles_l,
                              fit.offset + fit.amplitude * std::cos(4.0 * grid[i] - fit.phase)});
        }
        files.push_back(write_table(ctx, t));
        fits[label] = {{"visibility", fit.visibility},
                       {"visibility_error", fit.visibility_error},
                       {"phase_deg", rad_to_deg(fit.phase)},
                       {"offset", fit.offset},
                       {"amplitude", fit.amplitude},
                       {"max_counts", max_counts},
                       {"min_counts", min_counts}};
    }
    summary["fits"] = fits;
    summary["brightness_hz_per_ghz_mw"] = spectral_brightness(c.pair_rate_hz, c.bandwidth_ghz, c.pump_power_mw);
    files.push_back(write_summary(ctx, "fringes_summary", summary));
    return files;
}

Files cmd_tomography(const Context& ctx, const std::optional<std::filesystem::path>& counts_path,
                     const std::optional<std::string>& target_name)
{
    const RunConfig& c = ctx.config;
    const auto settings = build_settings();
    Files files;

    std::vector<CountsRecord> records;
    if (counts_path) {
        records = read_counts_file(counts_path->string());
    } else {
        CountsModel model;
        model.pair_rate_hz = c.counts_per_basis;
        model.duration_s = 1.0;
        model.window_s = c.window_ns * 1e-9;
        records = simulate_settings(configured_state(c), settings.settings(), model, c.seed);
        const auto path = ctx.out_dir / "tomography_counts.jsonl";
        write_counts_file(path.string(), records);
        files.push_back(path);
    }
    const auto counts = counts_by_setting(records, settings);

    const std::string name = target_name.value_or(c.target);
    TwoQubitKet target;
    try {
        target = named_target(name);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("--target: ") + e.what());
    }

    const auto result = mle_reconstruct(counts, settings, target);
    const auto bars = poisson_error_bars(counts, settings, target, c.resamples, child_seed(c.seed, 1000));
    const auto linear = check_physical(linear_inversion(counts, settings));

    const Matrix4c& rho = result.rho.matrix();
    ojson summary;
    summary["source"] = counts_path ? counts_path->string() : std::string("simulated");
    summary["target"] = name;
    summary["fidelity"] = *result.fidelity;
    summary["fidelity_std"] = bars.fidelity_std;
    summary["purity"] = purity(result.rho);
    summary["normalization"] = result.normalization;
    summary["log_likelihood"] = result.log_likelihood;
    summary["iterations"] = result.iterations;
    summary["converged"] = result.converged;
    summary["mc_samples"] = bars.samples;
    summary["mc_failures"] = bars.failures;
    summary["linear_inversion_min_eigenvalue"] = linear.min_eigenvalue;
    summary["basis"] = basis_labels;
    summary["ordering"] = "R (x) L";
    summary["rho_real"] = matrix_json(rho.real());
    summary["rho_imag"] = matrix_json(rho.imag());
    summary["rho_real_std"] = matrix_json(bars.real_std);
    summary["rho_imag_std"] = matrix_json(bars.imag_std);
    files.push_back(write_summary(ctx, "tomography_result", summary));

    Table t{"tomography_bars", {"row", "col", "real", "imag", "real_std", "imag_std"}, {}};
    for (int r = 0; r < 4; ++r) {
        for (int col = 0; col < 4; ++col) {
            t.rows.push_back({basis_labels[r], basis_labels[col], rho(r, col).real(), rho(r, col).imag(),
                              bars.real_std(r, col), bars.imag_std(r, col)});
        }
    }
    files.push_back(write_table(ctx, t));
    return files;
}

Files cmd_bell(const Context& ctx, const std::optional<std::filesystem::path>& counts_path)
{
    const RunConfig& c = ctx.config;
    Files files;
    std::vector<CountsRecord> records;
    ojson summary;
    if (counts_path) {
        records = read_counts_file(counts_path->string());
        summary["source"] = counts_path->string();
    } else {
        const auto rho = configured_state(c);
        records = simulate_settings(rho, chsh_measurements(), counts_model(c), c.seed);
        const auto path = ctx.out_dir / "bell_counts.jsonl";
        write_counts_file(path.string(), records);
        files.push_back(path);
        summary["source"] = "simulated";
        summary["predicted_S"] = predict_S(rho);
    }
    const auto r = analyze_chsh(records);
    const std::array<const char*, 4> pairs{"ab", "ab'", "a'b", "a'b'"};
    ojson e = ojson::object();
    Table t{"bell_correlations", {"pair", "E", "E_std"}, {}};
    for (std::size_t i = 0; i < 4; ++i) {
        e[pairs[i]] = {{"E", r.e[i]}, {"std", r.e_std[i]}};
        t.rows.push_back({pairs[i], r.e[i], r.e_std[i]});
    }
    summary["correlations"] = e;
    summary["S"] = r.s;
    summary["S_std"] = r.std_s;
    summary["sigma_violation"] = r.sigma_violation;
    summary["violates_local_bound"] = r.s > 2.0 && r.sigma_violation > 3.0;
    files.push_back(write_summary(ctx, "bell_result", summary));
    files.push_back(write_table(ctx, t));
    return files;
}

std::vector<ReproduceRow> reproduce_rows(std::uint64_t seed)
{
    std::vector<ReproduceRow> rows;
    auto gated = [&](std::string quantity, std::string reference, double computed, std::string tol, bool ok) {
        rows.push_back({std::move(quantity), std::move(reference), computed, std::move(tol), ok ? "pass" : "FAIL"});
    };
    auto info = [&](std::string quantity, std::string reference, double computed, std::string note) {
        rows.push_back({std::move(quantity), std::move(reference), computed, std::move(note), "info"});
    };

    const auto disp = named_dispersion("ktp_waveguide_matched");
    const auto g = waveguide_grating();
    const auto root = solve_degeneracy(disp, g);
    gated("SFG peak pump wavelength (nm)", "776.74", root.pump_m * 1e9, "0.01 nm",
          std::abs(root.pump_m - 776.74e-9) <= 0.01e-9);
    gated("Degenerate signal/idler wavelength (nm)", "1553.48", root.signal_m * 1e9, "exactly 2x pump",
          root.signal_m == 2.0 * root.pump_m && std::abs(root.signal_m - 1553.48e-9) <= 0.02e-9);
    const auto bulk = solve_degeneracy(named_dispersion("ktp_kato2002"), g);
    gated("Bulk KTP Sellmeier degeneracy (nm)", "776.74", bulk.pump_m * 1e9, "5 nm",
          std::abs(bulk.pump_m - 776.74e-9) <= 5e-9);

    std::vector<double> pump_pm;
    const auto pump_grid = linspace(root.pump_m - 150e-12, root.pump_m + 150e-12, 601);
    for (const double p : pump_grid) {
        pump_pm.push_back(p * 1e12);
    }
    const auto tuning = sinc2_tuning_curve(disp, g, pump_grid);
    const double sfg_fundamental = 2.0 * sampled_fwhm(pump_pm, tuning.efficiency);
    gated("SFG tuning FWHM, fundamental wavelength (pm)", "56 +/- 0.3", sfg_fundamental, "1%",
          std::abs(sfg_fundamental / 56.0 - 1.0) <= 0.01);

    const auto grid = detuning_grid(two_pi * 40e9, 4001);
    const auto s = bspdc_spectrum(disp, g, root.pump_m, grid);
    gated("BSPDC FWHM (pm)", "57", s.signal_fwhm_m * 1e12, "1%", std::abs(s.signal_fwhm_m / 57e-12 - 1.0) <= 0.01);
    gated("BSPDC FWHM (GHz)", "7.1", s.signal_fwhm_hz * 1e-9, "0.05 GHz", std::abs(s.signal_fwhm_hz - 7.1e9) <= 0.05e9);
    gated("Signal/idler FWHM difference (GHz)", "0 (identical)", std::abs(s.signal_fwhm_hz - s.idler_fwhm_hz) * 1e-9,
          "grid step", std::abs(s.signal_fwhm_hz - s.idler_fwhm_hz) <= 2.0 * (grid[1] - grid[0]) / two_pi);
    const double ghz = convert_bandwidth(57e-12, 1553.48e-9);
    gated("57 pm at 1553.48 nm (GHz)", "7.1", ghz * 1e-9, "0.5% of 7.09", std::abs(ghz / 7.09e9 - 1.0) <= 0.005);
    gated("7.8 pm cavity linewidth (GHz)", "0.97 (derived)", convert_bandwidth(7.8e-12, 1553.48e-9) * 1e-9, "0.01 GHz",
          std::abs(convert_bandwidth(7.8e-12, 1553.48e-9) - 0.97e9) <= 0.01e9);
    const auto filtered = apply_filter(s.signal, FilterSpec{s.signal.center_wavelength(), 132e-12});
    const double change = filtered.fwhm_wavelength() / s.signal_fwhm_m - 1.0;
    gated("FWHM change from 132 pm FPF", "no effect", change, "|change| < 15%", std::abs(change) < 0.15);

    const auto signal = hom_signal(disp, g, root.pump_m);
    const auto delays = linspace(-300e-12, 300e-12, 241);
    const auto trace = hom_trace(signal, delays, 0.971);
    const auto expected = hom_expected_counts(trace, 1000.0, 72.0);
    const auto fit = fit_triangle(delays, expected);
    const auto corrected = corrected_visibility(fit, 72.0);
    gated("HOM raw visibility", "90.1%", fit.visibility, "0.5%", std::abs(fit.visibility - 0.901) <= 0.005);
    gated("HOM visibility after accidental subtraction", "97.1%", corrected ? corrected->corrected : 0.0, "0.5%",
          corrected && std::abs(corrected->corrected - 0.971) <= 0.005);
    const auto pfit = fit_triangle(hom_trace(signal, delays, 1.0));
    info("HOM base-to-base width (ps)", "155", pfit.base_width * 1e12, "symmetric sinc model; not gated");

    const auto grid16 = linspace(0.0, pi / 2.0 * 15.0 / 16.0, 16);
    std::vector<double> fringe;
    for (const double h : grid16) {
        fringe.push_back(641.0 + 619.0 * std::cos(4.0 * h));
    }
    const double v = fit_fringe(grid16, fringe).visibility;
    gated("Fringe visibility, max 1260 / min 22", "96.6%", v, "0.05%", std::abs(v - 0.966) <= 5e-4);
    const double brightness = spectral_brightness(2.414e4, 7.1, 1.0);
    gated("Spectral brightness (Hz/(GHz mW))", "3.4e3", brightness, "1%", std::abs(brightness / 3.4e3 - 1.0) <= 0.01);

    const auto werner_bell = werner_state(singlet(), 0.9617);
    const double s_pred = predict_S(werner_bell);
    gated("CHSH S, Werner 0.9617 (predicted)", "2.720", s_pred, "0.001", std::abs(s_pred - 2.720) <= 1e-3);
    CountsModel bell_model;
    bell_model.pair_rate_hz = 168.0;
    bell_model.duration_s = 15.0;
    const auto bell = run_bell_experiment(werner_bell, bell_model, child_seed(seed, 1));
    gated("CHSH S, Werner 0.9617 (simulated)", "2.720 +/- 0.039", bell.s, "2 std_S",
          std::abs(bell.s - 2.720) <= 2.0 * bell.std_s);
    const double sigma = sigma_violation(2.720, 0.039);
    gated("Violation for S = 2.720 +/- 0.039 (std)", "18.5", sigma, "0.05", std::abs(sigma - 18.46) <= 0.05);

    const auto settings = build_settings();
    const auto truth = werner_state(singlet(), 0.943);
    double mean_f = 0.0;
    const int seeds = 20;
    std::vector<double> first_counts;
    for (int k = 0; k < seeds; ++k) {
        const auto counts = sample_tomography_counts(truth, 1e4, settings, child_seed(seed, 100 + k));
        if (k == 0) {
            first_counts = counts;
        }
        mean_f += *mle_reconstruct(counts, settings, singlet()).fidelity / seeds;
    }
    gated("Tomography fidelity to Psi-, Werner 0.943 (mean of 20)", "95.71%", mean_f, "0.01",
          std::abs(mean_f - 0.9571) <= 0.01);
    const auto bars = poisson_error_bars(first_counts, settings, singlet(), 100, child_seed(seed, 200));
    gated("Tomography fidelity std (Poisson resampling)", "0.61%", bars.fidelity_std, "0.2% to 2%",
          bars.fidelity_std > 0.002 && bars.fidelity_std < 0.02);
    return rows;
}

Files cmd_reproduce(const Context& ctx)
{
    const auto rows = reproduce_rows(ctx.config.seed);
    Table t{"reproduce", {"quantity", "reference", "computed", "tolerance", "verdict"}, {}};
    int failures = 0;
    for (const auto& r : rows) {
        t.rows.push_back({r.quantity, r.reference, r.computed, r.tolerance, r.verdict});
        failures += r.verdict == "FAIL" ? 1 : 0;
    }
    Files files{write_table(ctx, t)};
    if (failures > 0) {
        throw NumericalError("reproduce: " + std::to_string(failures) + " check(s) failed, see " + files[0].string());
    }
    return files;
}

}  // namespace bspdc::app
