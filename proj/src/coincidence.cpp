#include "bspdc/coincidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "bspdc/errors.hpp"
#include "bspdc/parallel.hpp"
#include "bspdc/random.hpp"

namespace bspdc {

namespace {

constexpr double pi = std::numbers::pi;

void require_angles(const AnalyzerAngles& a)
{
    if (!std::isfinite(a.qwp) || !std::isfinite(a.hwp)) {
        throw std::invalid_argument("measurement setting has non-finite waveplate angles");
    }
}

}  // namespace

MeasurementSetting MeasurementSetting::from_labels(Basis r, Basis l)
{
    return {analyzer_angles(r), analyzer_angles(l), std::string(to_string(r)) + std::string(to_string(l))};
}

void CountsRecord::validate() const
{
    require_angles(setting.r);
    require_angles(setting.l);
    if (coincidences < 0 || singles_r < 0 || singles_l < 0) {
        throw DataError("counts must be non-negative");
    }
    if (!(duration_s > 0.0) || !(window_s > 0.0)) {
        throw DataError("duration and coincidence window must be positive");
    }
}

void CountsModel::validate() const
{
    if (!(pair_rate_hz > 0.0) || !(duration_s > 0.0) || !(window_s > 0.0)) {
        throw std::invalid_argument("counts model needs positive rate, duration and window");
    }
    noise.validate();
}

double expected_coincidences(const DensityMatrix& rho, const MeasurementSetting& setting, const CountsModel& model)
{
    model.validate();
    require_angles(setting.r);
    require_angles(setting.l);
    const DensityMatrix state = model.noise.apply(rho);
    const double p = joint_probability(state, setting.projector_r(), setting.projector_l());
    return model.pair_rate_hz * model.duration_s * model.noise.efficiency_r * model.noise.efficiency_l * p +
           model.noise.accidental_rate_hz * model.duration_s;
}

CountsRecord simulate_counts(const DensityMatrix& rho, const MeasurementSetting& setting, const CountsModel& model,
                             std::uint64_t seed)
{
    const double mu = expected_coincidences(rho, setting, model);
    const DensityMatrix state = model.noise.apply(rho);
    const double pairs = model.pair_rate_hz * model.duration_s;
    const double dark = model.noise.dark_rate_hz * model.duration_s;
    const double mean_r = pairs * model.noise.efficiency_r * marginal_probability_r(state, setting.projector_r()) + dark;
    const double mean_l = pairs * model.noise.efficiency_l * marginal_probability_l(state, setting.projector_l()) + dark;

    Rng rng(seed);
    CountsRecord record;
    record.setting = setting;
    record.coincidences = poisson_sample(mu, rng);
    record.singles_r = poisson_sample(mean_r, rng);
    record.singles_l = poisson_sample(mean_l, rng);
    record.duration_s = model.duration_s;
    record.window_s = model.window_s;
    return record;
}

std::vector<CountsRecord> simulate_settings(const DensityMatrix& rho, std::span<const MeasurementSetting> settings,
                                            const CountsModel& model, std::uint64_t seed)
{
    return parallel_indexed(settings.size(),
                            [&](std::size_t i) { return simulate_counts(rho, settings[i], model, child_seed(seed, i)); });
}

std::vector<CountsRecord> fringe_scan(const DensityMatrix& rho, Basis fixed_r, std::span<const double> hwp_l_grid,
                                      const CountsModel& model, std::uint64_t seed)
{
    if (hwp_l_grid.empty()) {
        throw std::invalid_argument("fringe_scan: empty HWP grid");
    }
    if (fixed_r != Basis::H && fixed_r != Basis::V && fixed_r != Basis::D && fixed_r != Basis::A) {
        throw std::invalid_argument("fringe_scan: R arm basis must be H, V, D or A");
    }
    std::vector<MeasurementSetting> settings;
    settings.reserve(hwp_l_grid.size());
    for (const double h : hwp_l_grid) {
        MeasurementSetting s{analyzer_angles(fixed_r), {0.0, h}, std::string(to_string(fixed_r))};
        settings.push_back(s);
    }
    return simulate_settings(rho, settings, model, seed);
}

FringeFit fit_fringe(std::span<const double> theta, std::span<const double> counts)
{
    if (theta.size() != counts.size()) {
        throw std::invalid_argument("fit_fringe: angle and count arrays differ in length");
    }
    if (theta.size() < 5) {
        throw std::invalid_argument("fit_fringe: need at least 5 points");
    }
    const auto [lo, hi] = std::minmax_element(theta.begin(), theta.end());
    if (*hi - *lo < pi / 4.0 - 1e-12) {
        throw std::invalid_argument("fit_fringe: angles must span at least half a fringe period (pi/4)");
    }

    Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const Eigen::Vector3d row(1.0, std::cos(4.0 * theta[i]), std::sin(4.0 * theta[i]));
        const double w = 1.0 / std::max(counts[i], 1.0);
        normal += w * row * row.transpose();
        rhs += w * counts[i] * row;
    }
    Eigen::FullPivLU<Eigen::Matrix3d> lu(normal);
    if (lu.rank() < 3) {
        throw std::invalid_argument("fit_fringe: angles do not determine the fringe");
    }
    const Eigen::Vector3d p = lu.solve(rhs);
    const Eigen::Matrix3d cov = lu.inverse();

    FringeFit fit{};
    fit.offset = p(0);
    fit.amplitude = std::hypot(p(1), p(2));
    fit.phase = std::atan2(p(2), p(1));
    if (fit.phase < 0.0) {
        fit.phase += 2.0 * pi;
    }
    fit.period = pi / 2.0;
    if (!(fit.offset > 0.0)) {
        throw NumericalError("fit_fringe: non-positive fringe offset");
    }
    fit.visibility = std::min(1.0, fit.amplitude / fit.offset);

    Eigen::Vector3d grad(-fit.amplitude / (fit.offset * fit.offset), 0.0, 0.0);
    if (fit.amplitude > 0.0) {
        grad(1) = p(1) / (fit.amplitude * fit.offset);
        grad(2) = p(2) / (fit.amplitude * fit.offset);
    }
    fit.visibility_error = std::sqrt(std::max(0.0, grad.dot(cov * grad)));
    return fit;
}

FringeFit fit_fringe(std::span<const CountsRecord> records)
{
    std::vector<double> theta;
    std::vector<double> counts;
    for (const auto& r : records) {
        r.validate();
        theta.push_back(r.setting.l.hwp);
        counts.push_back(static_cast<double>(r.coincidences));
    }
    return fit_fringe(theta, counts);
}

double spectral_brightness(double pair_rate, double bandwidth_ghz, double pump_power_mw, RateUnit unit)
{
    if (!(pair_rate > 0.0)) {
        throw std::invalid_argument("spectral_brightness: pair rate must be positive");
    }
    if (!(bandwidth_ghz > 0.0) || !(pump_power_mw > 0.0)) {
        throw std::invalid_argument("spectral_brightness: bandwidth and pump power must be positive");
    }
    const double rate_hz = unit == RateUnit::kilohertz ? pair_rate * 1e3 : pair_rate;
    return rate_hz / (bandwidth_ghz * pump_power_mw);
}

AccidentalCorrection subtract_accidentals(const CountsRecord& record)
{
    record.validate();
    const double acc = static_cast<double>(record.singles_r) * static_cast<double>(record.singles_l) *
                       record.window_s / record.duration_s;
    const double raw = static_cast<double>(record.coincidences);
    if (raw < acc) {
        return {acc, 0.0, true};
    }
    return {acc, raw - acc, false};
}

nlohmann::json to_json(const CountsRecord& record)
{
    nlohmann::json j = {
        {"qwp_r", rad_to_deg(record.setting.r.qwp)},
        {"hwp_r", rad_to_deg(record.setting.r.hwp)},
        {"qwp_l", rad_to_deg(record.setting.l.qwp)},
        {"hwp_l", rad_to_deg(record.setting.l.hwp)},
        {"coincidences", record.coincidences},
        {"singles_r", record.singles_r},
        {"singles_l", record.singles_l},
        {"duration_s", record.duration_s},
        {"window_s", record.window_s},
    };
    if (!record.setting.label.empty()) {
        j["label"] = record.setting.label;
    }
    return j;
}

CountsRecord counts_record_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw DataError("counts record must be a JSON object");
    }
    static const std::vector<std::string> required{"qwp_r", "hwp_r", "qwp_l", "hwp_l", "coincidences",
                                                    "singles_r", "singles_l", "duration_s", "window_s"};
    for (const auto& key : required) {
        if (!j.contains(key)) {
            throw DataError("missing field '" + key + "'");
        }
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "label" && std::find(required.begin(), required.end(), key) == required.end()) {
            throw DataError("unknown field '" + key + "'");
        }
    }
    CountsRecord r;
    try {
        r.setting.r = {deg_to_rad(j.at("qwp_r").get<double>()), deg_to_rad(j.at("hwp_r").get<double>())};
        r.setting.l = {deg_to_rad(j.at("qwp_l").get<double>()), deg_to_rad(j.at("hwp_l").get<double>())};
        for (const char* key : {"coincidences", "singles_r", "singles_l"}) {
            if (!j.at(key).is_number_integer()) {
                throw DataError(std::string("field '") + key + "' must be an integer");
            }
        }
        r.coincidences = j.at("coincidences").get<std::int64_t>();
        r.singles_r = j.at("singles_r").get<std::int64_t>();
        r.singles_l = j.at("singles_l").get<std::int64_t>();
        r.duration_s = j.at("duration_s").get<double>();
        r.window_s = j.at("window_s").get<double>();
        r.setting.label = j.value("label", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(e.what());
    }
    try {
        r.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    return r;
}

std::vector<CountsRecord> read_counts(std::istream& in)
{
    std::vector<CountsRecord> records;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line.front() == '#') {
            continue;
        }
        try {
            records.push_back(counts_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("counts line " + std::to_string(number) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("counts line " + std::to_string(number) + ": " + e.what());
        }
    }
    return records;
}

std::vector<CountsRecord> read_counts_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open counts file '" + path + "'");
    }
    return read_counts(in);
}

void write_counts(std::ostream& out, std::span<const CountsRecord> records)
{
    for (const auto& r : records) {
        out << to_json(r).dump() << '\n';
    }
}

void write_counts_file(const std::string& path, std::span<const CountsRecord> records)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write counts file '" + path + "'");
    }
    write_counts(out, records);
}

}  // namespace bspdc
