#include "bspdc/chsh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "bspdc/errors.hpp"

namespace bspdc {

namespace {

constexpr std::array<const char*, 4> pair_tags{"ab", "ab'", "a'b", "a'b'"};
constexpr std::array<const char*, 4> sign_tags{"++", "+-", "-+", "--"};
constexpr std::array<std::pair<int, int>, 4> sign_pairs{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

// Index into the canonical 16-record order, or -1 for an unrecognised label.
int label_index(const std::string& label)
{
    for (int p = 0; p < 4; ++p) {
        for (int s = 0; s < 4; ++s) {
            if (label == std::string(pair_tags[p]) + sign_tags[s]) {
                return 4 * p + s;
            }
        }
    }
    return -1;
}

}  // namespace

PauliSetting::PauliSetting(const Eigen::Vector3d& d) : direction(d)
{
    if (!d.allFinite() || std::abs(d.norm() - 1.0) > 1e-12) {
        throw std::invalid_argument("PauliSetting: analyzer direction must be a unit vector");
    }
}

PauliSetting PauliSetting::normalized(const Eigen::Vector3d& d)
{
    if (!(d.norm() > 0.0)) {
        throw std::invalid_argument("PauliSetting: zero direction");
    }
    return PauliSetting(d.normalized());
}

JonesMatrix PauliSetting::operator_matrix() const
{
    const complex i{0.0, 1.0};
    JonesMatrix m;
    m << direction.z(), direction.x() - i * direction.y(),
         direction.x() + i * direction.y(), -direction.z();
    return m;
}

PolarizationState PauliSetting::eigenstate(int sign) const
{
    if (sign != 1 && sign != -1) {
        throw std::invalid_argument("PauliSetting: sign must be +1 or -1");
    }
    const double theta = std::acos(std::clamp(direction.z(), -1.0, 1.0));
    const double phi = std::atan2(direction.y(), direction.x());
    const complex e = std::polar(1.0, phi);
    if (sign > 0) {
        return PolarizationState(std::cos(theta / 2.0), e * std::sin(theta / 2.0));
    }
    return PolarizationState(std::sin(theta / 2.0), -e * std::cos(theta / 2.0));
}

AnalyzerAngles PauliSetting::analyzer(int sign) const
{
    if (std::abs(direction.y()) > 1e-12) {
        throw std::invalid_argument("PauliSetting::analyzer: HWP-only analyzers need a direction in the x-z plane");
    }
    if (sign != 1 && sign != -1) {
        throw std::invalid_argument("PauliSetting: sign must be +1 or -1");
    }
    const double theta = std::atan2(direction.x(), direction.z());
    const double hwp = theta / 4.0 + (sign > 0 ? 0.0 : std::numbers::pi / 4.0);
    return {0.0, hwp};
}

CorrelationEstimate correlation_E(std::int64_t pp, std::int64_t pm, std::int64_t mp, std::int64_t mm)
{
    if (pp < 0 || pm < 0 || mp < 0 || mm < 0) {
        throw DataError("correlation_E: counts must be non-negative");
    }
    const std::int64_t same = pp + mm;
    const std::int64_t different = pm + mp;
    const std::int64_t sum = same + different;
    if (sum == 0) {
        throw DataError("correlation_E: zero total counts");
    }
    const double e = static_cast<double>(same - different) / static_cast<double>(sum);
    // Var E = sum_k C_k (dE/dC_k)^2 = (1 - E^2) / sum for independent Poisson counts.
    const double var = std::max(0.0, 1.0 - e * e) / static_cast<double>(sum);
    return {e, std::sqrt(var)};
}

double sigma_violation(double s, double std_s)
{
    if (!(std_s > 0.0)) {
        return 0.0;
    }
    return (std::abs(s) - 2.0) / std_s;
}

ChshResult chsh_S(const CorrelationEstimate& ab, const CorrelationEstimate& abp, const CorrelationEstimate& apb,
                  const CorrelationEstimate& apbp)
{
    ChshResult r;
    r.e = {ab.value, abp.value, apb.value, apbp.value};
    r.e_std = {ab.std, abp.std, apb.std, apbp.std};
    r.s = std::abs(ab.value - abp.value + apb.value + apbp.value);
    r.std_s = std::sqrt(ab.std * ab.std + abp.std * abp.std + apb.std * apb.std + apbp.std * apbp.std);
    r.sigma_violation = sigma_violation(r.s, r.std_s);
    return r;
}

double predict_E(const DensityMatrix& rho, const PauliSetting& a_l, const PauliSetting& b_r)
{
    return std::real((rho.matrix() * kron(b_r.operator_matrix(), a_l.operator_matrix())).trace());
}

ChshSettings methods_settings()
{
    const Eigen::Vector3d x(1.0, 0.0, 0.0);
    const Eigen::Vector3d z(0.0, 0.0, 1.0);
    return {PauliSetting(z), PauliSetting(x), PauliSetting::normalized(x + z), PauliSetting::normalized(x - z)};
}

double predict_S(const DensityMatrix& rho, const ChshSettings& s)
{
    return std::abs(predict_E(rho, s.a, s.b) - predict_E(rho, s.a, s.b_prime) + predict_E(rho, s.a_prime, s.b) +
                    predict_E(rho, s.a_prime, s.b_prime));
}

std::vector<MeasurementSetting> chsh_measurements(const ChshSettings& s)
{
    const std::array<std::pair<const PauliSetting*, const PauliSetting*>, 4> pairs{
        {{&s.a, &s.b}, {&s.a, &s.b_prime}, {&s.a_prime, &s.b}, {&s.a_prime, &s.b_prime}}};
    std::vector<MeasurementSetting> out;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        for (std::size_t k = 0; k < sign_pairs.size(); ++k) {
            const auto [sa, sb] = sign_pairs[k];
            out.push_back({pairs[p].second->analyzer(sb), pairs[p].first->analyzer(sa),
                           std::string(pair_tags[p]) + sign_tags[k]});
        }
    }
    return out;
}

ChshResult analyze_chsh(std::span<const CountsRecord> records)
{
    if (records.size() != 16) {
        throw DataError("CHSH analysis needs 16 records, got " + std::to_string(records.size()));
    }
    std::array<std::int64_t, 16> counts{};
    std::array<bool, 16> seen{};
    bool labelled = true;
    for (const auto& r : records) {
        labelled = labelled && label_index(r.setting.label) >= 0;
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].validate();
        const int idx = labelled ? label_index(records[i].setting.label) : static_cast<int>(i);
        if (seen[idx]) {
            throw DataError("CHSH record " + std::to_string(i + 1) + " repeats setting " + records[i].setting.label);
        }
        seen[idx] = true;
        counts[idx] = records[i].coincidences;
    }
    std::array<CorrelationEstimate, 4> e{};
    for (int p = 0; p < 4; ++p) {
        e[p] = correlation_E(counts[4 * p], counts[4 * p + 1], counts[4 * p + 2], counts[4 * p + 3]);
    }
    return chsh_S(e[0], e[1], e[2], e[3]);
}

ChshResult run_bell_experiment(const DensityMatrix& rho, const CountsModel& model, std::uint64_t seed,
                               const ChshSettings& settings)
{
    const auto measurements = chsh_measurements(settings);
    const auto records = simulate_settings(rho, measurements, model, seed);
    return analyze_chsh(records);
}

}  // namespace bspdc
