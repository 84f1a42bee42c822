#pragma once

// CHSH Bell test from coincidence counts.
//
// Analyzer settings are Bloch vectors in the (x, y, z) Pauli frame with
// sigma_z = diag(1, -1) in {H, V}: +z is H and +x is D. The a settings act
// on the L photon and the b settings on the R photon:
//   a = sigma_z, a' = sigma_x, b = (sigma_x + sigma_z)/sqrt2, b' = (sigma_x - sigma_z)/sqrt2

#include <array>
#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "bspdc/coincidence.hpp"
#include "bspdc/quantum_state.hpp"

namespace bspdc {

struct PauliSetting {
    Eigen::Vector3d direction;

    /// Throws unless |direction| = 1 within 1e-12.
    explicit PauliSetting(const Eigen::Vector3d& direction);
    static PauliSetting normalized(const Eigen::Vector3d& direction);

    JonesMatrix operator_matrix() const;
    /// Eigenstate of direction . sigma with eigenvalue sign (+1 or -1).
    PolarizationState eigenstate(int sign) const;
    /// HWP-only analyzer selecting the given port; direction must lie in the x-z plane.
    AnalyzerAngles analyzer(int sign) const;
};

struct CorrelationEstimate {
    double value;
    double std;
};

/// E = [C(a,b) - C(a,-b) - C(-a,b) + C(-a,-b)] / sum, with first-order Poisson error.
CorrelationEstimate correlation_E(std::int64_t pp, std::int64_t pm, std::int64_t mp, std::int64_t mm);

struct ChshResult {
    std::array<double, 4> e{};
    std::array<double, 4> e_std{};
    double s = 0.0;
    double std_s = 0.0;
    double sigma_violation = 0.0;
};

/// S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')|, errors in quadrature.
ChshResult chsh_S(const CorrelationEstimate& ab, const CorrelationEstimate& abp, const CorrelationEstimate& apb,
                  const CorrelationEstimate& apbp);

/// (S - 2) / std_S given an S value and its standard deviation.
double sigma_violation(double s, double std_s);

/// Tr(rho (b.sigma)_R (x) (a.sigma)_L).
double predict_E(const DensityMatrix& rho, const PauliSetting& a_l, const PauliSetting& b_r);

struct ChshSettings {
    PauliSetting a;
    PauliSetting a_prime;
    PauliSetting b;
    PauliSetting b_prime;
};

ChshSettings methods_settings();

double predict_S(const DensityMatrix& rho, const ChshSettings& settings = methods_settings());

/// 16 measurement settings in the order (ab, ab', a'b, a'b') x (++, +-, -+, --),
/// where the first sign is the a port (L) and the second the b port (R).
std::vector<MeasurementSetting> chsh_measurements(const ChshSettings& settings = methods_settings());

/// Computes S from 16 records ordered as chsh_measurements(). Throws DataError
/// on a wrong record count.
ChshResult analyze_chsh(std::span<const CountsRecord> records);

ChshResult run_bell_experiment(const DensityMatrix& rho, const CountsModel& model, std::uint64_t seed,
                               const ChshSettings& settings = methods_settings());

}  // namespace bspdc
