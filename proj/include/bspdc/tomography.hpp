#pragma once

// Two-qubit state tomography from product projective measurements.
//
// Default settings are the 16 products of {H, V, D, R} on each arm, ordered
// with the R arm as the outer index: HH, HV, HD, HR, VH, ..., RR.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bspdc/coincidence.hpp"
#include "bspdc/quantum_state.hpp"

namespace bspdc {

class TomographySettings {
public:
    /// Products of the per-arm labels. Throws if the resulting operators
    /// are not informationally complete.
    explicit TomographySettings(std::vector<Basis> per_arm = {Basis::H, Basis::V, Basis::D, Basis::R});

    std::size_t size() const { return settings_.size(); }
    const std::vector<MeasurementSetting>& settings() const { return settings_; }
    const std::vector<Matrix4c>& operators() const { return operators_; }
    /// Indices of the H/V products, which form a complete basis.
    const std::vector<std::size_t>& normalization_subset() const { return hv_subset_; }
    int gram_rank() const;

    /// Index of the setting whose projector matches the record's waveplates.
    std::optional<std::size_t> match(const MeasurementSetting& setting, double tol = 1e-6) const;

private:
    std::vector<MeasurementSetting> settings_;
    std::vector<Matrix4c> operators_;
    std::vector<std::size_t> hv_subset_;
};

TomographySettings build_settings();

/// Orders the records by setting. Throws DataError on a missing,
/// duplicated or unrecognised setting.
std::vector<double> counts_by_setting(std::span<const CountsRecord> records, const TomographySettings& settings);

/// Solves n_v / N = Tr(rho Pi_v) with N from the H/V products. The result is
/// Hermitian with unit trace but not necessarily positive.
Matrix4c linear_inversion(std::span<const double> counts, const TomographySettings& settings);
Matrix4c linear_inversion(std::span<const CountsRecord> records, const TomographySettings& settings);

struct MleOptions {
    int max_iterations = 2000;
    /// On ||grad log L|| / (total counts).
    double gradient_tolerance = 1e-8;
    double step_tolerance = 1e-12;
};

struct TomographyResult {
    DensityMatrix rho = DensityMatrix::maximally_mixed();
    double normalization = 0.0;
    std::optional<double> fidelity;
    double fidelity_std = 0.0;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    int mc_samples = 0;
};

/// Poisson log-likelihood sum_v n_v ln mu_v - mu_v with mu_v = N Tr(rho Pi_v).
double poisson_log_likelihood(const Matrix4c& rho, double normalization, std::span<const double> counts,
                              const TomographySettings& settings);

/// Maximum-likelihood fit over rho = T^dagger T / Tr(T^dagger T), T lower
/// triangular, and the normalization N. Non-convergence is reported through
/// `converged = false` with the best point found.
TomographyResult mle_reconstruct(std::span<const double> counts, const TomographySettings& settings,
                                 const std::optional<TwoQubitKet>& target = std::nullopt,
                                 const MleOptions& options = {});
TomographyResult mle_reconstruct(std::span<const CountsRecord> records, const TomographySettings& settings,
                                 const std::optional<TwoQubitKet>& target = std::nullopt,
                                 const MleOptions& options = {});

/// 16 real parameters <-> lower-triangular T. Layout: 4 real diagonal
/// entries, then (re, im) of T(1,0), T(2,0), T(2,1), T(3,0), T(3,1), T(3,2).
Matrix4c t_matrix_from_parameters(std::span<const double> t);
std::vector<double> parameters_from_density(const Matrix4c& rho);
Matrix4c density_from_parameters(std::span<const double> t);

/// Profiled objective (N at its optimum for the given rho) and its gradient.
double profiled_log_likelihood(std::span<const double> t, std::span<const double> counts,
                               const TomographySettings& settings, std::vector<double>* gradient = nullptr);

struct ErrorBars {
    double fidelity_std = 0.0;
    Eigen::Matrix4d real_std = Eigen::Matrix4d::Zero();
    Eigen::Matrix4d imag_std = Eigen::Matrix4d::Zero();
    int samples = 0;
    int failures = 0;
};

/// Resamples each count as Poisson(n_v), reruns the fit and returns sample
/// standard deviations. Throws NumericalError when more than 10% of the
/// resampled fits fail.
ErrorBars poisson_error_bars(std::span<const double> counts, const TomographySettings& settings,
                             const TwoQubitKet& target, int resamples, std::uint64_t seed,
                             const MleOptions& options = {});

/// Counts mu_v = N Tr(rho Pi_v), optionally Poisson-sampled.
std::vector<double> expected_tomography_counts(const DensityMatrix& rho, double normalization,
                                               const TomographySettings& settings);
std::vector<double> sample_tomography_counts(const DensityMatrix& rho, double normalization,
                                             const TomographySettings& settings, std::uint64_t seed);

}  // namespace bspdc
