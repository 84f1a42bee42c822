#pragma once

// Two-photon polarization states.
//
// Tensor ordering is R (x) L everywhere: basis index = 2*r + l with
// {0, 1} = {H, V}, so the kets run over {HH, HV, VH, VV} with the
// right-propagating photon first.

#include <array>
#include <string>

#include <Eigen/Dense>
#include "json.hpp"

#include "bspdc/polarization.hpp"

namespace bspdc {

using TwoQubitKet = Eigen::Vector4cd;
using Matrix4c = Eigen::Matrix4cd;

inline constexpr double physicality_tolerance = 1e-10;
inline constexpr std::array<const char*, 4> two_qubit_basis{"HH", "HV", "VH", "VV"};

/// (|H>_R|V>_L + e^{i phi}|V>_R|H>_L)/sqrt(2). phi = pi is the singlet.
TwoQubitKet eq1_state(double phi);
TwoQubitKet singlet();

/// 4x4 density matrix that has passed the physicality checks (Hermitian,
/// unit trace, eigenvalues >= -1e-10).
class DensityMatrix {
public:
    /// Throws std::invalid_argument on an unphysical matrix.
    explicit DensityMatrix(const Matrix4c& m);

    static DensityMatrix pure(const TwoQubitKet& ket);
    static DensityMatrix maximally_mixed();

    const Matrix4c& matrix() const { return m_; }
    complex operator()(int r, int c) const { return m_(r, c); }
    double min_eigenvalue() const;

private:
    Matrix4c m_;
};

struct PhysicalityReport {
    double hermiticity_defect;
    double trace_defect;
    double min_eigenvalue;
    bool physical;
};

PhysicalityReport check_physical(const Matrix4c& m, double tol = physicality_tolerance);

/// Nearest physical state by clipping negative eigenvalues and renormalising.
DensityMatrix project_to_physical(const Matrix4c& hermitian);

Matrix4c kron(const JonesMatrix& right, const JonesMatrix& left);

/// <target|rho|target>.
double fidelity(const DensityMatrix& rho, const TwoQubitKet& target);

/// mix |t><t| + (1 - mix) I/4.
DensityMatrix werner_state(const TwoQubitKet& target, double mix);

double purity(const DensityMatrix& rho);

/// Tr(rho (proj_R (x) proj_L)). Both arguments must be rank-1 projectors.
double joint_probability(const DensityMatrix& rho, const JonesMatrix& proj_r, const JonesMatrix& proj_l);

/// Reduced single-arm detection probability Tr(rho (proj (x) I)) or Tr(rho (I (x) proj)).
double marginal_probability_r(const DensityMatrix& rho, const JonesMatrix& proj_r);
double marginal_probability_l(const DensityMatrix& rho, const JonesMatrix& proj_l);

bool is_rank1_projector(const JonesMatrix& p, double tol = 1e-10);

/// Synthetic-data imperfections.
struct NoiseModel {
    /// Weight of the supplied state against white noise.
    double visibility_mix = 1.0;
    double accidental_rate_hz = 0.0;
    double efficiency_r = 1.0;
    double efficiency_l = 1.0;
    double dark_rate_hz = 0.0;

    void validate() const;
    DensityMatrix apply(const DensityMatrix& rho) const;
};

/// Named targets for the CLI: psi-minus, psi-plus, phi-plus, phi-minus,
/// or "eq1:<phi in degrees>".
TwoQubitKet named_target(const std::string& name);

nlohmann::json to_json(const DensityMatrix& rho);
DensityMatrix density_matrix_from_json(const nlohmann::json& j);

}  // namespace bspdc
