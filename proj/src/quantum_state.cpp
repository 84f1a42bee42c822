#include "bspdc/quantum_state.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bspdc/errors.hpp"

namespace bspdc {

namespace {

const complex I{0.0, 1.0};

Eigen::Vector4d eigenvalues_of(const Matrix4c& m)
{
    const Matrix4c h = 0.5 * (m + m.adjoint());
    return Eigen::SelfAdjointEigenSolver<Matrix4c>(h, Eigen::EigenvaluesOnly).eigenvalues();
}

void require_fraction(double x, const char* what)
{
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
    }
}

}  // namespace

TwoQubitKet eq1_state(double phi)
{
    if (!std::isfinite(phi)) {
        throw std::invalid_argument("eq1_state: phase must be finite");
    }
    const double r = 1.0 / std::sqrt(2.0);
    return TwoQubitKet(0.0, r, r * std::exp(I * phi), 0.0);
}

TwoQubitKet singlet()
{
    return eq1_state(std::numbers::pi);
}

PhysicalityReport check_physical(const Matrix4c& m, double tol)
{
    PhysicalityReport report{};
    report.hermiticity_defect = (m - m.adjoint()).cwiseAbs().maxCoeff();
    report.trace_defect = std::abs(m.trace() - 1.0);
    report.min_eigenvalue = eigenvalues_of(m).minCoeff();
    report.physical = m.allFinite() && report.hermiticity_defect <= tol && report.trace_defect <= tol &&
                      report.min_eigenvalue >= -tol;
    return report;
}

DensityMatrix::DensityMatrix(const Matrix4c& m) : m_(m)
{
    const auto report = check_physical(m);
    if (!report.physical) {
        throw std::invalid_argument("density matrix is not physical (hermiticity " +
                                    std::to_string(report.hermiticity_defect) + ", trace defect " +
                                    std::to_string(report.trace_defect) + ", min eigenvalue " +
                                    std::to_string(report.min_eigenvalue) + ")");
    }
}

DensityMatrix DensityMatrix::pure(const TwoQubitKet& ket)
{
    const TwoQubitKet n = ket.normalized();
    return DensityMatrix(n * n.adjoint());
}

DensityMatrix DensityMatrix::maximally_mixed()
{
    return DensityMatrix(Matrix4c::Identity() / 4.0);
}

double DensityMatrix::min_eigenvalue() const
{
    return eigenvalues_of(m_).minCoeff();
}

DensityMatrix project_to_physical(const Matrix4c& hermitian)
{
    const Matrix4c h = 0.5 * (hermitian + hermitian.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(h);
    Eigen::Vector4d values = es.eigenvalues().cwiseMax(0.0);
    const double total = values.sum();
    if (!(total > 0.0)) {
        throw NumericalError("project_to_physical: no positive eigenvalues");
    }
    values /= total;
    Matrix4c rho = es.eigenvectors() * values.cast<complex>().asDiagonal() * es.eigenvectors().adjoint();
    rho = 0.5 * (rho + rho.adjoint());
    return DensityMatrix(rho);
}

Matrix4c kron(const JonesMatrix& right, const JonesMatrix& left)
{
    Matrix4c out;
    for (int r1 = 0; r1 < 2; ++r1) {
        for (int c1 = 0; c1 < 2; ++c1) {
            out.block<2, 2>(2 * r1, 2 * c1) = right(r1, c1) * left;
        }
    }
    return out;
}

double fidelity(const DensityMatrix& rho, const TwoQubitKet& target)
{
    const TwoQubitKet t = target.normalized();
    const double f = std::real(t.dot(rho.matrix() * t));
    return std::clamp(f, 0.0, 1.0);
}

DensityMatrix werner_state(const TwoQubitKet& target, double mix)
{
    require_fraction(mix, "werner_state: mix");
    const TwoQubitKet t = target.normalized();
    return DensityMatrix(mix * (t * t.adjoint()) + (1.0 - mix) * Matrix4c::Identity() / 4.0);
}

double purity(const DensityMatrix& rho)
{
    return std::real((rho.matrix() * rho.matrix()).trace());
}

bool is_rank1_projector(const JonesMatrix& p, double tol)
{
    return (p * p - p).cwiseAbs().maxCoeff() <= tol && (p - p.adjoint()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(p.trace() - 1.0) <= tol;
}

double joint_probability(const DensityMatrix& rho, const JonesMatrix& proj_r, const JonesMatrix& proj_l)
{
    if (!is_rank1_projector(proj_r) || !is_rank1_projector(proj_l)) {
        throw std::invalid_argument("joint_probability: arguments must be rank-1 projectors");
    }
    const double p = std::real((rho.matrix() * kron(proj_r, proj_l)).trace());
    return std::clamp(p, 0.0, 1.0);
}

double marginal_probability_r(const DensityMatrix& rho, const JonesMatrix& proj_r)
{
    return std::clamp(std::real((rho.matrix() * kron(proj_r, JonesMatrix::Identity())).trace()), 0.0, 1.0);
}

double marginal_probability_l(const DensityMatrix& rho, const JonesMatrix& proj_l)
{
    return std::clamp(std::real((rho.matrix() * kron(JonesMatrix::Identity(), proj_l)).trace()), 0.0, 1.0);
}

void NoiseModel::validate() const
{
    require_fraction(visibility_mix, "noise visibility_mix");
    require_fraction(efficiency_r, "noise efficiency_r");
    require_fraction(efficiency_l, "noise efficiency_l");
    if (!(accidental_rate_hz >= 0.0) || !(dark_rate_hz >= 0.0)) {
        throw std::invalid_argument("noise rates must be non-negative");
    }
}

DensityMatrix NoiseModel::apply(const DensityMatrix& rho) const
{
    validate();
    if (visibility_mix == 1.0) {
        return rho;
    }
    return DensityMatrix(visibility_mix * rho.matrix() + (1.0 - visibility_mix) * Matrix4c::Identity() / 4.0);
}

TwoQubitKet named_target(const std::string& name)
{
    const double r = 1.0 / std::sqrt(2.0);
    if (name == "psi-minus") return singlet();
    if (name == "psi-plus") return eq1_state(0.0);
    if (name == "phi-plus") return TwoQubitKet(r, 0.0, 0.0, r);
    if (name == "phi-minus") return TwoQubitKet(r, 0.0, 0.0, -r);
    if (name.rfind("eq1:", 0) == 0) {
        try {
            return eq1_state(std::stod(name.substr(4)) * std::numbers::pi / 180.0);
        } catch (const std::logic_error&) {
        }
    }
    throw std::invalid_argument("unknown target state '" + name + "'");
}

nlohmann::json to_json(const DensityMatrix& rho)
{
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 4; ++c) {
            row.push_back({rho(r, c).real(), rho(r, c).imag()});
        }
        rows.push_back(row);
    }
    return {{"basis", two_qubit_basis}, {"ordering", "R(x)L, entries [re, im]"}, {"rho", rows}};
}

DensityMatrix density_matrix_from_json(const nlohmann::json& j)
{
    const auto& rows = j.at("rho");
    if (!rows.is_array() || rows.size() != 4) {
        throw DataError("density matrix JSON: 'rho' must be a 4x4 array");
    }
    Matrix4c m;
    for (int r = 0; r < 4; ++r) {
        if (rows[r].size() != 4) {
            throw DataError("density matrix JSON: row " + std::to_string(r) + " must have 4 entries");
        }
        for (int c = 0; c < 4; ++c) {
            m(r, c) = complex(rows[r][c].at(0).get<double>(), rows[r][c].at(1).get<double>());
        }
    }
    return DensityMatrix(m);
}

}  // namespace bspdc
