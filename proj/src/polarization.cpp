#include "bspdc/polarization.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bspdc {

namespace {

constexpr double pi = std::numbers::pi;
const complex I{0.0, 1.0};

void require_finite(double angle, const char* what)
{
    if (!std::isfinite(angle)) {
        throw std::invalid_argument(std::string(what) + ": angle must be finite");
    }
}

Eigen::Matrix2d rotation(double theta)
{
    Eigen::Matrix2d r;
    r << std::cos(theta), -std::sin(theta),
         std::sin(theta), std::cos(theta);
    return r;
}

}  // namespace

JonesMatrix hwp_matrix(double theta)
{
    const double c = std::cos(2.0 * theta);
    const double s = std::sin(2.0 * theta);
    JonesMatrix m;
    m << c, s,
         s, -c;
    return m;
}

JonesMatrix qwp_matrix(double theta)
{
    JonesMatrix retarder = JonesMatrix::Zero();
    retarder(0, 0) = 1.0;
    retarder(1, 1) = I;
    const JonesMatrix r = rotation(theta).cast<complex>();
    return r * retarder * r.transpose();
}

JonesMatrix waveplate_matrix(Waveplate kind, double theta)
{
    return kind == Waveplate::half ? hwp_matrix(theta) : qwp_matrix(theta);
}

WaveplateStack::WaveplateStack(std::vector<Element> elements) : elements_(std::move(elements)) {}

WaveplateStack& WaveplateStack::then(Waveplate kind, double angle)
{
    elements_.push_back({kind, angle});
    return *this;
}

JonesMatrix WaveplateStack::matrix() const
{
    JonesMatrix m = JonesMatrix::Identity();
    for (const auto& e : elements_) {
        require_finite(e.angle, "WaveplateStack");
        m = waveplate_matrix(e.kind, e.angle) * m;
    }
    return m;
}

PhaseSandwich phase_sandwich(double theta_hwp)
{
    require_finite(theta_hwp, "phase_sandwich");
    const JonesMatrix q = qwp_matrix(pi / 4.0);
    const JonesMatrix m = q * hwp_matrix(theta_hwp) * q;
    double phase = std::arg(m(1, 1) / m(0, 0));
    if (phase < 0.0) {
        phase += 2.0 * pi;
    }
    return {m, phase};
}

PolarizationState basis_state(Basis label)
{
    const double r = 1.0 / std::sqrt(2.0);
    switch (label) {
    case Basis::H: return PolarizationState(1.0, 0.0);
    case Basis::V: return PolarizationState(0.0, 1.0);
    case Basis::D: return PolarizationState(r, r);
    case Basis::A: return PolarizationState(r, -r);
    case Basis::R: return PolarizationState(r, -I * r);
    case Basis::L: return PolarizationState(r, I * r);
    }
    throw std::invalid_argument("basis_state: unknown label");
}

Basis parse_basis(std::string_view label)
{
    if (label == "H") return Basis::H;
    if (label == "V") return Basis::V;
    if (label == "D") return Basis::D;
    if (label == "A") return Basis::A;
    if (label == "R") return Basis::R;
    if (label == "L") return Basis::L;
    throw std::invalid_argument("unknown polarization label '" + std::string(label) + "'");
}

std::string_view to_string(Basis label)
{
    switch (label) {
    case Basis::H: return "H";
    case Basis::V: return "V";
    case Basis::D: return "D";
    case Basis::A: return "A";
    case Basis::R: return "R";
    case Basis::L: return "L";
    }
    return "?";
}

AnalyzerAngles analyzer_angles(Basis label)
{
    switch (label) {
    case Basis::H: return {0.0, 0.0};
    case Basis::V: return {0.0, pi / 4.0};
    case Basis::D: return {0.0, pi / 8.0};
    case Basis::A: return {0.0, -pi / 8.0};
    // hwp(0) = diag(1, -1) flips circular handedness, hence the +45 deg QWP.
    case Basis::R: return {pi / 4.0, 0.0};
    case Basis::L: return {-pi / 4.0, 0.0};
    }
    throw std::invalid_argument("analyzer_angles: unknown label");
}

PolarizationState analyzed_state(AnalyzerAngles angles)
{
    require_finite(angles.qwp, "projector");
    require_finite(angles.hwp, "projector");
    const JonesMatrix stack = qwp_matrix(angles.qwp) * hwp_matrix(angles.hwp);
    return stack.adjoint() * PolarizationState(1.0, 0.0);
}

JonesMatrix projector(const PolarizationState& state)
{
    const PolarizationState n = state.normalized();
    return n * n.adjoint();
}

JonesMatrix projector(Basis label)
{
    return projector(basis_state(label));
}

JonesMatrix projector(AnalyzerAngles angles)
{
    return projector(analyzed_state(angles));
}

JonesMatrix pbs_transmitted()
{
    return projector(Basis::H);
}

JonesMatrix pbs_reflected()
{
    return projector(Basis::V);
}

double overlap(const PolarizationState& a, const PolarizationState& b)
{
    return std::abs(a.dot(b));
}

bool same_ray(const PolarizationState& a, const PolarizationState& b, double tol)
{
    return std::abs(overlap(a.normalized(), b.normalized()) - 1.0) <= tol;
}

bool equal_up_to_phase(const JonesMatrix& m, const JonesMatrix& target, double tol)
{
    // Pick the phase from the largest target entry, then compare everything.
    Eigen::Index r = 0;
    Eigen::Index c = 0;
    target.cwiseAbs().maxCoeff(&r, &c);
    if (std::abs(m(r, c)) == 0.0) {
        return false;
    }
    const complex phase = (m(r, c) / target(r, c)) / std::abs(m(r, c) / target(r, c));
    return (m - phase * target).cwiseAbs().maxCoeff() <= tol;
}

double unitarity_defect(const JonesMatrix& m)
{
    return (m.adjoint() * m - JonesMatrix::Identity()).cwiseAbs().maxCoeff();
}

double deg_to_rad(double deg)
{
    return deg * pi / 180.0;
}

double rad_to_deg(double rad)
{
    return rad * 180.0 / pi;
}

}  // namespace bspdc
