#pragma once

// Jones calculus for the waveplates, PBS ports and analysis stacks.
//
// Basis: {H, V} with H along the crystal y axis and V along z. Angles are
// fast-axis angles measured from H, in radians. Global phases are dropped
// throughout; compare states with same_ray() rather than element-wise.
//
// QWP convention: qwp_matrix(0) = diag(1, i). A fast axis at theta is the
// rotation R(theta) diag(1, i) R(-theta). Under this convention
// qwp_matrix(pi/4) maps |H> to (|H> - i|V>)/sqrt(2), which is the |R> state
// used by the tomography settings.

#include <complex>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace bspdc {

using complex = std::complex<double>;
using JonesMatrix = Eigen::Matrix2cd;
using PolarizationState = Eigen::Vector2cd;

enum class Waveplate { half, quarter };

JonesMatrix hwp_matrix(double theta);
JonesMatrix qwp_matrix(double theta);
JonesMatrix waveplate_matrix(Waveplate kind, double theta);

/// Ordered waveplate stack. Elements are listed in the order light meets
/// them, so the composite is element[n-1] * ... * element[0].
class WaveplateStack {
public:
    struct Element {
        Waveplate kind;
        double angle;
    };

    WaveplateStack() = default;
    explicit WaveplateStack(std::vector<Element> elements);

    WaveplateStack& then(Waveplate kind, double angle);
    JonesMatrix matrix() const;
    const std::vector<Element>& elements() const { return elements_; }

private:
    std::vector<Element> elements_;
};

struct PhaseSandwich {
    JonesMatrix matrix;
    /// arg(M_VV / M_HH) wrapped into [0, 2pi).
    double relative_phase;
};

/// QWP(45 deg) . HWP(theta) . QWP(45 deg): a pure relative-phase element.
PhaseSandwich phase_sandwich(double theta_hwp);

enum class Basis { H, V, D, A, R, L };

PolarizationState basis_state(Basis label);
Basis parse_basis(std::string_view label);
std::string_view to_string(Basis label);

/// QWP/HWP angles placed before a PBS transmitting H that select a state.
struct AnalyzerAngles {
    double qwp;
    double hwp;
};

/// Fixed convention table: which (qwp, hwp) pair realises each label.
AnalyzerAngles analyzer_angles(Basis label);

/// State selected by an analysis stack: (qwp(q) . hwp(h))^dagger |H>.
PolarizationState analyzed_state(AnalyzerAngles angles);

JonesMatrix projector(Basis label);
JonesMatrix projector(AnalyzerAngles angles);
JonesMatrix projector(const PolarizationState& state);

/// PBS port matrices. Transmitted = |H><H|, reflected = |V><V|.
JonesMatrix pbs_transmitted();
JonesMatrix pbs_reflected();

/// |<a|b>| for normalised a, b; equals 1 iff the two rays coincide.
double overlap(const PolarizationState& a, const PolarizationState& b);
bool same_ray(const PolarizationState& a, const PolarizationState& b, double tol = 1e-12);

/// True when m equals c * target for some unit-modulus c.
bool equal_up_to_phase(const JonesMatrix& m, const JonesMatrix& target, double tol = 1e-12);

double unitarity_defect(const JonesMatrix& m);

double deg_to_rad(double deg);
double rad_to_deg(double rad);

}  // namespace bspdc
