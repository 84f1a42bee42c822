#include "bspdc/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "bspdc/errors.hpp"
#include "bspdc/parallel.hpp"
#include "bspdc/random.hpp"

namespace bspdc {

namespace {

constexpr double mu_floor = 1e-12;
constexpr int parameter_count = 16;

constexpr std::array<std::pair<int, int>, 6> off_diagonal{{{1, 0}, {2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}}};

std::array<JonesMatrix, 4> paulis()
{
    const complex i{0.0, 1.0};
    JonesMatrix id = JonesMatrix::Identity();
    JonesMatrix x;
    x << 0.0, 1.0, 1.0, 0.0;
    JonesMatrix y;
    y << 0.0, -i, i, 0.0;
    JonesMatrix z;
    z << 1.0, 0.0, 0.0, -1.0;
    return {id, x, y, z};
}

// Hermitian operator basis sigma_a (x) sigma_b / 4, a, b in {I, X, Y, Z}.
const std::array<Matrix4c, 16>& hermitian_basis()
{
    static const std::array<Matrix4c, 16> basis = [] {
        std::array<Matrix4c, 16> out;
        const auto p = paulis();
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
                out[4 * a + b] = kron(p[a], p[b]) / 4.0;
            }
        }
        return out;
    }();
    return basis;
}

double total(std::span<const double> counts)
{
    return std::accumulate(counts.begin(), counts.end(), 0.0);
}

void require_counts(std::span<const double> counts, const TomographySettings& settings)
{
    if (counts.size() != settings.size()) {
        throw DataError("tomography needs exactly " + std::to_string(settings.size()) + " counts, got " +
                        std::to_string(counts.size()));
    }
    for (const double n : counts) {
        if (!(n >= 0.0) || !std::isfinite(n)) {
            throw DataError("tomography counts must be finite and non-negative");
        }
    }
    if (!(total(counts) > 0.0)) {
        throw DataError("tomography counts are all zero");
    }
}

std::vector<double> probabilities(const Matrix4c& rho, const TomographySettings& settings)
{
    std::vector<double> p(settings.size());
    for (std::size_t v = 0; v < settings.size(); ++v) {
        p[v] = std::real((rho * settings.operators()[v]).trace());
    }
    return p;
}

struct Objective {
    std::span<const double> counts;
    const TomographySettings& settings;
    double scale;

    // Minimised: -log L / scale + (Tr T^dagger T - 1)^2. The penalty only
    // fixes the scale of T, which rho does not depend on.
    double operator()(const Eigen::VectorXd& t, Eigen::VectorXd& grad) const
    {
        std::vector<double> g(parameter_count);
        const std::span<const double> params(t.data(), parameter_count);
        const double ll = profiled_log_likelihood(params, counts, settings, &g);
        double a = 0.0;
        for (int k = 0; k < parameter_count; ++k) {
            a += t[k] * t[k];
        }
        grad.resize(parameter_count);
        for (int k = 0; k < parameter_count; ++k) {
            grad[k] = -g[k] / scale + 4.0 * (a - 1.0) * t[k];
        }
        return -ll / scale + (a - 1.0) * (a - 1.0);
    }
};

struct BfgsOutcome {
    Eigen::VectorXd x;
    double value;
    int iterations;
    bool converged;
};

BfgsOutcome bfgs(const Objective& f, Eigen::VectorXd x, const MleOptions& options)
{
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g;
    double fx = f(x, g);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (g.norm() < options.gradient_tolerance) {
            return {x, fx, iter, true};
        }
        Eigen::VectorXd dir = -h * g;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            h.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
        }

        double step = 1.0;
        Eigen::VectorXd x_new;
        Eigen::VectorXd g_new;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * dir;
            f_new = f(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        const Eigen::VectorXd s = x_new - x;
        if (!accepted || s.norm() < options.step_tolerance) {
            // No further progress is possible at double precision.
            const bool done = s.norm() < options.step_tolerance || !accepted;
            if (accepted && f_new < fx) {
                x = x_new;
                fx = f_new;
            }
            return {x, fx, iter + 1, done};
        }
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-16 * s.norm() * y.norm()) {
            if (!scaled) {
                h *= sy / y.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
            h = (id - rho * s * y.transpose()) * h * (id - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    return {x, fx, options.max_iterations, g.norm() < options.gradient_tolerance};
}

}  // namespace

TomographySettings::TomographySettings(std::vector<Basis> per_arm)
{
    for (const Basis r : per_arm) {
        for (const Basis l : per_arm) {
            settings_.push_back(MeasurementSetting::from_labels(r, l));
            operators_.push_back(kron(projector(r), projector(l)));
            const bool r_hv = r == Basis::H || r == Basis::V;
            const bool l_hv = l == Basis::H || l == Basis::V;
            if (r_hv && l_hv) {
                hv_subset_.push_back(settings_.size() - 1);
            }
        }
    }
    if (gram_rank() < 16) {
        throw std::invalid_argument("tomography settings are not informationally complete");
    }
}

int TomographySettings::gram_rank() const
{
    const std::size_t n = operators_.size();
    Eigen::MatrixXd gram(n, n);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            gram(a, b) = std::real((operators_[a] * operators_[b]).trace());
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    lu.setThreshold(1e-10);
    return static_cast<int>(lu.rank());
}

std::optional<std::size_t> TomographySettings::match(const MeasurementSetting& setting, double tol) const
{
    const JonesMatrix pr = setting.projector_r();
    const JonesMatrix pl = setting.projector_l();
    for (std::size_t v = 0; v < settings_.size(); ++v) {
        if ((settings_[v].projector_r() - pr).cwiseAbs().maxCoeff() <= tol &&
            (settings_[v].projector_l() - pl).cwiseAbs().maxCoeff() <= tol) {
            return v;
        }
    }
    return std::nullopt;
}

TomographySettings build_settings()
{
    return TomographySettings();
}

std::vector<double> counts_by_setting(std::span<const CountsRecord> records, const TomographySettings& settings)
{
    if (records.size() != settings.size()) {
        throw DataError("tomography needs " + std::to_string(settings.size()) + " records, got " +
                        std::to_string(records.size()));
    }
    std::vector<double> counts(settings.size(), -1.0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].validate();
        const auto v = settings.match(records[i].setting);
        if (!v) {
            throw DataError("record " + std::to_string(i + 1) + " does not match any tomography setting");
        }
        if (counts[*v] >= 0.0) {
            throw DataError("record " + std::to_string(i + 1) + " duplicates setting " + settings.settings()[*v].label);
        }
        counts[*v] = static_cast<double>(records[i].coincidences);
    }
    return counts;
}

Matrix4c linear_inversion(std::span<const double> counts, const TomographySettings& settings)
{
    require_counts(counts, settings);
    const std::size_t m = settings.size();
    const auto& basis = hermitian_basis();
    Eigen::MatrixXd map(m, 16);
    for (std::size_t v = 0; v < m; ++v) {
        for (int j = 0; j < 16; ++j) {
            map(static_cast<Eigen::Index>(v), j) = std::real((basis[j] * settings.operators()[v]).trace());
        }
    }
    const Eigen::VectorXd n = Eigen::Map<const Eigen::VectorXd>(counts.data(), static_cast<Eigen::Index>(m));
    Eigen::VectorXd coeffs;
    if (m == 16) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(map);
        if (lu.rank() < 16) {
            throw NumericalError("linear_inversion: singular measurement map");
        }
        coeffs = lu.solve(n);
    } else {
        coeffs = map.colPivHouseholderQr().solve(n);
    }
    Matrix4c scaled = Matrix4c::Zero();
    for (int j = 0; j < 16; ++j) {
        scaled += coeffs[j] * basis[j];
    }

    double norm = 0.0;
    if (settings.normalization_subset().size() == 4) {
        for (const auto v : settings.normalization_subset()) {
            norm += counts[v];
        }
    } else {
        norm = std::real(scaled.trace());
    }
    if (!(norm > 0.0)) {
        throw DataError("linear_inversion: the complete-basis subset has zero counts");
    }
    Matrix4c rho = scaled / norm;
    rho = 0.5 * (rho + rho.adjoint());
    return rho / rho.trace();
}

Matrix4c linear_inversion(std::span<const CountsRecord> records, const TomographySettings& settings)
{
    const auto counts = counts_by_setting(records, settings);
    return linear_inversion(counts, settings);
}

double poisson_log_likelihood(const Matrix4c& rho, double normalization, std::span<const double> counts,
                              const TomographySettings& settings)
{
    const auto p = probabilities(rho, settings);
    double ll = 0.0;
    for (std::size_t v = 0; v < counts.size(); ++v) {
        const double mu = normalization * p[v];
        ll += counts[v] * std::log(std::max(mu, mu_floor)) - mu;
    }
    return ll;
}

Matrix4c t_matrix_from_parameters(std::span<const double> t)
{
    if (t.size() != parameter_count) {
        throw std::invalid_argument("T parameterisation needs 16 reals");
    }
    Matrix4c tm = Matrix4c::Zero();
    for (int i = 0; i < 4; ++i) {
        tm(i, i) = t[i];
    }
    for (std::size_t k = 0; k < off_diagonal.size(); ++k) {
        const auto [r, c] = off_diagonal[k];
        tm(r, c) = complex(t[4 + 2 * k], t[5 + 2 * k]);
    }
    return tm;
}

Matrix4c density_from_parameters(std::span<const double> t)
{
    const Matrix4c tm = t_matrix_from_parameters(t);
    const Matrix4c a = tm.adjoint() * tm;
    return a / std::real(a.trace());
}

std::vector<double> parameters_from_density(const Matrix4c& rho)
{
    // rho = T^dagger T with T lower triangular: Cholesky of the index-reversed
    // matrix gives rho = U U^dagger with U upper triangular, and T = U^dagger.
    Eigen::Matrix4cd reversal = Eigen::Matrix4cd::Zero();
    for (int i = 0; i < 4; ++i) {
        reversal(i, 3 - i) = 1.0;
    }
    const Matrix4c mixed = 0.999 * rho + 0.001 * Matrix4c::Identity() / 4.0;
    Eigen::LLT<Matrix4c> llt(reversal * mixed * reversal);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("parameters_from_density: matrix is not positive definite");
    }
    const Matrix4c lower = llt.matrixL();
    const Matrix4c t = (reversal * lower * reversal).adjoint();

    std::vector<double> params(parameter_count);
    for (int i = 0; i < 4; ++i) {
        params[i] = std::real(t(i, i));
    }
    for (std::size_t k = 0; k < off_diagonal.size(); ++k) {
        const auto [r, c] = off_diagonal[k];
        params[4 + 2 * k] = std::real(t(r, c));
        params[5 + 2 * k] = std::imag(t(r, c));
    }
    return params;
}

double profiled_log_likelihood(std::span<const double> t, std::span<const double> counts,
                               const TomographySettings& settings, std::vector<double>* gradient)
{
    const Matrix4c tm = t_matrix_from_parameters(t);
    const Matrix4c a = tm.adjoint() * tm;
    const double trace_a = std::real(a.trace());
    const Matrix4c rho = a / trace_a;
    const auto p = probabilities(rho, settings);
    const double n_total = total(counts);
    const double p_total = std::accumulate(p.begin(), p.end(), 0.0);
    const double normalization = n_total / p_total;

    double ll = 0.0;
    Matrix4c g = Matrix4c::Zero();
    for (std::size_t v = 0; v < counts.size(); ++v) {
        const double mu = normalization * p[v];
        ll += counts[v] * std::log(std::max(mu, mu_floor)) - mu;
        const double weight = mu > mu_floor ? counts[v] / mu - 1.0 : -1.0;
        g += (weight * normalization) * settings.operators()[v];
    }
    if (gradient) {
        const complex g_rho = (g * rho).trace();
        const Matrix4c g_centered = g - g_rho * Matrix4c::Identity();
        const Matrix4c m = g_centered * tm.adjoint();
        gradient->assign(parameter_count, 0.0);
        for (int i = 0; i < 4; ++i) {
            (*gradient)[i] = 2.0 * std::real(m(i, i)) / trace_a;
        }
        for (std::size_t k = 0; k < off_diagonal.size(); ++k) {
            const auto [r, c] = off_diagonal[k];
            (*gradient)[4 + 2 * k] = 2.0 * std::real(m(c, r)) / trace_a;
            (*gradient)[5 + 2 * k] = -2.0 * std::imag(m(c, r)) / trace_a;
        }
    }
    return ll;
}

TomographyResult mle_reconstruct(std::span<const double> counts, const TomographySettings& settings,
                                 const std::optional<TwoQubitKet>& target, const MleOptions& options)
{
    require_counts(counts, settings);
    const Matrix4c linear = linear_inversion(counts, settings);
    const Matrix4c start = project_to_physical(linear).matrix();
    const auto t0 = parameters_from_density(start);

    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(t0.data(), parameter_count);
    x /= x.norm();
    const Objective objective{counts, settings, std::max(1.0, total(counts))};
    const BfgsOutcome outcome = bfgs(objective, x, options);

    const std::span<const double> best(outcome.x.data(), parameter_count);
    Matrix4c rho = density_from_parameters(best);
    rho = 0.5 * (rho + rho.adjoint());
    rho /= rho.trace();

    TomographyResult result;
    result.rho = DensityMatrix(rho);
    const auto p = probabilities(rho, settings);
    result.normalization = total(counts) / std::accumulate(p.begin(), p.end(), 0.0);
    result.log_likelihood = poisson_log_likelihood(rho, result.normalization, counts, settings);
    result.iterations = outcome.iterations;
    result.converged = outcome.converged;
    if (target) {
        result.fidelity = fidelity(result.rho, *target);
    }
    return result;
}

TomographyResult mle_reconstruct(std::span<const CountsRecord> records, const TomographySettings& settings,
                                 const std::optional<TwoQubitKet>& target, const MleOptions& options)
{
    const auto counts = counts_by_setting(records, settings);
    return mle_reconstruct(counts, settings, target, options);
}

ErrorBars poisson_error_bars(std::span<const double> counts, const TomographySettings& settings,
                             const TwoQubitKet& target, int resamples, std::uint64_t seed, const MleOptions& options)
{
    require_counts(counts, settings);
    if (resamples < 50) {
        throw std::invalid_argument("poisson_error_bars: need at least 50 resamples");
    }

    struct Sample {
        bool ok = false;
        double fidelity = 0.0;
        Matrix4c rho = Matrix4c::Zero();
    };
    const std::vector<double> base(counts.begin(), counts.end());
    const auto samples = parallel_indexed(static_cast<std::size_t>(resamples), [&](std::size_t i) {
        Rng rng(child_seed(seed, i));
        std::vector<double> resampled(base.size());
        for (std::size_t v = 0; v < base.size(); ++v) {
            resampled[v] = static_cast<double>(poisson_sample(base[v], rng));
        }
        Sample s;
        try {
            const auto fit = mle_reconstruct(resampled, settings, target, options);
            s.ok = fit.converged;
            s.fidelity = fit.fidelity.value_or(0.0);
            s.rho = fit.rho.matrix();
        } catch (const std::exception&) {
            s.ok = false;
        }
        return s;
    });

    ErrorBars bars;
    std::vector<const Sample*> good;
    for (const auto& s : samples) {
        if (s.ok) {
            good.push_back(&s);
        } else {
            ++bars.failures;
        }
    }
    if (bars.failures * 10 > resamples) {
        throw NumericalError("poisson_error_bars: " + std::to_string(bars.failures) + " of " +
                             std::to_string(resamples) + " resampled fits failed");
    }
    bars.samples = static_cast<int>(good.size());
    const double n = static_cast<double>(good.size());

    double f_mean = 0.0;
    Matrix4c rho_mean = Matrix4c::Zero();
    for (const auto* s : good) {
        f_mean += s->fidelity;
        rho_mean += s->rho;
    }
    f_mean /= n;
    rho_mean /= n;
    double f_var = 0.0;
    Eigen::Matrix4d re_var = Eigen::Matrix4d::Zero();
    Eigen::Matrix4d im_var = Eigen::Matrix4d::Zero();
    for (const auto* s : good) {
        f_var += (s->fidelity - f_mean) * (s->fidelity - f_mean);
        const Matrix4c d = s->rho - rho_mean;
        re_var += d.real().cwiseAbs2();
        im_var += d.imag().cwiseAbs2();
    }
    bars.fidelity_std = std::sqrt(f_var / (n - 1.0));
    bars.real_std = (re_var / (n - 1.0)).cwiseSqrt();
    bars.imag_std = (im_var / (n - 1.0)).cwiseSqrt();
    return bars;
}

std::vector<double> expected_tomography_counts(const DensityMatrix& rho, double normalization,
                                               const TomographySettings& settings)
{
    auto p = probabilities(rho.matrix(), settings);
    for (auto& x : p) {
        x = std::max(0.0, x) * normalization;
    }
    return p;
}

std::vector<double> sample_tomography_counts(const DensityMatrix& rho, double normalization,
                                             const TomographySettings& settings, std::uint64_t seed)
{
    auto mu = expected_tomography_counts(rho, normalization, settings);
    for (std::size_t v = 0; v < mu.size(); ++v) {
        Rng rng(child_seed(seed, v));
        mu[v] = static_cast<double>(poisson_sample(mu[v], rng));
    }
    return mu;
}

}  // namespace bspdc
