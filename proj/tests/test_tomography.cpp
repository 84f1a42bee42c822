#include "doctest.h"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "bspdc/errors.hpp"
#include "bspdc/random.hpp"
#include "bspdc/tomography.hpp"

using namespace bspdc;

namespace {

const complex I{0.0, 1.0};

double max_abs(const Matrix4c& m)
{
    return m.cwiseAbs().maxCoeff();
}

double optimal_ll(const Matrix4c& rho, std::span<const double> counts, const TomographySettings& settings)
{
    double p_total = 0.0;
    for (const auto& op : settings.operators()) {
        p_total += std::real((rho * op).trace());
    }
    const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
    return poisson_log_likelihood(rho, n / p_total, counts, settings);
}

}  // namespace

TEST_CASE("settings are informationally complete")
{
    const auto s = build_settings();
    CHECK(s.size() == 16);
    CHECK(s.gram_rank() == 16);
    CHECK(s.normalization_subset().size() == 4);

    Matrix4c hh = Matrix4c::Zero();
    hh(0, 0) = 1.0;
    CHECK(max_abs(s.operators()[0] - hh) < 1e-12);
    CHECK(s.settings()[0].label == "HH");

    const PolarizationState r = PolarizationState(1.0, -I) / std::sqrt(2.0);
    TwoQubitKet rr;
    rr << r(0) * r(0), r(0) * r(1), r(1) * r(0), r(1) * r(1);
    CHECK(s.settings()[15].label == "RR");
    CHECK(max_abs(s.operators()[15] - rr * rr.adjoint()) < 1e-12);

    CHECK_THROWS_AS(TomographySettings({Basis::H, Basis::V, Basis::D, Basis::A}), std::invalid_argument);
}

TEST_CASE("records are matched to settings by waveplate angles")
{
    const auto s = build_settings();
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s.match(s.settings()[i]).value() == i);
    }
    MeasurementSetting odd{{0.0, 0.3}, {0.0, 0.0}, ""};
    CHECK_FALSE(s.match(odd).has_value());

    const auto records = simulate_settings(DensityMatrix::pure(singlet()), s.settings(), CountsModel{}, 1);
    std::vector<CountsRecord> shuffled(records.rbegin(), records.rend());
    const auto a = counts_by_setting(records, s);
    const auto b = counts_by_setting(shuffled, s);
    CHECK(a == b);

    std::vector<CountsRecord> missing(records.begin(), records.end() - 1);
    CHECK_THROWS_AS(counts_by_setting(missing, s), DataError);
    std::vector<CountsRecord> duplicate = records;
    duplicate.back() = duplicate.front();
    CHECK_THROWS_AS(counts_by_setting(duplicate, s), DataError);
}

TEST_CASE("linear inversion of exact counts")
{
    const auto s = build_settings();
    const auto mixed = DensityMatrix::maximally_mixed();
    CHECK(max_abs(linear_inversion(expected_tomography_counts(mixed, 1e4, s), s) - mixed.matrix()) < 1e-10);

    const auto psi = DensityMatrix::pure(singlet());
    CHECK(max_abs(linear_inversion(expected_tomography_counts(psi, 1e4, s), s) - psi.matrix()) < 1e-10);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Matrix4c a;
    for (int i = 0; i < 16; ++i) {
        a(i / 4, i % 4) = complex(g(rng), g(rng));
    }
    const DensityMatrix random(a * a.adjoint() / (a * a.adjoint()).trace());
    CHECK(max_abs(linear_inversion(expected_tomography_counts(random, 3e3, s), s) - random.matrix()) < 1e-10);

    CHECK_THROWS_AS(linear_inversion(std::vector<double>(16, 0.0), s), DataError);
    CHECK_THROWS_AS(linear_inversion(std::vector<double>(15, 1.0), s), DataError);
}

TEST_CASE("noisy linear inversion can be unphysical")
{
    const auto s = build_settings();
    const auto psi = DensityMatrix::pure(singlet());
    bool negative = false;
    for (std::uint64_t seed = 0; seed < 20 && !negative; ++seed) {
        const auto counts = sample_tomography_counts(psi, 1000.0, s, seed);
        const auto report = check_physical(linear_inversion(counts, s));
        negative = report.min_eigenvalue < 0.0;
    }
    CHECK(negative);
}

TEST_CASE("parameterization round trip")
{
    const auto rho = werner_state(eq1_state(0.6), 0.7).matrix();
    const auto t = parameters_from_density(rho);
    CHECK(t.size() == 16);
    const Matrix4c back = density_from_parameters(t);
    CHECK(max_abs(back - (0.999 * rho + 0.001 * Matrix4c::Identity() / 4.0)) < 1e-12);
    const Matrix4c tm = t_matrix_from_parameters(t);
    for (int r = 0; r < 4; ++r) {
        for (int c = r + 1; c < 4; ++c) {
            CHECK(tm(r, c) == complex(0.0, 0.0));
        }
    }
}

TEST_CASE("analytic likelihood gradient matches finite differences")
{
    const auto s = build_settings();
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> t(16);
        for (auto& x : t) {
            x = g(rng);
        }
        const auto counts = sample_tomography_counts(werner_state(singlet(), 0.8), 500.0, s, trial);
        std::vector<double> grad;
        profiled_log_likelihood(t, counts, s, &grad);
        for (int k = 0; k < 16; ++k) {
            const double h = 1e-6;
            auto tp = t;
            auto tm = t;
            tp[k] += h;
            tm[k] -= h;
            const double fd =
                (profiled_log_likelihood(tp, counts, s) - profiled_log_likelihood(tm, counts, s)) / (2.0 * h);
            CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("MLE recovers a pure singlet from exact counts")
{
    const auto s = build_settings();
    const auto counts = expected_tomography_counts(DensityMatrix::pure(singlet()), 1e4, s);
    const auto r = mle_reconstruct(counts, s, singlet());
    REQUIRE(r.fidelity.has_value());
    CHECK(*r.fidelity >= 0.9999);
    CHECK(r.rho.min_eigenvalue() >= -1e-12);
    CHECK(r.normalization == doctest::Approx(1e4).epsilon(1e-3));
}

TEST_CASE("MLE of a Werner state over seeds")
{
    const auto s = build_settings();
    const auto truth = werner_state(singlet(), 0.943);
    double mean = 0.0;
    const int seeds = 30;
    for (int k = 0; k < seeds; ++k) {
        const auto counts = sample_tomography_counts(truth, 1e4, s, child_seed(100, k));
        const auto r = mle_reconstruct(counts, s, singlet());
        CHECK(r.converged);
        CHECK(r.rho.min_eigenvalue() >= -1e-12);
        CHECK(std::abs(r.rho.matrix().trace() - 1.0) < 1e-12);
        const double ll_linear = optimal_ll(project_to_physical(linear_inversion(counts, s)).matrix(), counts, s);
        CHECK(r.log_likelihood >= ll_linear - 1e-9 * std::abs(ll_linear));
        mean += *r.fidelity / seeds;
    }
    CHECK(std::abs(mean - 0.95725) < 0.01);
}

TEST_CASE("maximally mixed counts give a low-purity estimate")
{
    const auto s = build_settings();
    const auto counts = sample_tomography_counts(DensityMatrix::maximally_mixed(), 1e5, s, 8);
    const auto r = mle_reconstruct(counts, s);
    CHECK(purity(r.rho) <= 0.27);
    CHECK_FALSE(r.fidelity.has_value());
}

TEST_CASE("uniform count scaling leaves the estimate unchanged")
{
    const auto s = build_settings();
    const auto counts = sample_tomography_counts(werner_state(eq1_state(1.0), 0.9), 2e3, s, 12);
    std::vector<double> scaled;
    for (const double c : counts) {
        scaled.push_back(10.0 * c);
    }
    const auto a = mle_reconstruct(counts, s);
    const auto b = mle_reconstruct(scaled, s);
    CHECK(max_abs(a.rho.matrix() - b.rho.matrix()) < 1e-5);
    CHECK(b.normalization == doctest::Approx(10.0 * a.normalization).epsilon(1e-5));
}

TEST_CASE("fidelity to the truth improves with counts")
{
    const auto s = build_settings();
    const auto truth = werner_state(singlet(), 0.9);
    const TwoQubitKet target = singlet();
    std::vector<double> error;
    for (const double n : {1e2, 1e3, 1e4, 1e5}) {
        double e = 0.0;
        for (int k = 0; k < 10; ++k) {
            const auto r = mle_reconstruct(sample_tomography_counts(truth, n, s, child_seed(7, k)), s, target);
            e += std::abs(*r.fidelity - fidelity(truth, target)) / 10.0;
        }
        error.push_back(e);
    }
    for (std::size_t i = 1; i < error.size(); ++i) {
        CHECK(error[i] < error[i - 1]);
    }
}

TEST_CASE("all-zero counts are rejected")
{
    const auto s = build_settings();
    CHECK_THROWS_AS(mle_reconstruct(std::vector<double>(16, 0.0), s), DataError);
}

TEST_CASE("Poisson error bars")
{
    const auto s = build_settings();
    const auto truth = werner_state(singlet(), 0.943);

    const auto huge = expected_tomography_counts(truth, 1e8, s);
    const auto tight = poisson_error_bars(huge, s, singlet(), 50, 1);
    CHECK(tight.fidelity_std <= 1e-3);
    CHECK(tight.samples == 50);

    const auto counts = sample_tomography_counts(truth, 1e4, s, 3);
    const auto bars = poisson_error_bars(counts, s, singlet(), 100, 5);
    CHECK(bars.fidelity_std > 0.002);
    CHECK(bars.fidelity_std < 0.02);
    CHECK(bars.failures == 0);
    CHECK((bars.real_std.array() >= 0.0).all());

    const auto again = poisson_error_bars(counts, s, singlet(), 100, 5);
    CHECK(again.fidelity_std == bars.fidelity_std);

    const auto doubled = poisson_error_bars(sample_tomography_counts(truth, 2e4, s, 3), s, singlet(), 100, 5);
    CHECK(bars.fidelity_std / doubled.fidelity_std == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));

    CHECK_THROWS_AS(poisson_error_bars(counts, s, singlet(), 10, 5), std::invalid_argument);
}
