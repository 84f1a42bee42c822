#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "bspdc/coincidence.hpp"
#include "bspdc/errors.hpp"
#include "bspdc/random.hpp"

using namespace bspdc;

namespace {

constexpr double pi = std::numbers::pi;

std::vector<double> hwp_grid(int n)
{
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) {
        g[i] = (pi / 2.0) * i / n;
    }
    return g;
}

CountsModel ideal_model(double pairs)
{
    CountsModel m;
    m.pair_rate_hz = pairs;
    m.duration_s = 1.0;
    return m;
}

}  // namespace

TEST_CASE("simulate_counts mean and zero cases")
{
    const auto rho = DensityMatrix::pure(singlet());
    const auto hh = MeasurementSetting::from_labels(Basis::H, Basis::H);
    const auto hv = MeasurementSetting::from_labels(Basis::H, Basis::V);
    CountsModel model = ideal_model(2000.0);
    CHECK(expected_coincidences(rho, hh, model) == 0.0);
    CHECK(simulate_counts(rho, hh, model, 1).coincidences == 0);
    CHECK(expected_coincidences(rho, hv, model) == doctest::Approx(1000.0).epsilon(1e-12));

    const int seeds = 10000;
    double sum = 0.0;
    double sum2 = 0.0;
    for (int s = 0; s < seeds; ++s) {
        const double c = static_cast<double>(simulate_counts(rho, hv, model, child_seed(42, s)).coincidences);
        sum += c;
        sum2 += c * c;
    }
    const double mean = sum / seeds;
    const double var = sum2 / seeds - mean * mean;
    CHECK(std::abs(mean - 1000.0) < 3.0 * std::sqrt(1000.0 / seeds));
    CHECK(var == doctest::Approx(1000.0).epsilon(0.05));
}

TEST_CASE("efficiencies and accidentals enter the mean")
{
    const auto rho = DensityMatrix::pure(singlet());
    CountsModel model = ideal_model(1e4);
    model.duration_s = 2.0;
    model.noise.efficiency_r = 0.5;
    model.noise.efficiency_l = 0.8;
    model.noise.accidental_rate_hz = 3.0;
    const auto hv = MeasurementSetting::from_labels(Basis::H, Basis::V);
    CHECK(expected_coincidences(rho, hv, model) == doctest::Approx(1e4 * 2.0 * 0.4 * 0.5 + 6.0).epsilon(1e-12));
}

TEST_CASE("complete product basis sums to the detected pair number")
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CountsModel model = ideal_model(12345.0);
    model.duration_s = 3.0;
    model.noise.efficiency_r = 0.7;
    model.noise.efficiency_l = 0.9;
    for (int trial = 0; trial < 20; ++trial) {
        const auto rho = werner_state(eq1_state(2.0 * pi * u(rng)), u(rng));
        double sum = 0.0;
        for (const Basis r : {Basis::H, Basis::V}) {
            for (const Basis l : {Basis::H, Basis::V}) {
                sum += expected_coincidences(rho, MeasurementSetting::from_labels(r, l), model);
            }
        }
        CHECK(std::abs(sum - 12345.0 * 3.0 * 0.63) < 1e-9 * sum);
    }
}

TEST_CASE("seeded simulation is reproducible and schedule independent")
{
    const auto rho = werner_state(singlet(), 0.9);
    const auto grid = hwp_grid(16);
    const CountsModel model = ideal_model(5000.0);
    const auto a = fringe_scan(rho, Basis::H, grid, model, 77);
    const auto b = fringe_scan(rho, Basis::H, grid, model, 77);
    REQUIRE(a.size() == grid.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].coincidences == b[i].coincidences);
        CHECK(a[i].singles_r == b[i].singles_r);
        const auto single = simulate_counts(rho, a[i].setting, model, child_seed(77, i));
        CHECK(single.coincidences == a[i].coincidences);
    }
    const auto c = fringe_scan(rho, Basis::H, grid, model, 78);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        differs = differs || a[i].coincidences != c[i].coincidences;
    }
    CHECK(differs);
}

TEST_CASE("singlet fringe with R fixed at H follows sin^2(2 theta)")
{
    const auto rho = DensityMatrix::pure(singlet());
    const CountsModel model = ideal_model(1000.0);
    for (int i = 0; i < 8; ++i) {
        const double theta = 0.1 + i * pi / 16.0;
        const MeasurementSetting s{analyzer_angles(Basis::H), {0.0, theta}, ""};
        const double expected = 1000.0 * joint_probability(rho, projector(Basis::H), projector(AnalyzerAngles{0.0, theta}));
        CHECK(expected_coincidences(rho, s, model) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(expected == doctest::Approx(500.0 * std::pow(std::sin(2.0 * theta), 2)).epsilon(1e-12));
    }
}

TEST_CASE("noiseless fringes: visibility one and a 22.5 degree shift for D")
{
    const auto rho = DensityMatrix::pure(singlet());
    const auto grid = hwp_grid(24);
    const CountsModel model = ideal_model(1000.0);
    auto expected_fringe = [&](Basis r) {
        std::vector<double> c;
        for (const double h : grid) {
            c.push_back(expected_coincidences(rho, {analyzer_angles(r), {0.0, h}, ""}, model));
        }
        return fit_fringe(grid, c);
    };
    const auto fh = expected_fringe(Basis::H);
    const auto fd = expected_fringe(Basis::D);
    CHECK(fh.visibility == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fd.visibility == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fh.period == doctest::Approx(pi / 2.0));
    // A 22.5 degree shift in HWP angle is a 90 degree shift of the 4-theta phase.
    CHECK(std::abs(std::remainder(fd.phase - fh.phase - pi / 2.0, 2.0 * pi)) < 1e-9);
}

TEST_CASE("Werner fringe visibility equals the mixing weight in every basis")
{
    const auto grid = hwp_grid(24);
    const CountsModel model = ideal_model(1e5);
    for (const double v : {0.966, 0.995, 0.8}) {
        const auto rho = werner_state(singlet(), v);
        for (const Basis r : {Basis::H, Basis::V, Basis::D, Basis::A}) {
            std::vector<double> c;
            for (const double h : grid) {
                c.push_back(expected_coincidences(rho, {analyzer_angles(r), {0.0, h}, ""}, model));
            }
            const auto f = fit_fringe(grid, c);
            CHECK(f.visibility == doctest::Approx(v).epsilon(1e-9));

            std::vector<double> scaled;
            for (const double x : c) {
                scaled.push_back(10.0 * x);
            }
            CHECK(fit_fringe(grid, scaled).visibility == doctest::Approx(f.visibility).epsilon(1e-12));

            // Sampled counts agree within the reported fit error.
            const auto sampled = fit_fringe(fringe_scan(rho, r, grid, model, 5));
            CHECK(std::abs(sampled.visibility - v) < 4.0 * sampled.visibility_error);
        }
    }
}

TEST_CASE("constructed 1260 / 22 fringe")
{
    const auto grid = hwp_grid(16);
    std::vector<double> c;
    for (const double h : grid) {
        c.push_back(641.0 + 619.0 * std::cos(4.0 * h - 0.3));
    }
    const auto f = fit_fringe(grid, c);
    CHECK(f.visibility == doctest::Approx((1260.0 - 22.0) / (1260.0 + 22.0)).epsilon(1e-12));
    CHECK(std::abs(f.visibility - 0.966) < 5e-4);
    CHECK(std::abs(f.phase - 0.3) < pi / 180.0);
}

TEST_CASE("fringe visibility error matches the spread over seeds")
{
    const auto grid = hwp_grid(16);
    const auto rho = werner_state(singlet(), 0.966);
    const CountsModel model = ideal_model(2520.0);
    std::vector<double> vis;
    double reported = 0.0;
    for (int s = 0; s < 400; ++s) {
        const auto f = fit_fringe(fringe_scan(rho, Basis::H, grid, model, child_seed(9, s)));
        vis.push_back(f.visibility);
        reported += f.visibility_error / 400.0;
    }
    double mean = 0.0;
    for (const double v : vis) {
        mean += v / vis.size();
    }
    double var = 0.0;
    for (const double v : vis) {
        var += (v - mean) * (v - mean) / (vis.size() - 1);
    }
    CHECK(reported == doctest::Approx(std::sqrt(var)).epsilon(0.2));
}

TEST_CASE("fit_fringe preconditions")
{
    CHECK_THROWS_AS(fit_fringe(std::vector<double>{0.0, 0.1, 0.2, 0.3}, std::vector<double>{1, 2, 3, 4}),
                    std::invalid_argument);
    CHECK_THROWS_AS(fit_fringe(std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4}, std::vector<double>{1, 2, 3, 4, 5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(fringe_scan(DensityMatrix::maximally_mixed(), Basis::R, hwp_grid(8), ideal_model(1.0), 0),
                    std::invalid_argument);
}

TEST_CASE("spectral brightness")
{
    CHECK(spectral_brightness(2.414e4, 7.1, 1.0) == doctest::Approx(3.4e3).epsilon(1e-12));
    CHECK(spectral_brightness(2.0 * 2.414e4, 7.1, 1.0) == doctest::Approx(6.8e3).epsilon(1e-12));
    CHECK(spectral_brightness(24.14, 7.1, 1.0, RateUnit::kilohertz) ==
          doctest::Approx(spectral_brightness(2.414e4, 7.1, 1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(spectral_brightness(1.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("subtract_accidentals")
{
    CountsRecord r;
    r.duration_s = 1.0;
    r.window_s = 1e-9;
    r.singles_r = 100000;
    r.singles_l = 100000;
    r.coincidences = 500;
    const auto a = subtract_accidentals(r);
    CHECK(a.accidentals == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(a.corrected == doctest::Approx(490.0).epsilon(1e-12));
    CHECK_FALSE(a.floored);

    r.coincidences = 4;
    const auto f = subtract_accidentals(r);
    CHECK(f.corrected == 0.0);
    CHECK(f.floored);

    r.singles_r = 0;
    r.coincidences = 17;
    CHECK(subtract_accidentals(r).corrected == 17.0);
}

TEST_CASE("counts file round trip")
{
    const auto rho = werner_state(singlet(), 0.9);
    std::vector<MeasurementSetting> settings{MeasurementSetting::from_labels(Basis::H, Basis::V),
                                             MeasurementSetting::from_labels(Basis::R, Basis::D)};
    const auto records = simulate_settings(rho, settings, ideal_model(1000.0), 3);
    std::stringstream ss;
    write_counts(ss, records);
    const auto back = read_counts(ss);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].coincidences == records[i].coincidences);
        CHECK(back[i].setting.label == records[i].setting.label);
        CHECK(std::abs(back[i].setting.r.qwp - records[i].setting.r.qwp) < 1e-12);
        CHECK(std::abs(back[i].setting.l.hwp - records[i].setting.l.hwp) < 1e-12);
    }
}

TEST_CASE("malformed counts lines name the line")
{
    const std::string good =
        R"({"qwp_r": 0, "hwp_r": 0, "qwp_l": 0, "hwp_l": 45, "coincidences": 10, "singles_r": 100, "singles_l": 100, "duration_s": 1, "window_s": 1e-9})";
    auto message = [](const std::string& text) {
        std::istringstream in(text);
        try {
            read_counts(in);
        } catch (const DataError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message(good + "\n" + good + "\n{not json\n").find("counts line 3") != std::string::npos);
    CHECK(message(good + "\n" + R"({"qwp_r": 0})").find("counts line 2") != std::string::npos);
    std::string negative = good;
    negative.replace(negative.find("\"coincidences\": 10"), 18, "\"coincidences\": -1");
    CHECK(message(negative).find("counts line 1") != std::string::npos);
    std::string extra = good;
    extra.insert(1, "\"bogus\": 1, ");
    CHECK(message(extra).find("bogus") != std::string::npos);
    std::string fractional = good;
    fractional.replace(fractional.find("\"coincidences\": 10"), 18, "\"coincidences\": 1.5");
    CHECK(message(fractional).find("counts line 1") != std::string::npos);
    CHECK(message("# comment\n\n" + good + "\n") == "no error");
}
