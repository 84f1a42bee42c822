#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bspdc/app.hpp"
#include "bspdc/errors.hpp"
#include "bspdc/tomography.hpp"

using namespace bspdc;
using namespace bspdc::app;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("bspdc_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json read_json(const fs::path& p)
{
    return nlohmann::json::parse(slurp(p));
}

Context context(const std::string& name, const std::string& ini = "")
{
    Context ctx;
    ctx.config = parse_config(ini);
    ctx.out_dir = fresh_dir(name);
    return ctx;
}

std::vector<std::string> lines(const fs::path& p)
{
    std::vector<std::string> out;
    std::istringstream in(slurp(p));
    for (std::string l; std::getline(in, l);) {
        out.push_back(l);
    }
    return out;
}

}  // namespace

TEST_CASE("config parsing")
{
    const auto c = parse_config("[spectrum]\nlength_mm = 5\n; comment\n[state]\nmix = 0.5\n[run]\nseed = 9\n");
    CHECK(c.length_mm == 5.0);
    CHECK(c.mix == 0.5);
    CHECK(c.seed == 9);
    CHECK(c.period_um == 1.3);

    CHECK_THROWS_AS(parse_config("[spectrum]\nlenght_mm = 5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nowhere]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("top = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[spectrum]\nlength_mm = ten\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[spectrum]\nlength_mm = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[state]\nmix = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[tomography]\ntarget = bogus\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[spectrum]\nfilter_shape = gaussian\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("config hash tracks the effective configuration")
{
    const RunConfig a;
    CHECK(parse_config("").hash() == a.hash());
    CHECK(parse_config("[run]\nseed = 4\n").hash() == a.hash());
    CHECK(parse_config("[spectrum]\nlength_mm = 10.41\n").hash() == a.hash());
    CHECK(parse_config("[spectrum]\nlength_mm = 10.4\n").hash() != a.hash());
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("spectrum with defaults")
{
    const auto ctx = context("spectrum");
    const auto files = cmd_spectrum(ctx);
    CHECK(files.size() == 4);
    const auto s = read_json(ctx.out_dir / "spectrum_summary.json");
    CHECK(s.contains("signal_fwhm_pm"));
    CHECK(s.contains("signal_fwhm_ghz"));
    CHECK(s.at("signal_fwhm_pm").get<double>() == doctest::Approx(57.0).epsilon(0.01));
    CHECK(s.at("pump_nm").get<double>() == doctest::Approx(776.74).epsilon(1e-5));

    const auto rows = lines(ctx.out_dir / "signal_spectrum.csv");
    CHECK(rows[0].rfind("# config_hash=", 0) == 0);
    CHECK(rows[0].find("seed=1") != std::string::npos);
    CHECK(rows[1] == "detuning_hz,wavelength_nm,amplitude_re,amplitude_im,intensity,filtered_intensity");
    CHECK(rows.size() == 2 + 4001);
}

TEST_CASE("flat dispersion spectrum matches the closed form")
{
    const auto ctx = context("flat", "[spectrum]\ndispersion = flat\nlength_mm = 10\n");
    cmd_spectrum(ctx);
    const auto s = read_json(ctx.out_dir / "spectrum_summary.json");
    const double n = 1.8;
    const double expected_hz = 1.39156 * 299792458.0 / (std::numbers::pi * n * 10e-3);
    CHECK(s.at("signal_fwhm_ghz").get<double>() * 1e9 == doctest::Approx(expected_hz).epsilon(0.01));
    CHECK(s.at("pump_nm").get<double>() == doctest::Approx(n * 1300.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("dispersion sets from a file")
{
    const fs::path file = fs::path(BSPDC_SOURCE_DIR) / "data" / "dispersion.json";
    auto ctx = context("dispfile");
    ctx.config.dispersion_file = file.string();
    ctx.config.dispersion = "ktp_waveguide_matched";
    cmd_spectrum(ctx);
    CHECK(read_json(ctx.out_dir / "spectrum_summary.json").at("pump_nm").get<double>() ==
          doctest::Approx(776.74).epsilon(1e-5));

    ctx.config.dispersion = "missing";
    CHECK_THROWS_AS(cmd_spectrum(ctx), ConfigError);
    ctx.config.dispersion_file.clear();
    CHECK_THROWS_AS(cmd_spectrum(ctx), ConfigError);
}

TEST_CASE("outputs are byte-identical under a fixed seed")
{
    auto a = context("det_a");
    auto b = context("det_b");
    for (auto* ctx : {&a, &b}) {
        cmd_hom(*ctx);
        cmd_fringes(*ctx);
        cmd_bell(*ctx, std::nullopt);
    }
    for (const auto& entry : fs::directory_iterator(a.out_dir)) {
        CHECK(slurp(entry.path()) == slurp(b.out_dir / entry.path().filename()));
    }

    auto c = context("det_c", "[run]\nseed = 2\n");
    cmd_hom(c);
    CHECK(slurp(a.out_dir / "hom_trace.csv") != slurp(c.out_dir / "hom_trace.csv"));
}

TEST_CASE("json table format")
{
    auto ctx = context("json_format");
    ctx.format = Format::json;
    const auto files = cmd_hom(ctx);
    CHECK(files[0].extension() == ".json");
    const auto t = read_json(ctx.out_dir / "hom_trace.json");
    CHECK(t.at("rows").size() == 241);
    CHECK(t.at("rows")[0].contains("delay_ps"));
}

TEST_CASE("hom command")
{
    const auto ideal = context("hom_ideal", "[hom]\nindistinguishability = 1\naccidental_counts = 0\n");
    cmd_hom(ideal);
    const auto s = read_json(ideal.out_dir / "hom_summary.json");
    CHECK(s.at("probability_visibility").get<double>() == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(s.at("expected_counts_fit").at("raw_visibility").get<double>() == doctest::Approx(1.0).epsilon(1e-3));

    const auto partial = context("hom_partial", "[hom]\nindistinguishability = 0.901\naccidental_counts = 0\n");
    cmd_hom(partial);
    const auto p = read_json(partial.out_dir / "hom_summary.json");
    CHECK(std::abs(p.at("probability_visibility").get<double>() - 0.901) < 0.005);

    const auto defaults = context("hom_default");
    cmd_hom(defaults);
    const auto d = read_json(defaults.out_dir / "hom_summary.json");
    CHECK(std::abs(d.at("expected_counts_fit").at("raw_visibility").get<double>() - 0.901) < 0.005);
    CHECK(std::abs(d.at("expected_counts_fit").at("corrected_visibility").get<double>() - 0.971) < 0.005);
    CHECK(d.at("reference_base_width_ps").get<double>() == 155.0);
    CHECK(lines(defaults.out_dir / "hom_trace.csv").size() == 2 + 241);
}

TEST_CASE("fringes command")
{
    const auto ideal = context("fringes_ideal", "[state]\nmix = 1\n[fringes]\npoints = 25\n");
    const auto files = cmd_fringes(ideal);
    CHECK(files.size() == 5);
    const auto s = read_json(ideal.out_dir / "fringes_summary.json");
    for (const char* b : {"H", "V", "D", "A"}) {
        const auto& fit = s.at("fits").at(b);
        CHECK(fit.at("visibility").get<double>() >= 1.0 - 3.0 * fit.at("visibility_error").get<double>() - 1e-3);
        CHECK(lines(ideal.out_dir / (std::string("fringe_") + b + ".csv")).size() == 2 + 25);
    }

    const auto werner = context("fringes_werner", "[state]\nmix = 0.97\n[source]\npair_rate_hz = 2000\n");
    cmd_fringes(werner);
    const auto w = read_json(werner.out_dir / "fringes_summary.json");
    for (const char* b : {"H", "V", "D", "A"}) {
        const auto& fit = w.at("fits").at(b);
        CHECK(std::abs(fit.at("visibility").get<double>() - 0.97) <= 3.0 * fit.at("visibility_error").get<double>());
    }
}

TEST_CASE("tomography command")
{
    auto ctx = context("tomo");
    const auto settings = build_settings();
    const auto expected = expected_tomography_counts(DensityMatrix::pure(singlet()), 1e6, settings);
    std::vector<CountsRecord> records;
    for (std::size_t i = 0; i < settings.size(); ++i) {
        CountsRecord r;
        r.setting = settings.settings()[i];
        r.coincidences = std::llround(expected[i]);
        records.push_back(r);
    }
    const fs::path counts = ctx.out_dir / "singlet.jsonl";
    write_counts_file(counts.string(), records);
    cmd_tomography(ctx, counts, std::nullopt);
    const auto r = read_json(ctx.out_dir / "tomography_result.json");
    CHECK(r.at("fidelity").get<double>() >= 0.999);
    CHECK(r.at("rho_real").size() == 4);
    CHECK(lines(ctx.out_dir / "tomography_bars.csv").size() == 2 + 16);

    cmd_tomography(ctx, counts, std::string("phi-plus"));
    CHECK(read_json(ctx.out_dir / "tomography_result.json").at("fidelity").get<double>() < 0.01);
    CHECK_THROWS_AS(cmd_tomography(ctx, counts, std::string("nope")), ConfigError);

    {
        std::ofstream bad(ctx.out_dir / "bad.jsonl");
        bad << to_json(records[0]).dump() << "\n{not json\n";
    }
    try {
        cmd_tomography(ctx, ctx.out_dir / "bad.jsonl", std::nullopt);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    auto werner = context("tomo_werner");
    cmd_tomography(werner, std::nullopt, std::nullopt);
    CHECK(fs::exists(werner.out_dir / "tomography_counts.jsonl"));
    const auto w = read_json(werner.out_dir / "tomography_result.json");
    CHECK(std::abs(w.at("fidelity").get<double>() - 0.957) < 0.03);
    CHECK(w.at("fidelity_std").get<double>() > 0.0);
}

TEST_CASE("bell command")
{
    const auto ideal = context("bell_ideal", "[state]\nmix = 1\n[source]\npair_rate_hz = 1e6\nduration_s = 1\n");
    cmd_bell(ideal, std::nullopt);
    const auto s = read_json(ideal.out_dir / "bell_result.json");
    CHECK(std::abs(s.at("S").get<double>() - 2.0 * std::numbers::sqrt2) < 0.02);

    const auto werner = context("bell_werner", "[state]\nmix = 0.9617\n");
    cmd_bell(werner, std::nullopt);
    const auto w = read_json(werner.out_dir / "bell_result.json");
    CHECK(w.at("predicted_S").get<double>() == doctest::Approx(2.720).epsilon(1e-3));
    CHECK(std::abs(w.at("S").get<double>() - 2.720) < 3.0 * w.at("S_std").get<double>());

    const auto again = context("bell_reread");
    const auto records = read_counts_file((werner.out_dir / "bell_counts.jsonl").string());
    cmd_bell(again, werner.out_dir / "bell_counts.jsonl");
    CHECK(read_json(again.out_dir / "bell_result.json").at("S") == w.at("S"));

    const fs::path short_file = again.out_dir / "short.jsonl";
    write_counts_file(short_file.string(), std::span(records).first(15));
    CHECK_THROWS_AS(cmd_bell(again, short_file), DataError);
}

TEST_CASE("reproduce table")
{
    const auto rows = reproduce_rows(1);
    auto has = [&](const std::string& value) {
        return std::any_of(rows.begin(), rows.end(), [&](const ReproduceRow& r) { return r.reference.find(value) == 0; });
    };
    CHECK(has("7.1"));
    CHECK(has("2.720"));
    CHECK(has("95.71%"));
    CHECK(has("97.1%"));
    for (const auto& r : rows) {
        INFO(r.quantity);
        CHECK(r.verdict != "FAIL");
    }

    const auto a = context("repro_a");
    const auto b = context("repro_b");
    cmd_reproduce(a);
    cmd_reproduce(b);
    CHECK(slurp(a.out_dir / "reproduce.csv") == slurp(b.out_dir / "reproduce.csv"));
}
