// bspdc: simulate and analyze a counterpropagating SPDC polarization-entangled source.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "bspdc/app.hpp"
#include "bspdc/errors.hpp"

namespace app = bspdc::app;

int main(int argc, char** argv)
{
    CLI::App cli{"Counterpropagating SPDC source simulator"};
    cli.require_subcommand(1);
    cli.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::string format = "csv";
    cli.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    cli.add_option("--seed", seed, "master RNG seed (overrides [run] seed)");
    cli.add_option("--out", out_dir, "output directory");
    cli.add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));

    auto* spectrum = cli.add_subcommand("spectrum", "SFG tuning curve and signal/idler spectra");
    auto* hom = cli.add_subcommand("hom", "Hong-Ou-Mandel dip trace and fit");
    auto* fringes = cli.add_subcommand("fringes", "polarization correlation fringes in H/V/D/A");
    auto* tomography = cli.add_subcommand("tomography", "maximum-likelihood state tomography");
    auto* bell = cli.add_subcommand("bell", "CHSH test");
    auto* reproduce = cli.add_subcommand("reproduce", "compare headline numbers against reference values");

    std::optional<std::string> tomo_counts;
    std::optional<std::string> target;
    tomography->add_option("--counts", tomo_counts, "counts JSONL file (simulated when omitted)");
    tomography->add_option("--target", target, "target state: psi-minus, psi-plus, phi-minus, phi-plus");
    std::optional<std::string> bell_counts;
    bell->add_option("--counts", bell_counts, "counts JSONL file (simulated when omitted)");

    try {
        cli.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return cli.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return cli.exit(e);
    } catch (const CLI::ParseError& e) {
        cli.exit(e);
        return 2;
    }

    try {
        app::Context ctx;
        ctx.config = config_path.empty() ? app::RunConfig{} : app::load_config(config_path);
        if (seed) {
            ctx.config.seed = *seed;
        }
        ctx.config.validate();
        ctx.out_dir = out_dir;
        ctx.format = format == "json" ? app::Format::json : app::Format::csv;
        std::error_code ec;
        std::filesystem::create_directories(ctx.out_dir, ec);
        if (ec) {
            throw bspdc::ConfigError("cannot create output directory '" + out_dir + "': " + ec.message());
        }

        auto as_path = [](const std::optional<std::string>& s) -> std::optional<std::filesystem::path> {
            if (s) {
                return std::filesystem::path(*s);
            }
            return std::nullopt;
        };

        app::Files files;
        if (*spectrum) {
            files = app::cmd_spectrum(ctx);
        } else if (*hom) {
            files = app::cmd_hom(ctx);
        } else if (*fringes) {
            files = app::cmd_fringes(ctx);
        } else if (*tomography) {
            files = app::cmd_tomography(ctx, as_path(tomo_counts), target);
        } else if (*bell) {
            files = app::cmd_bell(ctx, as_path(bell_counts));
        } else if (*reproduce) {
            try {
                files = app::cmd_reproduce(ctx);
            } catch (const bspdc::NumericalError&) {
                for (const auto& r : app::reproduce_rows(ctx.config.seed)) {
                    if (r.verdict == "FAIL") {
                        std::cerr << "FAIL " << r.quantity << ": reference " << r.reference << ", computed " << r.computed
                                  << " (" << r.tolerance << ")\n";
                    }
                }
                throw;
            }
        }
        for (const auto& f : files) {
            std::cout << f.string() << '\n';
        }
    } catch (const bspdc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const bspdc::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const bspdc::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
