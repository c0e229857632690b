#include "subdiff/config.hpp"
#include "subdiff/experiment.hpp"
#include "subdiff/io.hpp"
#include "subdiff/laplace.hpp"
#include "subdiff/manifest.hpp"
#include "subdiff/verify.hpp"
#include "subdiff/version.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>

namespace {

using namespace subdiff;

struct RunOptions {
    std::string preset;
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    bool print_config = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
    cmd->add_option("--preset", o.preset, "Run preset (see `subdiff presets`)");
    cmd->add_option("--config", o.config, "INI config file or a run manifest (.json)");
    cmd->add_option("--set", o.sets, "Override one key: section.key=value (repeatable)")->allow_extra_args(false);
    cmd->add_option("--out", o.out, "Output directory (default runs/<preset>)");
    cmd->add_option("--seed", o.seed, "Master seed; overrides training.seed");
    cmd->add_flag("--quiet", o.quiet, "No progress output");
    cmd->add_flag("--print-config", o.print_config, "Print the resolved config and exit");
}

RunConfig resolve(const RunOptions& o) {
    if (o.preset.empty() && o.config.empty()) throw ContractViolation("give --preset or --config");
    const ConfigEntries entries = o.config.empty() ? ConfigEntries{} : read_config_file(o.config);
    RunConfig c = resolve_config(o.preset, entries, o.sets);
    if (o.seed) c.seed = *o.seed;
    return c;
}

void print_metrics(const RunManifest& m, const std::string& dir) {
    for (const auto& [k, v] : m.metrics) std::cout << k << " = " << v << '\n';
    std::cout << "wrote " << m.files.size() << " files to " << dir << " (" << m.duration_seconds << " s)\n";
}

using Runner = std::function<RunManifest(const RunConfig&, const std::filesystem::path&, std::ostream*)>;

int run_command(const RunOptions& o, const Runner& runner) {
    const RunConfig cfg = resolve(o);
    if (o.print_config) {
        std::cout << to_ini(cfg);
        return 0;
    }
    const std::string dir = o.out.empty() ? "runs/" + cfg.preset : o.out;
    const RunManifest m = runner(cfg, dir, o.quiet ? nullptr : &std::cerr);
    print_metrics(m, dir);
    return 0;
}

struct NamedPair {
    std::function<double(double)> transform;
    std::function<double(double)> inverse;
    const char* description;
};

const std::map<std::string, NamedPair>& named_pairs() {
    static const std::map<std::string, NamedPair> pairs{
        {"step", {[](double s) { return 1.0 / s; }, [](double) { return 1.0; }, "1/s <-> 1"}},
        {"ramp", {[](double s) { return 1.0 / (s * s); }, [](double t) { return t; }, "1/s^2 <-> t"}},
        {"exp-decay", {[](double s) { return 1.0 / (s + 1.0); }, [](double t) { return std::exp(-t); }, "1/(s+1) <-> exp(-t)"}},
        {"inv-sqrt",
         {[](double s) { return 1.0 / std::sqrt(s); }, [](double t) { return 1.0 / std::sqrt(std::numbers::pi * t); },
          "1/sqrt(s) <-> 1/sqrt(pi t)"}},
        {"sine", {[](double s) { return 1.0 / (s * s + 1.0); }, [](double t) { return std::sin(t); }, "1/(s^2+1) <-> sin(t)"}},
    };
    return pairs;
}

struct NiltOptions {
    std::string pair;
    std::string checkpoint;
    std::vector<double> times;
    int terms = 0;
    std::string coefficients_out;
    int grid = 51;
    std::string slice;
    std::string out;
};

int run_nilt(const NiltOptions& o) {
    if (!o.coefficients_out.empty()) {
        const int m = o.terms ? o.terms : 4;
        write_stehfest_csv(o.coefficients_out, m);
        std::cout << "wrote M=" << m << " coefficients to " << o.coefficients_out << '\n';
        if (o.pair.empty() && o.checkpoint.empty()) return 0;
    }
    if (o.pair.empty() == o.checkpoint.empty()) throw ContractViolation("nilt: give exactly one of --pair or --checkpoint");

    if (!o.pair.empty()) {
        const auto it = named_pairs().find(o.pair);
        if (it == named_pairs().end()) {
            std::string known;
            for (const auto& [k, v] : named_pairs()) known += " " + k;
            throw ContractViolation("nilt: unknown pair '" + o.pair + "'; known:" + known);
        }
        const StehfestRule rule(o.terms ? o.terms : 4);
        const std::vector<double> times = o.times.empty() ? std::vector<double>{0.5, 1.0, 2.0} : o.times;
        std::cout << "# " << it->second.description << ", M=" << rule.terms() << '\n' << "t,exact,nilt,abs_error\n";
        for (double t : times) {
            const double approx = nilt_stehfest(it->second.transform, t, rule);
            const double exact = it->second.inverse(t);
            std::cout << config_detail::format_double(t) << ',' << config_detail::format_double(exact) << ','
                      << config_detail::format_double(approx) << ',' << config_detail::format_double(std::abs(approx - exact))
                      << '\n';
        }
        return 0;
    }

    const Checkpoint ck = load_checkpoint(o.checkpoint);
    if (!ck.net.laplace_input()) throw ContractViolation("nilt: checkpoint is a coefficient network (no s input)");
    if (o.terms && o.terms != ck.stehfest_terms)
        throw ContractViolation("nilt: the checkpoint was trained for M=" + std::to_string(ck.stehfest_terms));
    const int d = ck.net.spatial_dim();
    const StehfestRule rule(ck.stehfest_terms);
    const std::vector<double> times = o.times.empty() ? std::vector<double>{ck.window.final_time} : o.times;
    Eigen::MatrixXd pts;
    int nx = o.grid, ny = d == 1 ? 1 : o.grid;
    std::string tag;
    if (d == 3) {
        const std::vector<SliceSpec> s = config_detail::parse_slices("--slice", (o.slice.empty() ? "z=0.5" : o.slice) + "@0");
        pts = experiment_detail::slice_points(Box::unit(3), s.at(0), o.grid);
        tag = "_" + std::string(1, config_detail::kAxes[s[0].axis]) + config_detail::format_double(s[0].value);
    } else {
        pts = tensor_points(Box::unit(d), o.grid);
    }
    const Eigen::MatrixXd u = reconstruct(ck.net, pts, times, rule, ck.window);
    const std::filesystem::path dir = o.out.empty() ? "." : o.out;
    for (std::size_t j = 0; j < times.size(); ++j) {
        std::vector<std::string> header = experiment_detail::coord_names(d);
        header.emplace_back("u");
        const std::string stem = "nilt" + tag + "_" + experiment_detail::time_tag(times[j]);
        CsvWriter csv(dir / (stem + ".csv"), header);
        std::vector<double> row(header.size()), vals(static_cast<std::size_t>(pts.cols()));
        for (Eigen::Index i = 0; i < pts.cols(); ++i) {
            for (int k = 0; k < d; ++k) row[static_cast<std::size_t>(k)] = pts(k, i);
            row.back() = vals[static_cast<std::size_t>(i)] = u(i, static_cast<Eigen::Index>(j));
            csv.row(row);
        }
        csv.close();
        if (ny > 1) write_png(dir / (stem + ".png"), heatmap(vals, nx, ny));
        std::cout << "wrote " << (dir / (stem + ".csv")).string() << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Laplace-domain neural solver for time-fractional subdiffusion"};
    app.set_version_flag("--version", std::string(kVersion) + "+" + kGitRevision);
    app.require_subcommand(1);

    RunOptions fwd, inv, fdm;
    auto* c_fwd = app.add_subcommand("forward", "Train the solution network and compare with a reference");
    add_run_options(c_fwd, fwd);
    auto* c_inv = app.add_subcommand("inverse", "Identify the diffusion coefficient from synthetic observations");
    add_run_options(c_inv, inv);
    auto* c_fdm = app.add_subcommand("fdm", "Run the L1 finite-difference reference alone");
    add_run_options(c_fdm, fdm);

    NiltOptions nilt;
    auto* c_nilt = app.add_subcommand("nilt", "Invert a named transform pair or a checkpoint; export coefficients");
    c_nilt->add_option("--pair", nilt.pair, "Named pair: step, ramp, exp-decay, inv-sqrt, sine");
    c_nilt->add_option("--checkpoint", nilt.checkpoint, "Solution checkpoint to invert on a grid");
    c_nilt->add_option("--times", nilt.times, "Times to invert at")->delimiter(',');
    c_nilt->add_option("--terms,-M", nilt.terms, "Stehfest M (even, 2..18)");
    c_nilt->add_option("--coefficients", nilt.coefficients_out, "Write the M-term coefficient table to this CSV");
    c_nilt->add_option("--grid", nilt.grid, "Nodes per axis for checkpoint output")->check(CLI::Range(2, 2001));
    c_nilt->add_option("--slice", nilt.slice, "Plane for 3D checkpoints, e.g. z=0.5");
    c_nilt->add_option("--out", nilt.out, "Output directory for checkpoint inversion");

    std::string corrupt;
    auto* c_verify = app.add_subcommand("verify", "Run the fast invariant suite");
    c_verify->add_option("--corrupt-stehfest", corrupt, "M:i:delta, perturb one coefficient (self-test)")->group("");

    auto* c_presets = app.add_subcommand("presets", "List run presets and their problems");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_fwd->parsed()) return run_command(fwd, [](auto&&... a) { return run_forward(a...); });
        if (c_inv->parsed()) return run_command(inv, [](auto&&... a) { return run_inverse(a...); });
        if (c_fdm->parsed()) return run_command(fdm, [](auto&&... a) { return run_fdm(a...); });
        if (c_nilt->parsed()) return run_nilt(nilt);
        if (c_verify->parsed()) {
            VerifyOptions opt;
            if (!corrupt.empty()) {
                StehfestCorruption c;
                if (std::sscanf(corrupt.c_str(), "%d:%d:%lf", &c.m, &c.index, &c.delta) != 3)
                    throw ContractViolation("--corrupt-stehfest expects M:i:delta");
                opt.corrupt = c;
            }
            const auto results = run_verify(opt);
            print_report(std::cout, results);
            return all_passed(results) ? 0 : 1;
        }
        if (c_presets->parsed()) {
            for (const std::string& n : run_presets::names()) {
                const RunConfig c = run_presets::make(n);
                std::cout << n << "  problem=" << c.problem << "  network=" << c.solution.width << "x" << c.solution.depth
                          << "  iterations=" << c.iterations << '\n';
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
