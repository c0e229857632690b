#pragma once

#include "subdiff/config.hpp"
#include "subdiff/fdm.hpp"
#include "subdiff/image.hpp"
#include "subdiff/inverse.hpp"
#include "subdiff/io.hpp"
#include "subdiff/manifest.hpp"
#include "subdiff/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace subdiff {

namespace fs = std::filesystem;

namespace experiment_detail {

inline std::string time_tag(double t) { return "t" + config_detail::format_double(t); }

class Clock {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Prints roughly twenty progress lines per run.
inline ProgressFn progress_printer(std::ostream* log, long iterations, int stride) {
    if (!log) return {};
    const long every = std::max<long>(stride, (iterations / 20 / stride) * stride);
    return [log, every](const LossRecord& r) {
        if (r.iteration % every != 0) return;
        *log << "  iter " << r.iteration << "  total " << r.total << "  L_eq " << r.equation << "  L_bd " << r.boundary;
        if (std::isfinite(r.observation)) *log << "  L_obs " << r.observation << "  L_prior " << r.prior;
        *log << '\n' << std::flush;
    };
}

class Outputs {
public:
    Outputs(fs::path dir, RunManifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {
        fs::create_directories(dir_);
    }

    [[nodiscard]] fs::path path(const std::string& name) {
        manifest_.files.push_back(name);
        return dir_ / name;
    }

    [[nodiscard]] const fs::path& dir() const { return dir_; }

    void check_all_exist() const {
        for (const std::string& f : manifest_.files)
            if (!fs::exists(dir_ / f)) throw FormatError("run output missing: " + f);
    }

private:
    fs::path dir_;
    RunManifest& manifest_;
};

inline void write_loss_outputs(Outputs& out, const std::vector<LossRecord>& history, bool inverse) {
    write_loss_history(out.path("loss_history.csv"), history, inverse);
    std::vector<std::vector<double>> series(inverse ? 5 : 3);
    for (const LossRecord& r : history) {
        series[0].push_back(r.total);
        series[1].push_back(r.equation);
        series[2].push_back(r.boundary);
        if (inverse) {
            series[3].push_back(r.observation);
            series[4].push_back(r.prior);
        }
    }
    write_png(out.path("loss.png"), loss_plot(series));
}

inline void final_loss_metrics(RunManifest& m, const std::vector<LossRecord>& history) {
    if (history.empty()) return;
    const LossRecord& r = history.back();
    m.metrics["final_loss_total"] = r.total;
    m.metrics["final_L_eq"] = r.equation;
    m.metrics["final_L_bd"] = r.boundary;
    if (std::isfinite(r.observation)) {
        m.metrics["final_L_obs"] = r.observation;
        m.metrics["final_L_prior"] = r.prior;
    }
}

// Reference value at time t from the stored levels, linear between neighbouring levels.
inline std::vector<double> level_at(const FieldHistory& h, double t) {
    const Grid& g = h.grid;
    const double pos = t / g.time_step();
    const int n0 = std::clamp(static_cast<int>(std::floor(pos + 1e-9)), 0, g.time_levels() - 1);
    const double f = std::clamp(pos - n0, 0.0, 1.0);
    std::vector<double> out(h.level(n0).begin(), h.level(n0).end());
    if (f > 1e-9 && n0 + 1 < g.time_levels()) {
        const auto next = h.level(n0 + 1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += f * (next[i] - out[i]);
    }
    return out;
}

// n^2 points on the plane axis = value of the unit cube; the two free axes keep their order.
inline Eigen::MatrixXd slice_points(const Box& box, const SliceSpec& slice, int n) {
    Eigen::MatrixXd p(3, static_cast<Eigen::Index>(n) * n);
    int a = -1, b = -1;
    for (int k = 0; k < 3; ++k)
        if (k != slice.axis) (a < 0 ? a : b) = k;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const Eigen::Index c = i + static_cast<Eigen::Index>(n) * j;
            p(slice.axis, c) = slice.value;
            p(a, c) = box.lower[a] + (box.upper[a] - box.lower[a]) * i / (n - 1);
            p(b, c) = box.lower[b] + (box.upper[b] - box.lower[b]) * j / (n - 1);
        }
    return p;
}

inline std::string slice_tag(const SliceSpec& s) {
    return std::string(1, config_detail::kAxes[s.axis]) + config_detail::format_double(s.value) + "_" + time_tag(s.time);
}

// CSV with coordinates and (reference, prediction, error) plus three heatmaps for 2D point sets.
inline void write_comparison(Outputs& out, const std::string& stem, const Eigen::MatrixXd& pts, const std::vector<double>& ref,
                             const std::vector<double>& pred, int nx, int ny, const std::vector<std::string>& coord_names) {
    std::vector<std::string> header = coord_names;
    header.insert(header.end(), {"reference", "prediction", "error"});
    CsvWriter csv(out.path(stem + ".csv"), header);
    std::vector<double> err(ref.size()), row(header.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        err[i] = ref[i] - pred[i];
        for (std::size_t k = 0; k < coord_names.size(); ++k) row[k] = pts(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
        row[coord_names.size()] = ref[i];
        row[coord_names.size() + 1] = pred[i];
        row[coord_names.size() + 2] = err[i];
        csv.row(row);
    }
    csv.close();
    if (ny > 1) {
        const int scale = std::max(1, 400 / std::max(nx, ny));
        write_png(out.path(stem + "_reference.png"), heatmap(ref, nx, ny, Colormap::Sequential, scale));
        write_png(out.path(stem + "_prediction.png"), heatmap(pred, nx, ny, Colormap::Sequential, scale));
        write_png(out.path(stem + "_error.png"), heatmap(err, nx, ny, Colormap::Diverging, scale));
    }
}

inline std::vector<std::string> coord_names(int d) {
    static const std::vector<std::string> all{"x", "y", "z"};
    return {all.begin(), all.begin() + d};
}

inline Eigen::MatrixXd drop_axis(const Eigen::MatrixXd& pts, int axis) {
    Eigen::MatrixXd out(2, pts.cols());
    int r = 0;
    for (int k = 0; k < 3; ++k)
        if (k != axis) out.row(r++) = pts.row(k);
    return out;
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline std::vector<double> exact_values(const ProblemSpec& spec, const Eigen::MatrixXd& pts, double t) {
    std::vector<double> out(static_cast<std::size_t>(pts.cols()));
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        out[static_cast<std::size_t>(i)] = spec.exact_time->value(std::span<const double>(pts.col(i).data(), spec.dim), t);
    return out;
}

inline FieldHistory solve_reference(const ProblemSpec& spec, const RunConfig& cfg) {
    const Grid grid(spec.domain, std::vector<int>(static_cast<std::size_t>(spec.dim), cfg.fdm_nodes), spec.final_time,
                    cfg.fdm_time_levels);
    return solve_l1(spec, grid);
}

inline void check_times(const std::vector<double>& times, double lo, double hi, const std::string& what) {
    if (times.empty()) throw ContractViolation(what + ": eval.times is empty");
    for (double t : times)
        if (!(t >= lo * (1 - 1e-12) && t <= hi * (1 + 1e-12)))
            throw OutOfTrainedRange(what + ": eval time " + config_detail::format_double(t) + " outside [" +
                                    config_detail::format_double(lo) + ", " + config_detail::format_double(hi) + "]");
}

}  // namespace experiment_detail

/**
 * Train the solution network and compare its reconstruction with the FDM
 * reference (1D/2D) or the manufactured solution (3D). For 1D/2D, rel_l2 is the
 * error at t = T on the full reference grid and rel_l2_spacetime covers every
 * level with t >= t1. For 3D, rel_l2 is taken over all eval times.
 */
inline RunManifest run_forward(const RunConfig& cfg, const fs::path& out_dir, std::ostream* log = nullptr) {
    using namespace experiment_detail;
    const Clock clock;
    RunManifest m{"forward", cfg, 0.0, {}, {}};
    Outputs out(out_dir, m);
    const ProblemSpec spec = cfg.problem_spec();
    const TrainConfig tc = cfg.train_config();
    tc.validate(spec);
    check_times(cfg.times, cfg.t1, spec.final_time, "forward");
    if (spec.dim == 3 && !spec.exact_time) throw ContractViolation("forward: 3D runs need a closed-form solution");

    if (log) *log << "forward: " << cfg.preset << " (" << spec.name << "), " << tc.iterations << " iterations, network "
                  << tc.network.width << "x" << tc.network.depth << ", M=" << tc.stehfest_terms << '\n';
    const ForwardTrainResult r = train_forward(spec, tc, progress_printer(log, tc.iterations, tc.log_stride));
    const TimeWindow window{cfg.t1, spec.final_time};
    save_checkpoint(out.path("solution.ckpt"), {r.net, window, tc.stehfest_terms});
    write_loss_outputs(out, r.history, false);
    final_loss_metrics(m, r.history);
    const StehfestRule rule(tc.stehfest_terms);
    const auto names = coord_names(spec.dim);

    if (spec.dim <= 2) {
        if (log) *log << "forward: FDM reference on " << cfg.fdm_nodes << "^" << spec.dim << " nodes, "
                      << cfg.fdm_time_levels << " levels\n";
        const FieldHistory ref = solve_reference(spec, cfg);
        const Grid& g = ref.grid;
        save_grid(out.path("reference.sdgrid"), history_grid(ref));
        const Eigen::MatrixXd pts = g.points();

        std::vector<double> times;
        int first = 0;
        for (int n = 0; n < g.time_levels(); ++n)
            if (g.time(n) >= cfg.t1 * (1 - 1e-12)) {
                if (times.empty()) first = n;
                times.push_back(std::min(g.time(n), spec.final_time));
            }
        const Eigen::MatrixXd pred = reconstruct(r.net, pts, times, rule, window);
        std::vector<double> ref_all;
        GridData pg = history_grid(ref);
        pg.axes.back() = {"t", times.size(), times.front(), times.back()};
        pg.values.assign(pred.data(), pred.data() + pred.size());
        save_grid(out.path("prediction.sdgrid"), pg);
        for (std::size_t j = 0; j < times.size(); ++j) {
            const auto lv = ref.level(first + static_cast<int>(j));
            ref_all.insert(ref_all.end(), lv.begin(), lv.end());
        }
        m.metrics["rel_l2_spacetime"] = relative_l2(ref_all, pg.values);
        // The headline error sits at T: the L1 reference carries an O(tau^alpha) initial-layer
        // error that dominates any norm including the first few levels.
        const auto last = static_cast<Eigen::Index>(times.size() - 1);
        m.metrics["rel_l2"] = relative_l2(ref.level(g.time_levels() - 1), to_vector(pred.col(last)));

        const Eigen::MatrixXd at = reconstruct(r.net, pts, cfg.times, rule, window);
        for (std::size_t j = 0; j < cfg.times.size(); ++j) {
            const double t = cfg.times[j];
            const std::vector<double> rv = level_at(ref, t);
            const std::vector<double> pv = to_vector(at.col(static_cast<Eigen::Index>(j)));
            m.metrics["rel_l2_" + time_tag(t)] = relative_l2(rv, pv);
            write_comparison(out, "field_" + time_tag(t), pts, rv, pv, g.nodes(0), spec.dim == 2 ? g.nodes(1) : 1, names);
        }
    } else {
        const Eigen::MatrixXd pts = tensor_points(spec.domain, cfg.grid);
        const Eigen::MatrixXd pred = reconstruct(r.net, pts, cfg.times, rule, window);
        std::vector<double> ref_all, pred_all;
        for (std::size_t j = 0; j < cfg.times.size(); ++j) {
            const std::vector<double> rv = exact_values(spec, pts, cfg.times[j]);
            const std::vector<double> pv = to_vector(pred.col(static_cast<Eigen::Index>(j)));
            m.metrics["rel_l2_" + time_tag(cfg.times[j])] = relative_l2(rv, pv);
            ref_all.insert(ref_all.end(), rv.begin(), rv.end());
            pred_all.insert(pred_all.end(), pv.begin(), pv.end());
        }
        m.metrics["rel_l2"] = relative_l2(ref_all, pred_all);
        for (const SliceSpec& s : cfg.slices) {
            check_times({s.time}, cfg.t1, spec.final_time, "forward slice");
            const Eigen::MatrixXd sp = slice_points(spec.domain, s, cfg.grid);
            const std::vector<double> rv = exact_values(spec, sp, s.time);
            const std::vector<double> pv = to_vector(reconstruct(r.net, sp, {s.time}, rule, window).col(0));
            m.metrics["rel_l2_slice_" + slice_tag(s)] = relative_l2(rv, pv);
            write_comparison(out, "slice_" + slice_tag(s), sp, rv, pv, cfg.grid, cfg.grid, names);
        }
    }
    m.duration_seconds = clock.seconds();
    save_manifest(out.path("manifest.json"), m);
    out.check_all_exist();
    return m;
}

/**
 * Identify a(x) from synthetic Laplace-domain observations. coef_rel_l2 is
 * measured over the observation region on eval.grid^d nodes.
 */
inline RunManifest run_inverse(const RunConfig& cfg, const fs::path& out_dir, std::ostream* log = nullptr) {
    using namespace experiment_detail;
    const Clock clock;
    RunManifest m{"inverse", cfg, 0.0, {}, {}};
    Outputs out(out_dir, m);
    const ProblemSpec spec = cfg.problem_spec();
    const InverseConfig ic = cfg.inverse_config();
    ic.validate(spec);
    check_times(cfg.times, cfg.t1, spec.final_time, "inverse");
    if (!spec.exact_time) throw ContractViolation("inverse: the problem needs a closed-form solution");

    if (log) *log << "inverse: " << cfg.preset << " (" << spec.name << "), " << ic.iterations << " iterations, noise "
                  << ic.noise << '\n';
    const InverseTrainResult r = train_inverse(spec, ic, progress_printer(log, ic.iterations, ic.log_stride));
    const TimeWindow window{cfg.t1, spec.final_time};
    save_checkpoint(out.path("solution.ckpt"), {r.u_net, window, ic.stehfest_terms});
    save_checkpoint(out.path("coefficient.ckpt"), {r.a_net, window, ic.stehfest_terms});
    write_measurements(out.path("measurements.csv"), r.measurements);
    write_loss_outputs(out, r.history, true);
    final_loss_metrics(m, r.history);
    m.metrics["noise"] = ic.noise;

    const Box omega = ic.observation_region(spec.dim);
    m.metrics["coef_rel_l2"] = coefficient_error(r.a_net, spec, omega, cfg.grid);
    m.metrics["coef_rel_l2_domain"] = coefficient_error(r.a_net, spec, spec.domain, cfg.grid);

    // Coefficient over the whole domain.
    const auto names = coord_names(spec.dim);
    const Eigen::MatrixXd pts = tensor_points(spec.domain, cfg.grid);
    const Eigen::VectorXd a_nn = eval_batch(r.a_net, pts, Eigen::VectorXd());
    std::vector<double> a_true(static_cast<std::size_t>(pts.cols()));
    std::vector<double> gbuf(static_cast<std::size_t>(spec.dim));
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        a_true[static_cast<std::size_t>(i)] = spec.diffusion_at(std::span<const double>(pts.col(i).data(), spec.dim), gbuf);
    GridData ag;
    for (int k = 0; k < spec.dim; ++k)
        ag.axes.push_back({names[static_cast<std::size_t>(k)], static_cast<std::uint64_t>(cfg.grid), spec.domain.lower[k],
                           spec.domain.upper[k]});
    ag.values = to_vector(a_nn);
    save_grid(out.path("coefficient.sdgrid"), ag);
    {
        std::vector<std::string> header = names;
        header.insert(header.end(), {"a_true", "a_nn"});
        CsvWriter csv(out.path("coefficient.csv"), header);
        std::vector<double> row(header.size());
        for (Eigen::Index i = 0; i < pts.cols(); ++i) {
            for (int k = 0; k < spec.dim; ++k) row[static_cast<std::size_t>(k)] = pts(k, i);
            row[static_cast<std::size_t>(spec.dim)] = a_true[static_cast<std::size_t>(i)];
            row[static_cast<std::size_t>(spec.dim) + 1] = a_nn(i);
            csv.row(row);
        }
        csv.close();
    }

    const StehfestRule rule(ic.stehfest_terms);
    if (spec.dim == 2) {
        write_comparison(out, "coefficient_map", pts, a_true, to_vector(a_nn), cfg.grid, cfg.grid, names);
        const Eigen::MatrixXd u = reconstruct(r.u_net, pts, cfg.times, rule, window);
        for (std::size_t j = 0; j < cfg.times.size(); ++j) {
            const std::vector<double> rv = exact_values(spec, pts, cfg.times[j]);
            const std::vector<double> pv = to_vector(u.col(static_cast<Eigen::Index>(j)));
            m.metrics["u_rel_l2_" + time_tag(cfg.times[j])] = relative_l2(rv, pv);
            write_comparison(out, "field_" + time_tag(cfg.times[j]), pts, rv, pv, cfg.grid, cfg.grid, names);
        }
    } else if (spec.dim == 3) {
        for (const SliceSpec& s : cfg.slices) {
            check_times({s.time}, cfg.t1, spec.final_time, "inverse slice");
            const Eigen::MatrixXd sp = slice_points(spec.domain, s, cfg.grid);
            std::vector<double> at(static_cast<std::size_t>(sp.cols()));
            for (Eigen::Index i = 0; i < sp.cols(); ++i)
                at[static_cast<std::size_t>(i)] = spec.diffusion_at(std::span<const double>(sp.col(i).data(), 3), gbuf);
            const std::vector<double> an = to_vector(eval_batch(r.a_net, sp, Eigen::VectorXd()));
            m.metrics["coef_rel_l2_slice_" + slice_tag(s)] = relative_l2(at, an);
            write_comparison(out, "coefficient_slice_" + slice_tag(s), sp, at, an, cfg.grid, cfg.grid, names);
            const std::vector<double> rv = exact_values(spec, sp, s.time);
            const std::vector<double> pv = to_vector(reconstruct(r.u_net, sp, {s.time}, rule, window).col(0));
            m.metrics["u_rel_l2_slice_" + slice_tag(s)] = relative_l2(rv, pv);
            write_comparison(out, "field_slice_" + slice_tag(s), sp, rv, pv, cfg.grid, cfg.grid, names);
        }
    }
    m.duration_seconds = clock.seconds();
    save_manifest(out.path("manifest.json"), m);
    out.check_all_exist();
    return m;
}

/// L1 reference alone; compared with the closed-form solution when the problem has one.
inline RunManifest run_fdm(const RunConfig& cfg, const fs::path& out_dir, std::ostream* log = nullptr) {
    using namespace experiment_detail;
    const Clock clock;
    RunManifest m{"fdm", cfg, 0.0, {}, {}};
    Outputs out(out_dir, m);
    const ProblemSpec spec = cfg.problem_spec();
    check_times(cfg.times, 0.0, spec.final_time, "fdm");
    if (log) *log << "fdm: " << spec.name << " on " << cfg.fdm_nodes << "^" << spec.dim << " nodes, " << cfg.fdm_time_levels
                  << " levels\n";
    const FieldHistory h = solve_reference(spec, cfg);
    save_grid(out.path("reference.sdgrid"), history_grid(h));
    const Grid& g = h.grid;
    const Eigen::MatrixXd pts = g.points();
    const auto names = coord_names(spec.dim);
    for (double t : cfg.times) {
        const std::vector<double> v = level_at(h, t);
        if (spec.exact_time) {
            const std::vector<double> ex = exact_values(spec, pts, t);
            m.metrics["rel_l2_exact_" + time_tag(t)] = relative_l2(ex, v);
            write_comparison(out, "field_" + time_tag(t), pts, ex, v, g.nodes(0), spec.dim == 2 ? g.nodes(1) : 1, names);
        } else {
            std::vector<std::string> header = names;
            header.emplace_back("u");
            CsvWriter csv(out.path("field_" + time_tag(t) + ".csv"), header);
            std::vector<double> row(header.size());
            for (Eigen::Index i = 0; i < pts.cols(); ++i) {
                for (int k = 0; k < spec.dim; ++k) row[static_cast<std::size_t>(k)] = pts(k, i);
                row.back() = v[static_cast<std::size_t>(i)];
                csv.row(row);
            }
            csv.close();
            if (spec.dim == 2) write_png(out.path("field_" + time_tag(t) + ".png"), heatmap(v, g.nodes(0), g.nodes(1)));
        }
    }
    m.duration_seconds = clock.seconds();
    save_manifest(out.path("manifest.json"), m);
    out.check_all_exist();
    return m;
}

}  // namespace subdiff
