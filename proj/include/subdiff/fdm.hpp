#pragma once

#include "subdiff/errors.hpp"
#include "subdiff/laplace.hpp"
#include "subdiff/problem.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace subdiff {

/// Tensor grid over the problem box and [0, T] with uniform spacing per axis.
class Grid {
public:
    static constexpr std::size_t kMaxHistoryBytes = std::size_t{1} << 30;

    Grid(const Box& box, std::vector<int> nodes, double final_time, int time_levels)
        : box_(box), nodes_(std::move(nodes)), final_time_(final_time), time_levels_(time_levels) {
        if (static_cast<int>(nodes_.size()) != box_.dim()) throw ContractViolation("Grid: one node count per axis");
        for (int n : nodes_)
            if (n < 3) throw ContractViolation("Grid: need at least 3 nodes per axis");
        if (time_levels_ < 2) throw ContractViolation("Grid: need at least 2 time levels");
        if (!(final_time_ > 0.0)) throw DomainError("Grid: final time must be positive");
        // History holds every level: time_levels * prod(nodes) doubles.
        if (static_cast<double>(time_levels_) * static_cast<double>(num_nodes()) * sizeof(double) >
            static_cast<double>(kMaxHistoryBytes))
            throw ContractViolation("Grid: full history would exceed 1 GiB");
    }

    [[nodiscard]] int dim() const { return box_.dim(); }
    [[nodiscard]] const Box& box() const { return box_; }
    [[nodiscard]] const std::vector<int>& nodes() const { return nodes_; }
    [[nodiscard]] int nodes(int axis) const { return nodes_[axis]; }
    [[nodiscard]] double spacing(int axis) const { return (box_.upper[axis] - box_.lower[axis]) / (nodes_[axis] - 1); }
    [[nodiscard]] double coordinate(int axis, int i) const { return box_.lower[axis] + i * spacing(axis); }
    [[nodiscard]] int time_levels() const { return time_levels_; }
    [[nodiscard]] double final_time() const { return final_time_; }
    [[nodiscard]] double time_step() const { return final_time_ / (time_levels_ - 1); }
    [[nodiscard]] double time(int n) const { return n * time_step(); }

    [[nodiscard]] std::size_t num_nodes() const {
        std::size_t n = 1;
        for (int c : nodes_) n *= static_cast<std::size_t>(c);
        return n;
    }

    /// Flat index with axis 0 fastest.
    [[nodiscard]] std::size_t index(std::span<const int> ijk) const {
        std::size_t idx = 0, stride = 1;
        for (int k = 0; k < dim(); ++k) {
            idx += static_cast<std::size_t>(ijk[k]) * stride;
            stride *= static_cast<std::size_t>(nodes_[k]);
        }
        return idx;
    }

    void multi_index(std::size_t flat, std::span<int> ijk) const {
        for (int k = 0; k < dim(); ++k) {
            ijk[k] = static_cast<int>(flat % static_cast<std::size_t>(nodes_[k]));
            flat /= static_cast<std::size_t>(nodes_[k]);
        }
    }

    [[nodiscard]] bool on_boundary(std::span<const int> ijk) const {
        for (int k = 0; k < dim(); ++k)
            if (ijk[k] == 0 || ijk[k] == nodes_[k] - 1) return true;
        return false;
    }

    /// All node coordinates as a d x num_nodes matrix.
    [[nodiscard]] Eigen::MatrixXd points() const {
        Eigen::MatrixXd p(dim(), static_cast<Eigen::Index>(num_nodes()));
        std::vector<int> ijk(dim());
        for (std::size_t f = 0; f < num_nodes(); ++f) {
            multi_index(f, ijk);
            for (int k = 0; k < dim(); ++k) p(k, static_cast<Eigen::Index>(f)) = coordinate(k, ijk[k]);
        }
        return p;
    }

private:
    Box box_;
    std::vector<int> nodes_;
    double final_time_;
    int time_levels_;
};

/// Solution at every node and time level; level n is a contiguous slice.
struct FieldHistory {
    Grid grid;
    std::vector<double> values;

    [[nodiscard]] std::span<const double> level(int n) const {
        return {values.data() + static_cast<std::size_t>(n) * grid.num_nodes(), grid.num_nodes()};
    }
    [[nodiscard]] std::span<double> level(int n) {
        return {values.data() + static_cast<std::size_t>(n) * grid.num_nodes(), grid.num_nodes()};
    }
};

/// b_j = (j+1)^(1-alpha) - j^(1-alpha), j = 0..count-1.
inline std::vector<double> l1_weights(double alpha, int count) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("l1_weights: alpha must lie in (0, 1)");
    std::vector<double> b(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) b[j] = std::pow(j + 1.0, 1.0 - alpha) - std::pow(static_cast<double>(j), 1.0 - alpha);
    return b;
}

/**
 * L1 scheme for the Caputo derivative with implicit central differences in
 * space (conservative stencil, a at cell midpoints). The system matrix is
 * constant in time and factored once; Dirichlet nodes stay at zero.
 */
inline FieldHistory solve_l1(const ProblemSpec& spec, const Grid& grid) {
    spec.validate();
    const int d = grid.dim();
    if (d != spec.dim || d > 2) throw ContractViolation("solve_l1: supports 1D and 2D problems matching the grid");

    const std::size_t nn = grid.num_nodes();
    const int levels = grid.time_levels();
    const double tau = grid.time_step();
    const double alpha = spec.alpha;
    const double c0 = std::pow(tau, -alpha) / gamma_fn(2.0 - alpha);
    const std::vector<double> b = l1_weights(alpha, levels);

    // Unknown numbering over interior nodes.
    std::vector<int> unknown(nn, -1);
    std::vector<std::size_t> node_of;
    std::vector<int> ijk(d);
    for (std::size_t f = 0; f < nn; ++f) {
        grid.multi_index(f, ijk);
        if (!grid.on_boundary(ijk)) {
            unknown[f] = static_cast<int>(node_of.size());
            node_of.push_back(f);
        }
    }
    const auto nu = static_cast<Eigen::Index>(node_of.size());

    std::vector<Eigen::Triplet<double>> trip;
    std::vector<double> xc(d), grad(d);
    for (Eigen::Index r = 0; r < nu; ++r) {
        const std::size_t f = node_of[static_cast<std::size_t>(r)];
        grid.multi_index(f, ijk);
        for (int k = 0; k < d; ++k) xc[k] = grid.coordinate(k, ijk[k]);
        double diag = c0 - spec.reaction(xc);
        for (int k = 0; k < d; ++k) {
            const double h2 = grid.spacing(k) * grid.spacing(k);
            for (int side : {-1, 1}) {
                std::vector<double> mid = xc;
                mid[k] += 0.5 * side * grid.spacing(k);
                const double a = spec.diffusion_at(mid, grad);
                diag += a / h2;
                std::vector<int> nb = ijk;
                nb[k] += side;
                const int col = unknown[grid.index(nb)];
                if (col >= 0) trip.emplace_back(r, col, -a / h2);
            }
        }
        trip.emplace_back(r, r, diag);
    }
    Eigen::SparseMatrix<double> A(nu, nu);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) throw SolverError("solve_l1: factorization failed");

    // Spatial parts of u0 and the separable source at interior nodes.
    Eigen::VectorXd u0(nu);
    std::vector<Eigen::VectorXd> src(spec.source.size(), Eigen::VectorXd(nu));
    for (Eigen::Index r = 0; r < nu; ++r) {
        grid.multi_index(node_of[static_cast<std::size_t>(r)], ijk);
        for (int k = 0; k < d; ++k) xc[k] = grid.coordinate(k, ijk[k]);
        u0(r) = spec.initial(xc);
        for (std::size_t m = 0; m < spec.source.size(); ++m) src[m](r) = spec.source[m].spatial(xc);
    }

    FieldHistory hist{grid, std::vector<double>(nn * static_cast<std::size_t>(levels), 0.0)};
    std::vector<Eigen::VectorXd> u(static_cast<std::size_t>(levels));
    u[0] = u0;
    for (int n = 1; n < levels; ++n) {
        Eigen::VectorXd rhs = (c0 * b[n - 1]) * u[0];
        for (int j = 1; j < n; ++j) rhs += (c0 * (b[j - 1] - b[j])) * u[static_cast<std::size_t>(n - j)];
        const double t = grid.time(n);
        for (std::size_t m = 0; m < spec.source.size(); ++m) rhs += spec.source[m].profile.value_at(t) * src[m];
        u[static_cast<std::size_t>(n)] = lu.solve(rhs);
        if (lu.info() != Eigen::Success) throw SolverError("solve_l1: solve failed at level " + std::to_string(n));
    }
    for (int n = 0; n < levels; ++n) {
        std::span<double> lv = hist.level(n);
        for (Eigen::Index r = 0; r < nu; ++r) lv[node_of[static_cast<std::size_t>(r)]] = u[static_cast<std::size_t>(n)](r);
    }
    return hist;
}

/// ||ref - approx||_2 / ||ref||_2.
inline double relative_l2(std::span<const double> ref, std::span<const double> approx) {
    if (ref.size() != approx.size()) throw ContractViolation("relative_l2: sample sets differ in size");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double e = ref[i] - approx[i];
        num += e * e;
        den += ref[i] * ref[i];
    }
    if (!(den > 0.0)) throw DomainError("relative_l2: reference has zero norm");
    return std::sqrt(num / den);
}

inline double relative_l2(const Eigen::VectorXd& ref, const Eigen::VectorXd& approx) {
    return relative_l2(std::span<const double>(ref.data(), static_cast<std::size_t>(ref.size())),
                       std::span<const double>(approx.data(), static_cast<std::size_t>(approx.size())));
}

}  // namespace subdiff
