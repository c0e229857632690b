#include "subdiff/fdm.hpp"
#include "subdiff/presets.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace subdiff {
namespace {

constexpr double pi = std::numbers::pi;

TEST(L1Weights, PositiveDecreasing) {
    for (double alpha : {0.1, 0.5, 0.9}) {
        const std::vector<double> b = l1_weights(alpha, 200);
        EXPECT_EQ(b[0], 1.0);
        for (std::size_t j = 1; j < b.size(); ++j) {
            EXPECT_GT(b[j], 0.0);
            EXPECT_LT(b[j], b[j - 1]);
        }
    }
    EXPECT_THROW((void)l1_weights(1.0, 4), DomainError);
}

TEST(L1Weights, NearUnitOrderIsBackwardEuler) {
    const std::vector<double> b = l1_weights(0.999, 50);
    EXPECT_EQ(b[0], 1.0);
    for (std::size_t j = 1; j < b.size(); ++j) EXPECT_LT(std::abs(b[j]), 1e-2);
}

TEST(Grid, IndexingAndGuards) {
    const Grid g(Box::unit(2), {5, 4}, 1.0, 11);
    EXPECT_EQ(g.num_nodes(), 20u);
    EXPECT_DOUBLE_EQ(g.spacing(0), 0.25);
    EXPECT_DOUBLE_EQ(g.time_step(), 0.1);
    const std::vector<int> ijk{3, 2};
    EXPECT_EQ(g.index(ijk), 13u);
    std::vector<int> back(2);
    g.multi_index(13, back);
    EXPECT_EQ(back, ijk);
    EXPECT_THROW(Grid(Box::unit(1), {2}, 1.0, 5), ContractViolation);
    EXPECT_THROW(Grid(Box::unit(1), {5}, 1.0, 1), ContractViolation);
    EXPECT_THROW(Grid(Box::unit(2), {4001, 4001}, 1.0, 101), ContractViolation);
}

TEST(SolveL1, ManufacturedMidpoint) {
    const ProblemSpec spec = presets::forward1d(0.5);
    const Grid g(Box::unit(1), {201}, 1.0, 201);
    const FieldHistory h = solve_l1(spec, g);
    EXPECT_NEAR(h.level(200)[100], 7.0, 1e-2);
}

TEST(SolveL1, InitialLevelAndBoundaryPinned) {
    const ProblemSpec spec = presets::forward2d_t1();
    const Grid g(Box::unit(2), {21, 21}, 1.0, 11);
    const FieldHistory h = solve_l1(spec, g);
    const Eigen::MatrixXd pts = g.points();
    std::vector<int> ijk(2);
    for (std::size_t f = 0; f < g.num_nodes(); ++f) {
        const double x = pts(0, static_cast<Eigen::Index>(f)), y = pts(1, static_cast<Eigen::Index>(f));
        g.multi_index(f, ijk);
        if (g.on_boundary(ijk)) {
            for (int n = 0; n < g.time_levels(); ++n) EXPECT_EQ(h.level(n)[f], 0.0);
        } else {
            EXPECT_NEAR(h.level(0)[f], std::sin(pi * x) * std::sin(pi * y), 1e-15);
        }
    }
}

TEST(SolveL1, ZeroDataGivesZero) {
    ProblemSpec spec = presets::forward2d_t1();
    spec.initial = constant_field(0.0);
    spec.source.clear();
    const FieldHistory h = solve_l1(spec, Grid(Box::unit(2), {11, 11}, 1.0, 6));
    EXPECT_TRUE(std::all_of(h.values.begin(), h.values.end(), [](double v) { return v == 0.0; }));
}

TEST(SolveL1, MaximumPrinciple) {
    // Non-negative data and a variable coefficient.
    ProblemSpec spec = presets::forward2d_t1();
    spec.diffusion = exponential_diffusion();
    spec.source = {{[](std::span<const double> x) { return x[0] * (1 - x[1]); }, TimeProfile{{1.0, 0.0}, {2.0, 0.5}}}};
    const FieldHistory h = solve_l1(spec, Grid(Box::unit(2), {31, 31}, 1.0, 41));
    EXPECT_GE(*std::min_element(h.values.begin(), h.values.end()), -1e-12);
}

TEST(SolveL1, RejectsThreeDimensions) {
    EXPECT_THROW((void)solve_l1(presets::forward3d(), Grid(Box::unit(3), {5, 5, 5}, 1.0, 3)), ContractViolation);
}

// Max error at the final level against u = (1 + t^2) sin(pi x).
double quadratic_error(double alpha, int steps) {
    const ProblemSpec spec = presets::quadratic1d(alpha);
    const Grid g(Box::unit(1), {2001}, 1.0, steps + 1);
    const FieldHistory h = solve_l1(spec, g);
    double err = 0.0;
    for (int i = 0; i < 2001; ++i) err = std::max(err, std::abs(h.level(steps)[i] - 2.0 * std::sin(pi * g.coordinate(0, i))));
    return err;
}

TEST(SolveL1, TemporalOrder) {
    for (double alpha : {0.3, 0.5, 0.8}) {
        const double e1 = quadratic_error(alpha, 40), e2 = quadratic_error(alpha, 80);
        const double order = std::log2(e1 / e2);
        EXPECT_NEAR(order, 2.0 - alpha, 0.3) << "alpha " << alpha << " errors " << e1 << " " << e2;
    }
}

TEST(SolveL1, VariableCoefficientManufactured) {
    // Exercises the midpoint stencil: u = (3t + 5) sin(2 pi x) sin(pi y), a = 0.5 + exp(-(x+y)).
    const ProblemSpec spec = presets::inverse2d();
    const Grid g(Box::unit(2), {81, 81}, 1.0, 41);
    const FieldHistory h = solve_l1(spec, g);
    const Eigen::MatrixXd pts = g.points();
    std::vector<double> ref(g.num_nodes()), got(h.level(40).begin(), h.level(40).end());
    for (std::size_t f = 0; f < g.num_nodes(); ++f)
        ref[f] = spec.exact_time->value(std::vector<double>{pts(0, static_cast<Eigen::Index>(f)), pts(1, static_cast<Eigen::Index>(f))}, 1.0);
    EXPECT_LE(relative_l2(ref, got), 2e-3);
}

TEST(SolveL1, EigenmodeDecay) {
    // u0 = sin(pi x), f = 0: the exact solution is E_alpha(-pi^2 t^alpha) sin(pi x); E_{1/2}(-z) = erfcx(z).
    ProblemSpec spec = eigenmode_problem("decay", 1, 1.0, 0.0, 0.5, 1.0, {{1.0, {1}}}, {});
    const Grid g(Box::unit(1), {401}, 1.0, 2001);
    const FieldHistory h = solve_l1(spec, g);
    const double z = pi * pi;
    const double erfcx = std::exp(z * z) * std::erfc(z);
    EXPECT_NEAR(h.level(2000)[200], erfcx, 2e-3 * erfcx + 1e-4);
}

TEST(RelativeL2, Examples) {
    const std::vector<double> a{1.0, -2.0, 3.0};
    std::vector<double> b = a;
    EXPECT_EQ(relative_l2(a, b), 0.0);
    for (double& v : b) v *= 1.1;
    EXPECT_NEAR(relative_l2(a, b), 0.1, 1e-15);
    EXPECT_THROW((void)relative_l2(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 0.0}), DomainError);
    EXPECT_THROW((void)relative_l2(a, std::vector<double>{1.0}), ContractViolation);
}

}  // namespace
}  // namespace subdiff
