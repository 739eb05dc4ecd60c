#include <doctest.h>

#include <cmath>

#include "anq/constrained_target.hpp"
#include "anq/errors.hpp"
#include "anq/rng.hpp"
#include "anq/tabular.hpp"

using namespace anq;
using namespace anq::oracle;

namespace {

TabularMDP single_state(double r, double gamma) {
    TabularMDP m;
    m.n_states = 1;
    m.n_actions = 2;
    m.P.assign(2, VectorXd::Ones(1));
    m.R = MatrixXd::Constant(1, 2, r);
    m.gamma = gamma;
    m.d0 = VectorXd::Ones(1);
    m.r_max = std::max(1.0, r);
    return m;
}

/// Deterministic 0 -> 1 -> 0 cycle with rewards (1, 0).
TabularMDP two_cycle(double gamma) {
    TabularMDP m;
    m.n_states = 2;
    m.n_actions = 1;
    m.P = {VectorXd::Unit(2, 1), VectorXd::Unit(2, 0)};
    m.R = MatrixXd(2, 1);
    m.R << 1.0, 0.0;
    m.gamma = gamma;
    m.d0 = VectorXd::Unit(2, 0);
    return m;
}

}  // namespace

TEST_CASE("value iteration examples") {
    auto zero = single_state(0.0, 0.9);
    CHECK(value_iteration(zero, 1e-12).q.isZero());
    const auto vi = value_iteration(single_state(1.0, 0.9), 1e-12);
    CHECK(vi.q(0, 0) == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(vi.residual <= 1e-12);
}

TEST_CASE("value iteration agrees with a linear solve for the greedy policy") {
    auto rng = make_rng(17, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_mdp(rng, 5, 3, 0.9);
        const auto vi = value_iteration(m, 1e-12);
        MatrixXd Ppi = MatrixXd::Zero(5, 5);
        VectorXd Rpi(5);
        for (int s = 0; s < 5; ++s) {
            const int a = vi.greedy[static_cast<std::size_t>(s)];
            Ppi.row(s) = m.next(s, a).transpose();
            Rpi(s) = m.R(s, a);
        }
        const VectorXd v = (MatrixXd::Identity(5, 5) - m.gamma * Ppi).partialPivLu().solve(Rpi);
        for (int s = 0; s < 5; ++s) {
            for (int a = 0; a < 3; ++a) {
                const double q = m.R(s, a) + m.gamma * m.next(s, a).dot(v);
                CHECK(vi.q(s, a) == doctest::Approx(q).epsilon(1e-9));
            }
        }
        const auto pi = TabularPolicy::deterministic(vi.greedy, 3);
        double best = 0.0;
        for (int s = 0; s < 5; ++s) best += m.d0(s) * vi.q.row(s).maxCoeff();
        CHECK(std::abs(policy_return(m, pi) - best) <= 1e-6);
    }
}

TEST_CASE("policy return examples") {
    auto c = single_state(0.5, 0.8);
    const TabularPolicy uniform{MatrixXd::Constant(1, 2, 0.5)};
    CHECK(policy_return(c, uniform) == doctest::Approx(0.5 / 0.2));
    CHECK(policy_return(single_state(0.0, 0.8), uniform) == 0.0);
    const auto cyc = two_cycle(0.5);
    const auto pi = TabularPolicy::deterministic({0, 0}, 1);
    CHECK(policy_return(cyc, pi) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(policy_return_iterative(cyc, pi) == doctest::Approx(4.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("occupancy is a distribution satisfying the flow equation") {
    auto rng = make_rng(23, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_mdp(rng, 6, 3, 0.95);
        const auto pi = random_policy(rng, 6, 3);
        const auto d = state_occupancy(m, pi);
        CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(d.minCoeff() >= -1e-12);
        CHECK(occupancy_flow_residual(m, pi, d) <= 1e-10);
        CHECK(policy_return(m, pi) == doctest::Approx(policy_return_iterative(m, pi)).epsilon(1e-8));
    }
}

TEST_CASE("malformed MDPs are rejected") {
    auto m = single_state(1.0, 0.9);
    m.P[0](0) = 0.9;
    CHECK_THROWS_AS(m.validate(), InputError);
    auto g = single_state(1.0, 1.0);
    CHECK_THROWS_AS(g.validate(), InputError);
}

TEST_CASE("performance bound examples") {
    auto rng = make_rng(31, 0);
    const auto m = random_mdp(rng, 4, 2, 0.9);
    const auto pb = random_policy(rng, 4, 2);
    const auto same = check_performance_bound(m, pb, pb);
    CHECK(same.epsilon == 0.0);
    CHECK(same.lhs == doctest::Approx(same.eta_beta));
    CHECK(same.holds);
    CHECK(same.slack >= 0.0);

    const auto a = TabularPolicy::deterministic({0, 0, 0, 0}, 2);
    const auto b = TabularPolicy::deterministic({1, 1, 1, 1}, 2);
    const auto disjoint = check_performance_bound(m, a, b);
    CHECK(disjoint.epsilon == doctest::Approx(1.0));
    const double scale = 2.0 * m.r_max / ((1.0 - m.gamma) * (1.0 - m.gamma));
    CHECK(disjoint.rhs == doctest::Approx(disjoint.eta_beta + scale));
    CHECK(disjoint.rhs - disjoint.eta_beta >= m.r_max / (1.0 - m.gamma));
    CHECK(disjoint.holds);
}

TEST_CASE("performance bound suite is thread-count independent") {
    const auto ser = run_performance_bound_suite(3, 60, false);
    const auto par = run_performance_bound_suite(3, 60, true);
    CHECK(ser.violations == 0);
    CHECK(ser.instances == 60);
    CHECK(ser.min_slack == par.min_slack);
}

TEST_CASE("distribution shift examples") {
    auto rng = make_rng(41, 0);
    const auto m = random_lipschitz_mdp(rng, 5, 6, 0.9);
    std::vector<std::vector<int>> data(5, std::vector<int>{2});
    const std::vector<int> pi1(5, 2);
    const auto eq = check_distribution_shift(m, data, pi1, 0.0);
    CHECK(eq.d_tv == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(eq.bound == 0.0);
    CHECK(eq.holds);

    auto myopic = random_lipschitz_mdp(rng, 5, 6, 0.0);
    const std::vector<int> near(5, 3);
    const double eps = std::abs(myopic.action_coords[3] - myopic.action_coords[2]);
    const auto g0 = check_distribution_shift(myopic, data, near, eps);
    CHECK(g0.d_tv == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(g0.holds);

    const auto far = std::vector<int>(5, 5);
    CHECK_THROWS_AS(check_distribution_shift(m, data, far, 0.01), InputError);
}

TEST_CASE("distribution shift suite holds on random Lipschitz MDPs") {
    const auto s = run_distribution_shift_suite(5, 100, {0.05, 0.1, 0.2}, false);
    CHECK(s.instances == 300);
    CHECK(s.violations == 0);
    CHECK(s.min_slack >= 0.0);
}

TEST_CASE("constrained target analytic cases") {
    auto q = [](std::span<const double> a) { return -(a[0] - 0.3) * (a[0] - 0.3); };
    const std::vector<std::vector<double>> at_zero{{0.0}};
    const auto wide = brute_force_constrained_target(q, at_zero, std::vector<double>{0.5}, 1000);
    CHECK(wide.value == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(wide.argmax[0] == doctest::Approx(0.3).epsilon(1e-3));
    const auto narrow = brute_force_constrained_target(q, at_zero, std::vector<double>{0.2}, 1000);
    CHECK(narrow.value == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(narrow.argmax[0] == doctest::Approx(0.2).epsilon(1e-6));

    // monotone up to one grid step: grids of different radii are not nested
    double prev = -1e9;
    for (double r = 0.0; r <= 0.5; r += 0.05) {
        const double v = brute_force_constrained_target(q, at_zero, std::vector<double>{r}, 1000).value;
        const double step = 2.0 * r / 999.0;
        CHECK(v >= prev - 0.6 * step);
        prev = v;
    }
}

TEST_CASE("union maximum is the best neighborhood and stable under resolution") {
    auto q = [](std::span<const double> a) { return std::sin(6.0 * a[0]) + 0.5 * std::cos(11.0 * a[0]); };
    const std::vector<std::vector<double>> acts{{-1.0}, {1.0}};
    const std::vector<double> radii{0.1, 0.5};
    const auto fine = brute_force_constrained_target(q, acts, radii, 4000);
    const auto coarse = brute_force_constrained_target(q, acts, radii, 2000);
    CHECK(fine.value == std::max(fine.per_action[0].value, fine.per_action[1].value));
    // Lipschitz constant of q is at most 11.5; one coarse grid step is 1 / 2000
    CHECK(std::abs(fine.value - coarse.value) <= 11.5 * (1.0 / 2000.0));

    const auto ser = brute_force_constrained_target(q, acts, radii, 2000, std::nullopt, Exec::serial);
    CHECK(ser.value == coarse.value);
    CHECK(ser.argmax == coarse.argmax);
}

TEST_CASE("constrained target preconditions") {
    auto q = [](std::span<const double>) { return 0.0; };
    CHECK_THROWS_AS(brute_force_constrained_target(q, {}, std::vector<double>{}, 1000), InputError);
    CHECK_THROWS_AS(brute_force_constrained_target(q, {{0.0}}, std::vector<double>{-1.0}, 1000), InputError);
    CHECK_THROWS_AS(brute_force_constrained_target(q, {{0.0}}, std::vector<double>{0.1}, 999), InputError);
    CHECK_THROWS_AS(brute_force_constrained_target(q, {{0.0, 0.0, 0.0}}, std::vector<double>{0.1}, 1000), InputError);
}
