#pragma once

// Exact finite-MDP machinery: value iteration, occupancy measures, and the
// numeric checks of the density-constraint performance bound and the
// neighborhood-constraint distribution-shift bound.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace anq::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct TabularMDP {
    int n_states = 0;
    int n_actions = 0;
    /// P[s * n_actions + a] is the next-state distribution for (s, a).
    std::vector<VectorXd> P;
    MatrixXd R;  // n_states x n_actions, entries in [0, r_max]
    double gamma = 0.9;
    VectorXd d0;
    double r_max = 1.0;
    /// Action coordinates on a 1-D interval (size n_actions) when the MDP was
    /// built Lipschitz in the action; K_P is then exact.
    std::vector<double> action_coords;
    std::optional<double> lipschitz_kp;

    const VectorXd& next(int s, int a) const { return P[static_cast<std::size_t>(s * n_actions + a)]; }
    VectorXd& next(int s, int a) { return P[static_cast<std::size_t>(s * n_actions + a)]; }

    /// Throws InputError if P rows or d0 do not sum to 1 (tol 1e-12), rewards
    /// leave [0, r_max], gamma is outside [0, 1), or a stored K_P is violated.
    void validate() const;
};

struct TabularPolicy {
    MatrixXd probs;  // n_states x n_actions, rows sum to 1

    static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions);
    void validate(int n_states, int n_actions) const;
};

struct ValueIterationResult {
    MatrixXd q;
    std::vector<int> greedy;
    double residual = 0.0;
    int iterations = 0;
};

ValueIterationResult value_iteration(const TabularMDP& mdp, double tol);

/// Discounted state occupancy d^pi = (1-gamma) (I - gamma P_pi^T)^-1 d0.
VectorXd state_occupancy(const TabularMDP& mdp, const TabularPolicy& pi);

/// Expected discounted return via the occupancy linear system.
double policy_return(const TabularMDP& mdp, const TabularPolicy& pi);

/// Same quantity by iterating the policy Bellman operator; the independent
/// cross-check for policy_return.
double policy_return_iterative(const TabularMDP& mdp, const TabularPolicy& pi, double tol = 1e-12);

/// Residual of d = (1-gamma) d0 + gamma P_pi^T d in the sup norm.
double occupancy_flow_residual(const TabularMDP& mdp, const TabularPolicy& pi, const VectorXd& d);

/// Total variation, 0.5 * ||p - q||_1.
double total_variation(const VectorXd& p, const VectorXd& q);

struct BoundRoute {
    std::string name;    // "tv", "kl_forward", "kl_reverse"
    double epsilon = 0;  // the epsilon that makes the route's condition tight
    double rhs = 0;
    bool holds = false;
};

struct PerformanceBoundReport {
    double lhs = 0;        // eta(pi)
    double eta_beta = 0;   // eta(pi_beta)
    double epsilon = 0;    // (max_s TV(pi, pi_beta)[s])^2
    double rhs = 0;
    double slack = 0;      // rhs - lhs
    bool holds = false;
    std::vector<BoundRoute> routes;
    std::vector<std::string> notes;
};

PerformanceBoundReport check_performance_bound(const TabularMDP& mdp, const TabularPolicy& pi,
                                               const TabularPolicy& pi_beta);

struct DistributionShiftReport {
    double d_tv = 0;
    double bound = 0;
    double slack = 0;
    bool holds = false;
    std::vector<int> pi2;
};

/// dataset_actions[s] lists the action indices observed at state s (may be
/// empty). pi1 must be deterministic and within epsilon of a dataset action at
/// every state that has one. pi2 snaps to the nearest dataset action (ties
/// toward the smaller index) and copies pi1 elsewhere.
DistributionShiftReport check_distribution_shift(const TabularMDP& mdp,
                                                 const std::vector<std::vector<int>>& dataset_actions,
                                                 const std::vector<int>& pi1, double epsilon);

// Random instance generators used by the verifier suites.
TabularMDP random_mdp(std::mt19937_64& rng, int n_states, int n_actions, double gamma, double r_max = 1.0);
TabularPolicy random_policy(std::mt19937_64& rng, int n_states, int n_actions, double sparsity = 0.0);
/// P(.|s,a) = (1 - x_a) P0(.|s) + x_a P1(.|s) with x_a on a uniform grid in
/// [0, 1]; K_P = max_s ||P0(s) - P1(s)||_1 exactly.
TabularMDP random_lipschitz_mdp(std::mt19937_64& rng, int n_states, int n_actions, double gamma);

struct TheorySuiteSummary {
    std::int64_t instances = 0;
    std::int64_t violations = 0;
    double min_slack = 0;
};

/// Runs check_performance_bound on `instances` random triples. Instance i
/// draws from an RNG seeded by (seed, i), so results are independent of the
/// thread count. `parallel` selects the OpenMP path.
TheorySuiteSummary run_performance_bound_suite(std::uint64_t seed, std::int64_t instances, bool parallel,
                                               nlohmann::json* trials = nullptr);

/// Runs check_distribution_shift on random Lipschitz MDPs for each epsilon.
TheorySuiteSummary run_distribution_shift_suite(std::uint64_t seed, std::int64_t instances,
                                                const std::vector<double>& epsilons, bool parallel,
                                                nlohmann::json* trials = nullptr);

}  // namespace anq::oracle
