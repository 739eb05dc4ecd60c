#include "anq/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "anq/errors.hpp"
#include "anq/rng.hpp"

namespace anq::oracle {

namespace {

MatrixXd policy_transition(const TabularMDP& mdp, const TabularPolicy& pi) {
    MatrixXd p = MatrixXd::Zero(mdp.n_states, mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double w = pi.probs(s, a);
            if (w != 0.0) p.row(s) += w * mdp.next(s, a).transpose();
        }
    }
    return p;
}

VectorXd policy_reward(const TabularMDP& mdp, const TabularPolicy& pi) {
    return (pi.probs.array() * mdp.R.array()).rowwise().sum();
}

VectorXd random_simplex(std::mt19937_64& rng, int n, double sparsity = 0.0) {
    std::exponential_distribution<double> e(1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VectorXd p(n);
    for (int i = 0; i < n; ++i) p[i] = (u(rng) < sparsity) ? 0.0 : e(rng);
    if (p.sum() <= 0.0) p[std::uniform_int_distribution<int>(0, n - 1)(rng)] = 1.0;
    return p / p.sum();
}

double kl_divergence(const VectorXd& p, const VectorXd& q, bool& finite) {
    double kl = 0.0;
    finite = true;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) {
            finite = false;
            return std::numeric_limits<double>::infinity();
        }
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(kl, 0.0);
}

}  // namespace

void TabularMDP::validate() const {
    if (n_states < 1 || n_actions < 1) throw InputError("TabularMDP: needs at least one state and action");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("TabularMDP: gamma must lie in [0, 1)");
    if (P.size() != static_cast<std::size_t>(n_states * n_actions)) throw InputError("TabularMDP: P has wrong size");
    for (const auto& row : P) {
        if (row.size() != n_states || (row.array() < 0.0).any() || std::abs(row.sum() - 1.0) > 1e-12) {
            throw InputError("TabularMDP: every P(.|s,a) must be a distribution");
        }
    }
    if (R.rows() != n_states || R.cols() != n_actions || (R.array() < 0.0).any() || (R.array() > r_max).any()) {
        throw InputError("TabularMDP: rewards must lie in [0, r_max]");
    }
    if (d0.size() != n_states || (d0.array() < 0.0).any() || std::abs(d0.sum() - 1.0) > 1e-12) {
        throw InputError("TabularMDP: d0 must be a distribution");
    }
    if (lipschitz_kp) {
        if (action_coords.size() != static_cast<std::size_t>(n_actions)) {
            throw InputError("TabularMDP: Lipschitz MDP needs one coordinate per action");
        }
        for (int s = 0; s < n_states; ++s) {
            for (int a1 = 0; a1 < n_actions; ++a1) {
                for (int a2 = a1 + 1; a2 < n_actions; ++a2) {
                    const double l1 = (next(s, a1) - next(s, a2)).lpNorm<1>();
                    const double da = std::abs(action_coords[a1] - action_coords[a2]);
                    if (l1 > *lipschitz_kp * da + 1e-12) {
                        throw InputError("TabularMDP: stored K_P is violated");
                    }
                }
            }
        }
    }
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int n_actions) {
    TabularPolicy pi;
    pi.probs = MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] < 0 || actions[s] >= n_actions) throw InputError("deterministic policy: action out of range");
        pi.probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    return pi;
}

void TabularPolicy::validate(int n_states, int n_actions) const {
    if (probs.rows() != n_states || probs.cols() != n_actions) throw InputError("TabularPolicy: shape mismatch");
    for (Eigen::Index s = 0; s < probs.rows(); ++s) {
        if ((probs.row(s).array() < 0.0).any() || std::abs(probs.row(s).sum() - 1.0) > 1e-9) {
            throw InputError("TabularPolicy: rows must be distributions");
        }
    }
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double tol) {
    if (!(tol > 0.0)) throw InputError("value_iteration: tol must be > 0");
    mdp.validate();
    ValueIterationResult res;
    res.q = MatrixXd::Zero(mdp.n_states, mdp.n_actions);
    // Bellman optimality backup until the fixed-point residual is below tol.
    while (true) {
        const VectorXd v = res.q.rowwise().maxCoeff();
        MatrixXd next_q(mdp.n_states, mdp.n_actions);
        for (int s = 0; s < mdp.n_states; ++s) {
            for (int a = 0; a < mdp.n_actions; ++a) {
                next_q(s, a) = mdp.R(s, a) + mdp.gamma * mdp.next(s, a).dot(v);
            }
        }
        res.residual = (next_q - res.q).cwiseAbs().maxCoeff();
        res.q = std::move(next_q);
        ++res.iterations;
        if (res.residual <= tol * (1.0 - mdp.gamma) || mdp.gamma == 0.0) break;
    }
    // Report the residual of the returned table itself.
    const VectorXd v = res.q.rowwise().maxCoeff();
    double residual = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            residual = std::max(residual, std::abs(mdp.R(s, a) + mdp.gamma * mdp.next(s, a).dot(v) - res.q(s, a)));
        }
    }
    res.residual = residual;
    res.greedy.resize(static_cast<std::size_t>(mdp.n_states));
    for (int s = 0; s < mdp.n_states; ++s) {
        Eigen::Index best = 0;
        res.q.row(s).maxCoeff(&best);
        res.greedy[static_cast<std::size_t>(s)] = static_cast<int>(best);
    }
    return res;
}

VectorXd state_occupancy(const TabularMDP& mdp, const TabularPolicy& pi) {
    pi.validate(mdp.n_states, mdp.n_actions);
    const MatrixXd p = policy_transition(mdp, pi);
    const MatrixXd a = MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p.transpose();
    return (1.0 - mdp.gamma) * a.partialPivLu().solve(mdp.d0);
}

double policy_return(const TabularMDP& mdp, const TabularPolicy& pi) {
    const VectorXd d = state_occupancy(mdp, pi);
    return d.dot(policy_reward(mdp, pi)) / (1.0 - mdp.gamma);
}

double policy_return_iterative(const TabularMDP& mdp, const TabularPolicy& pi, double tol) {
    pi.validate(mdp.n_states, mdp.n_actions);
    const MatrixXd p = policy_transition(mdp, pi);
    const VectorXd r = policy_reward(mdp, pi);
    VectorXd v = VectorXd::Zero(mdp.n_states);
    for (int it = 0; it < 1'000'000; ++it) {
        VectorXd next = r + mdp.gamma * p * v;
        const double diff = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        if (diff <= tol * (1.0 - mdp.gamma)) break;
    }
    return mdp.d0.dot(v);
}

double occupancy_flow_residual(const TabularMDP& mdp, const TabularPolicy& pi, const VectorXd& d) {
    const MatrixXd p = policy_transition(mdp, pi);
    const VectorXd rhs = (1.0 - mdp.gamma) * mdp.d0 + mdp.gamma * p.transpose() * d;
    return (rhs - d).cwiseAbs().maxCoeff();
}

double total_variation(const VectorXd& p, const VectorXd& q) {
    if (p.size() != q.size()) throw InputError("total_variation: size mismatch");
    return 0.5 * (p - q).lpNorm<1>();
}

PerformanceBoundReport check_performance_bound(const TabularMDP& mdp, const TabularPolicy& pi,
                                               const TabularPolicy& pi_beta) {
    mdp.validate();
    PerformanceBoundReport rep;
    rep.lhs = policy_return(mdp, pi);
    rep.eta_beta = policy_return(mdp, pi_beta);
    const double coef = 2.0 * mdp.r_max / ((1.0 - mdp.gamma) * (1.0 - mdp.gamma));

    double max_tv = 0.0;
    double max_kl_fwd = 0.0;
    double max_kl_rev = 0.0;
    bool fwd_ok = true;
    bool rev_ok = true;
    for (int s = 0; s < mdp.n_states; ++s) {
        const VectorXd p = pi.probs.row(s).transpose();
        const VectorXd q = pi_beta.probs.row(s).transpose();
        max_tv = std::max(max_tv, total_variation(p, q));
        bool finite = true;
        const double f = kl_divergence(p, q, finite);
        if (finite) max_kl_fwd = std::max(max_kl_fwd, f); else fwd_ok = false;
        const double r = kl_divergence(q, p, finite);
        if (finite) max_kl_rev = std::max(max_kl_rev, r); else rev_ok = false;
    }

    rep.epsilon = max_tv * max_tv;
    rep.rhs = rep.eta_beta + coef * std::sqrt(rep.epsilon);
    rep.slack = rep.rhs - rep.lhs;
    rep.holds = rep.lhs <= rep.rhs + 1e-9;
    rep.routes.push_back({"tv", rep.epsilon, rep.rhs, rep.holds});

    // KL(pi || pi_beta) <= 2 eps and KL(pi_beta || pi) <= 2 eps routes.
    if (fwd_ok) {
        const double eps = max_kl_fwd / 2.0;
        const double rhs = rep.eta_beta + coef * std::sqrt(eps);
        rep.routes.push_back({"kl_forward", eps, rhs, rep.lhs <= rhs + 1e-9});
    } else {
        rep.notes.emplace_back("kl_forward skipped: pi puts mass outside the support of pi_beta");
    }
    if (rev_ok) {
        const double eps = max_kl_rev / 2.0;
        const double rhs = rep.eta_beta + coef * std::sqrt(eps);
        rep.routes.push_back({"kl_reverse", eps, rhs, rep.lhs <= rhs + 1e-9});
    } else {
        rep.notes.emplace_back("kl_reverse skipped: pi_beta puts mass outside the support of pi");
    }
    for (const auto& route : rep.routes) rep.holds = rep.holds && route.holds;
    return rep;
}

DistributionShiftReport check_distribution_shift(const TabularMDP& mdp,
                                                 const std::vector<std::vector<int>>& dataset_actions,
                                                 const std::vector<int>& pi1, double epsilon) {
    mdp.validate();
    if (!mdp.lipschitz_kp) throw InputError("check_distribution_shift: MDP was not constructed Lipschitz");
    if (!(epsilon >= 0.0)) throw InputError("check_distribution_shift: epsilon must be >= 0");
    if (dataset_actions.size() != static_cast<std::size_t>(mdp.n_states) ||
        pi1.size() != static_cast<std::size_t>(mdp.n_states)) {
        throw InputError("check_distribution_shift: need one entry per state");
    }
    const auto& x = mdp.action_coords;
    DistributionShiftReport rep;
    rep.pi2 = pi1;
    for (int s = 0; s < mdp.n_states; ++s) {
        const auto& acts = dataset_actions[static_cast<std::size_t>(s)];
        if (acts.empty()) continue;
        const double target = x[static_cast<std::size_t>(pi1[static_cast<std::size_t>(s)])];
        int best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int a : acts) {
            const double dist = std::abs(x[static_cast<std::size_t>(a)] - target);
            if (dist < best_dist || (dist == best_dist && a < best)) {
                best = a;
                best_dist = dist;
            }
        }
        if (best_dist > epsilon + 1e-12) {
            throw InputError("check_distribution_shift: pi1 leaves the epsilon-neighborhood at state " +
                             std::to_string(s));
        }
        rep.pi2[static_cast<std::size_t>(s)] = best;
    }
    const VectorXd d1 = state_occupancy(mdp, TabularPolicy::deterministic(pi1, mdp.n_actions));
    const VectorXd d2 = state_occupancy(mdp, TabularPolicy::deterministic(rep.pi2, mdp.n_actions));
    rep.d_tv = total_variation(d1, d2);
    rep.bound = mdp.gamma * *mdp.lipschitz_kp * epsilon / (2.0 * (1.0 - mdp.gamma));
    rep.slack = rep.bound - rep.d_tv;
    rep.holds = rep.d_tv <= rep.bound + 1e-12;
    return rep;
}

TabularMDP random_mdp(std::mt19937_64& rng, int n_states, int n_actions, double gamma, double r_max) {
    TabularMDP mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    mdp.r_max = r_max;
    std::uniform_real_distribution<double> u(0.0, r_max);
    mdp.R = MatrixXd::NullaryExpr(n_states, n_actions, [&]() { return u(rng); });
    mdp.P.reserve(static_cast<std::size_t>(n_states * n_actions));
    for (int i = 0; i < n_states * n_actions; ++i) mdp.P.push_back(random_simplex(rng, n_states, 0.3));
    mdp.d0 = random_simplex(rng, n_states);
    return mdp;
}

TabularPolicy random_policy(std::mt19937_64& rng, int n_states, int n_actions, double sparsity) {
    TabularPolicy pi;
    pi.probs.resize(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) pi.probs.row(s) = random_simplex(rng, n_actions, sparsity).transpose();
    return pi;
}

TabularMDP random_lipschitz_mdp(std::mt19937_64& rng, int n_states, int n_actions, double gamma) {
    if (n_actions < 2) throw InputError("random_lipschitz_mdp: needs at least two actions");
    TabularMDP mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    mdp.r_max = 1.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    mdp.R = MatrixXd::NullaryExpr(n_states, n_actions, [&]() { return u(rng); });
    for (int a = 0; a < n_actions; ++a) mdp.action_coords.push_back(static_cast<double>(a) / (n_actions - 1));
    mdp.P.assign(static_cast<std::size_t>(n_states * n_actions), VectorXd());
    double kp = 0.0;
    for (int s = 0; s < n_states; ++s) {
        const VectorXd p0 = random_simplex(rng, n_states, 0.3);
        const VectorXd p1 = random_simplex(rng, n_states, 0.3);
        kp = std::max(kp, (p0 - p1).lpNorm<1>());
        for (int a = 0; a < n_actions; ++a) {
            const double t = mdp.action_coords[static_cast<std::size_t>(a)];
            VectorXd row = (1.0 - t) * p0 + t * p1;
            mdp.next(s, a) = row / row.sum();
        }
    }
    mdp.lipschitz_kp = kp;
    mdp.d0 = random_simplex(rng, n_states);
    return mdp;
}

}  // namespace anq::oracle
