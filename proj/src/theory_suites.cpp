#include <algorithm>
#include <limits>

#include "anq/rng.hpp"
#include "anq/tabular.hpp"

namespace anq::oracle {

namespace {

struct TrialResult {
    double lhs = 0;
    double rhs = 0;
    double slack = 0;
    bool holds = false;
};

TrialResult performance_trial(std::uint64_t seed, std::int64_t index) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(index));
    std::uniform_int_distribution<int> states(2, 8);
    std::uniform_int_distribution<int> actions(2, 5);
    std::uniform_real_distribution<double> gamma(0.1, 0.99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n_s = states(rng);
    const int n_a = actions(rng);
    const TabularMDP mdp = random_mdp(rng, n_s, n_a, gamma(rng), 1.0 + 4.0 * unit(rng));
    const TabularPolicy pi_beta = random_policy(rng, n_s, n_a, 0.2);
    TabularPolicy pi;
    const double kind = unit(rng);
    if (kind < 0.1) {
        pi = pi_beta;  // eps = 0
    } else if (kind < 0.4) {
        // The greedy optimal policy: the regime where the bound is tightest.
        pi = TabularPolicy::deterministic(value_iteration(mdp, 1e-10).greedy, n_a);
    } else if (kind < 0.7) {
        // Small perturbation of the behavior policy.
        const TabularPolicy noise = random_policy(rng, n_s, n_a);
        const double mix = 0.2 * unit(rng);
        pi.probs = (1.0 - mix) * pi_beta.probs + mix * noise.probs;
    } else {
        pi = random_policy(rng, n_s, n_a, 0.3);
    }
    const auto rep = check_performance_bound(mdp, pi, pi_beta);
    return {rep.lhs, rep.rhs, rep.slack, rep.holds};
}

TrialResult shift_trial(std::uint64_t seed, std::int64_t index, double epsilon) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(index));
    std::uniform_int_distribution<int> states(2, 8);
    std::uniform_int_distribution<int> actions(5, 21);
    std::uniform_real_distribution<double> gamma(0.1, 0.99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n_s = states(rng);
    const int n_a = actions(rng);
    const TabularMDP mdp = random_lipschitz_mdp(rng, n_s, n_a, gamma(rng));
    const auto& x = mdp.action_coords;

    std::vector<std::vector<int>> dataset(static_cast<std::size_t>(n_s));
    std::vector<int> pi1(static_cast<std::size_t>(n_s));
    std::uniform_int_distribution<int> any_action(0, n_a - 1);
    for (int s = 0; s < n_s; ++s) {
        auto& acts = dataset[static_cast<std::size_t>(s)];
        if (unit(rng) < 0.85) {
            const int k = 1 + any_action(rng) % 3;
            for (int j = 0; j < k; ++j) acts.push_back(any_action(rng));
            std::sort(acts.begin(), acts.end());
            acts.erase(std::unique(acts.begin(), acts.end()), acts.end());
            const int anchor = acts[static_cast<std::size_t>(any_action(rng)) % acts.size()];
            std::vector<int> within;
            for (int a = 0; a < n_a; ++a) {
                if (std::abs(x[static_cast<std::size_t>(a)] - x[static_cast<std::size_t>(anchor)]) <= epsilon + 1e-12) {
                    within.push_back(a);
                }
            }
            pi1[static_cast<std::size_t>(s)] = within[static_cast<std::size_t>(any_action(rng)) % within.size()];
        } else {
            pi1[static_cast<std::size_t>(s)] = any_action(rng);
        }
    }
    const auto rep = check_distribution_shift(mdp, dataset, pi1, epsilon);
    return {rep.d_tv, rep.bound, rep.slack, rep.holds};
}

template <typename Trial>
TheorySuiteSummary run_suite(std::int64_t count, bool parallel, Trial&& trial, nlohmann::json* trials,
                             const nlohmann::json& tag) {
    std::vector<TrialResult> results(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (std::int64_t i = 0; i < count; ++i) results[static_cast<std::size_t>(i)] = trial(i);
    } else {
        for (std::int64_t i = 0; i < count; ++i) results[static_cast<std::size_t>(i)] = trial(i);
    }
    TheorySuiteSummary summary;
    summary.instances = count;
    summary.min_slack = std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < count; ++i) {
        const auto& r = results[static_cast<std::size_t>(i)];
        if (!r.holds) ++summary.violations;
        summary.min_slack = std::min(summary.min_slack, r.slack);
        if (trials != nullptr) {
            nlohmann::json row = tag;
            row["instance"] = i;
            row["lhs"] = r.lhs;
            row["rhs"] = r.rhs;
            row["slack"] = r.slack;
            row["holds"] = r.holds;
            trials->push_back(std::move(row));
        }
    }
    return summary;
}

}  // namespace

TheorySuiteSummary run_performance_bound_suite(std::uint64_t seed, std::int64_t instances, bool parallel,
                                               nlohmann::json* trials) {
    return run_suite(
        instances, parallel, [seed](std::int64_t i) { return performance_trial(seed, i); }, trials,
        {{"check", "performance_bound"}, {"seed", seed}});
}

TheorySuiteSummary run_distribution_shift_suite(std::uint64_t seed, std::int64_t instances,
                                                const std::vector<double>& epsilons, bool parallel,
                                                nlohmann::json* trials) {
    TheorySuiteSummary total;
    total.min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        const double eps = epsilons[e];
        const auto sub_seed = derive_seed(seed, e);
        const auto s = run_suite(
            instances, parallel, [sub_seed, eps](std::int64_t i) { return shift_trial(sub_seed, i, eps); }, trials,
            {{"check", "distribution_shift"}, {"seed", seed}, {"epsilon", eps}});
        total.instances += s.instances;
        total.violations += s.violations;
        total.min_slack = std::min(total.min_slack, s.min_slack);
    }
    return total;
}

}  // namespace anq::oracle
