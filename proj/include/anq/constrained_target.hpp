#pragma once

// Brute-force oracles for the neighborhood-constrained Bellman target on 1-D
// and 2-D action spaces. The learner's auxiliary policy and value network are
// checked against these grid enumerations.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "anq/exec.hpp"

namespace anq::oracle {

/// Black-box Q(s, .) at a fixed state.
using ActionValueFn = std::function<double(std::span<const double> action)>;
using RadiusFn = std::function<double(std::span<const double> dataset_action)>;

struct NeighborhoodMax {
    double value = 0.0;
    std::vector<double> argmax;
};

struct ConstrainedTargetResult {
    double value = 0.0;             // max over the union of neighborhoods
    std::vector<double> argmax;
    std::size_t best_action = 0;    // dataset action whose neighborhood attains it
    std::vector<NeighborhoodMax> per_action;
};

/// Enumerates a (grid_resolution)^d grid spanning each ball
/// {a + delta : ||delta||_2 <= radius} and returns the exact grid maximum of q
/// over the union. With box_bound set, grid points outside [-b, b]^d are
/// dropped. Throws InputError for empty actions, d not in {1, 2}, negative
/// radii, or grid_resolution < 1000.
ConstrainedTargetResult brute_force_constrained_target(const ActionValueFn& q,
                                                       const std::vector<std::vector<double>>& dataset_actions,
                                                       const std::vector<double>& radii, int grid_resolution,
                                                       std::optional<double> box_bound = std::nullopt,
                                                       Exec exec = Exec::parallel);

ConstrainedTargetResult brute_force_constrained_target(const ActionValueFn& q,
                                                       const std::vector<std::vector<double>>& dataset_actions,
                                                       const RadiusFn& radius_fn, int grid_resolution,
                                                       std::optional<double> box_bound = std::nullopt,
                                                       Exec exec = Exec::parallel);

struct PenalizedMax {
    double objective = 0.0;
    std::vector<double> argmax;  // the optimized action a + delta*
    double delta_norm = 0.0;
};

/// max over a' in [-b, b]^d of q(a') - penalty * ||a' - action||_2 by grid
/// enumeration (plus the point a' = action itself). The maximizer's distance
/// is the neighborhood radius at which the penalized and the ball-constrained
/// problems share a solution.
PenalizedMax brute_force_penalized(const ActionValueFn& q, std::span<const double> action, double penalty,
                                   double box_bound, int grid_resolution, Exec exec = Exec::parallel);

}  // namespace anq::oracle
