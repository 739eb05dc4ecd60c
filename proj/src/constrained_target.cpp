#include "anq/constrained_target.hpp"

#include <cmath>
#include <limits>

#include "anq/errors.hpp"
#include "grid_kernels.hpp"

namespace anq::oracle {

namespace {

constexpr int kMinResolution = 1000;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double grid_coord(double lo, double hi, int resolution, std::int64_t k) {
    if (resolution == 1 || hi == lo) return lo;
    if (k == resolution - 1) return hi;
    return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(resolution - 1);
}

NeighborhoodMax scan_ball(const ActionValueFn& q, std::span<const double> center, double radius, int resolution,
                          std::optional<double> box, Exec exec) {
    const auto dim = static_cast<int>(center.size());
    const int res = radius > 0.0 ? resolution : 1;
    const std::int64_t count = dim == 1 ? res : static_cast<std::int64_t>(res) * res;
    const double r2 = radius * radius;

    auto point = [&](std::int64_t i, double* out) {
        if (dim == 1) {
            out[0] = grid_coord(center[0] - radius, center[0] + radius, res, i);
        } else {
            out[0] = grid_coord(center[0] - radius, center[0] + radius, res, i / res);
            out[1] = grid_coord(center[1] - radius, center[1] + radius, res, i % res);
        }
    };
    auto eval = [&](std::int64_t i) {
        double p[2];
        point(i, p);
        double d2 = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double d = p[j] - center[static_cast<std::size_t>(j)];
            d2 += d * d;
            if (box && std::abs(p[j]) > *box) return kNaN;
        }
        if (d2 > r2 * (1.0 + 1e-12)) return kNaN;
        return q(std::span<const double>(p, static_cast<std::size_t>(dim)));
    };
    const auto best = kernels::argmax(count, exec, eval);
    NeighborhoodMax out;
    if (best.index < 0) {
        // The whole ball lies outside the box; the center is the only candidate.
        out.argmax.assign(center.begin(), center.end());
        out.value = q(center);
        return out;
    }
    double p[2];
    point(best.index, p);
    out.argmax.assign(p, p + dim);
    out.value = best.value;
    return out;
}

}  // namespace

ConstrainedTargetResult brute_force_constrained_target(const ActionValueFn& q,
                                                       const std::vector<std::vector<double>>& dataset_actions,
                                                       const std::vector<double>& radii, int grid_resolution,
                                                       std::optional<double> box_bound, Exec exec) {
    if (dataset_actions.empty()) throw InputError("brute_force_constrained_target: no dataset actions");
    if (radii.size() != dataset_actions.size()) throw InputError("brute_force_constrained_target: one radius per action");
    if (grid_resolution < kMinResolution) {
        throw InputError("brute_force_constrained_target: grid_resolution must be >= 1000");
    }
    const std::size_t dim = dataset_actions.front().size();
    if (dim != 1 && dim != 2) throw InputError("brute_force_constrained_target: action space must be 1-D or 2-D");

    ConstrainedTargetResult res;
    res.value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dataset_actions.size(); ++i) {
        if (dataset_actions[i].size() != dim) throw InputError("brute_force_constrained_target: mixed action dims");
        if (!(radii[i] >= 0.0) || !std::isfinite(radii[i])) {
            throw InputError("brute_force_constrained_target: radii must be finite and >= 0");
        }
        auto nb = scan_ball(q, dataset_actions[i], radii[i], grid_resolution, box_bound, exec);
        if (nb.value > res.value) {
            res.value = nb.value;
            res.argmax = nb.argmax;
            res.best_action = i;
        }
        res.per_action.push_back(std::move(nb));
    }
    return res;
}

ConstrainedTargetResult brute_force_constrained_target(const ActionValueFn& q,
                                                       const std::vector<std::vector<double>>& dataset_actions,
                                                       const RadiusFn& radius_fn, int grid_resolution,
                                                       std::optional<double> box_bound, Exec exec) {
    std::vector<double> radii;
    radii.reserve(dataset_actions.size());
    for (const auto& a : dataset_actions) radii.push_back(radius_fn(a));
    return brute_force_constrained_target(q, dataset_actions, radii, grid_resolution, box_bound, exec);
}

PenalizedMax brute_force_penalized(const ActionValueFn& q, std::span<const double> action, double penalty,
                                   double box_bound, int grid_resolution, Exec exec) {
    const auto dim = static_cast<int>(action.size());
    if (dim != 1 && dim != 2) throw InputError("brute_force_penalized: action space must be 1-D or 2-D");
    if (grid_resolution < 2) throw InputError("brute_force_penalized: grid_resolution must be >= 2");
    if (!(penalty >= 0.0) || !(box_bound > 0.0)) throw InputError("brute_force_penalized: bad penalty or bound");
    const int res = grid_resolution;
    const std::int64_t count = dim == 1 ? res : static_cast<std::int64_t>(res) * res;

    auto point = [&](std::int64_t i, double* out) {
        if (dim == 1) {
            out[0] = grid_coord(-box_bound, box_bound, res, i);
        } else {
            out[0] = grid_coord(-box_bound, box_bound, res, i / res);
            out[1] = grid_coord(-box_bound, box_bound, res, i % res);
        }
    };
    auto objective = [&](const double* p) {
        double d2 = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double d = p[j] - action[static_cast<std::size_t>(j)];
            d2 += d * d;
        }
        return q(std::span<const double>(p, static_cast<std::size_t>(dim))) - penalty * std::sqrt(d2);
    };
    const auto best = kernels::argmax(count, exec, [&](std::int64_t i) {
        double p[2];
        point(i, p);
        return objective(p);
    });

    PenalizedMax out;
    double p[2];
    point(best.index, p);
    out.argmax.assign(p, p + dim);
    out.objective = best.value;
    // The unperturbed action is always feasible and wins ties.
    const double stay = objective(action.data());
    if (stay >= out.objective) {
        out.objective = stay;
        out.argmax.assign(action.begin(), action.end());
    }
    double d2 = 0.0;
    for (int j = 0; j < dim; ++j) {
        const double d = out.argmax[static_cast<std::size_t>(j)] - action[static_cast<std::size_t>(j)];
        d2 += d * d;
    }
    out.delta_norm = std::sqrt(d2);
    return out;
}

}  // namespace anq::oracle
