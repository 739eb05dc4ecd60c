#pragma once

// Support approximation by unions of balls: Hausdorff distance on grids,
// greedy covering numbers, the sample-size bound and Monte Carlo coverage.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "anq/exec.hpp"

namespace anq::geometry {

/// Flat list of points in R^dim (dim in 1..3), row-major.
struct PointSet {
    int dim = 2;
    std::vector<double> coords;

    std::size_t size() const { return dim > 0 ? coords.size() / static_cast<std::size_t>(dim) : 0; }
    std::span<const double> point(std::size_t i) const {
        return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    void push(std::span<const double> p) { coords.insert(coords.end(), p.begin(), p.end()); }
};

struct Box {
    std::array<double, 3> lo{};
    std::array<double, 3> hi{};
};

class SupportSpec {
public:
    enum class Shape { box, disk, annulus, two_clusters };

    /// [0, side]^d, d in 1..3.
    static SupportSpec box(int d, double side);
    /// Disk around the origin; radius 0 is a single point.
    static SupportSpec disk(double radius);
    static SupportSpec annulus(double r_in, double r_out);
    static SupportSpec two_clusters(std::array<std::array<double, 2>, 2> centers, std::array<double, 2> radii);

    Shape shape() const { return shape_; }
    int dim() const { return dim_; }
    std::string name() const;
    nlohmann::json to_json() const;

    /// Euclidean distance from p to the set (0 inside).
    double distance(std::span<const double> p) const;
    bool contains(std::span<const double> p, double tol = 1e-12) const { return distance(p) <= tol; }
    Box bbox() const;
    double diameter() const;
    /// Uniform sample from the support.
    void sample(std::mt19937_64& rng, double* out) const;

    /// Standardness constants nu(B(x, r)) >= c0 r^d for r <= r0, when known.
    std::optional<double> r0() const { return r0_; }
    std::optional<double> c0() const { return c0_; }

private:
    Shape shape_ = Shape::box;
    int dim_ = 2;
    double side_ = 1.0;
    double r_in_ = 0.0;
    double r_out_ = 1.0;
    std::array<std::array<double, 2>, 2> centers_{};
    std::array<double, 2> radii_{};
    std::optional<double> r0_;
    std::optional<double> c0_;
};

struct BallUnion {
    PointSet centers;
    std::vector<double> radii;  // one per center

    static BallUnion uniform(PointSet centers, double radius);
    void validate() const;
    double min_radius() const;
    double max_radius() const;
    /// max(0, min_i ||p - X_i|| - r_i), by brute force.
    double distance(std::span<const double> p) const;
    Box bbox() const;
};

/// Regular grid over a box: per axis lo, lo + step, ..., hi (hi always included).
PointSet grid_points(const Box& box, int dim, double step);

struct HausdorffReport {
    double distance = 0.0;
    double support_side = 0.0;   // sup over S of the distance to U
    double union_side = 0.0;     // sup over U of the distance to S
    double grid_tolerance = 0.0; // one grid diagonal
    std::int64_t support_points = 0;
    std::int64_t union_points = 0;
    bool early_exit = false;
};

/// Hausdorff distance between the support and the union, both discretized on a
/// grid of the given step. Requires 0 < grid_step <= eps / 10 (eps the
/// smallest ball radius). With stop_above set, returns as soon as either
/// directed term exceeds it (early_exit = true, distance is a lower bound).
HausdorffReport hausdorff_distance(const SupportSpec& support, const BallUnion& u, double grid_step,
                                   Exec exec = Exec::parallel, std::optional<double> stop_above = std::nullopt);

/// Hausdorff distance between two finite point sets.
double hausdorff_point_sets(const PointSet& a, const PointSet& b, Exec exec = Exec::parallel);

struct CoveringReport {
    std::int64_t count = 0;       // greedy count, an upper bound on the grid covering number
    double radius = 0.0;
    double grid_step = 0.0;
    std::int64_t grid_points = 0;
    PointSet centers;
};

/// Lazy greedy set cover of the support's grid points by radius balls
/// centered on grid points. grid_step defaults to radius / 8, snapped so the
/// bbox midpoint is on the grid.
CoveringReport covering_number(const SupportSpec& support, double radius,
                               std::optional<double> grid_step = std::nullopt);

/// ceil((ln N + ln(1/delta)) / (C0 (eps/2)^d)).
std::int64_t required_n(double covering_n, double c0, double epsilon, int d, double delta);
/// The same bound before the ceiling.
double required_n_bound(double covering_n, double c0, double epsilon, int d, double delta);

struct CoverageReport {
    std::int64_t n = 0;
    std::int64_t trials = 0;
    std::int64_t successes = 0;
    double epsilon = 0.0;
    double frequency = 0.0;
    double ci_low = 0.0;
    double ci_high = 1.0;
    double confidence = 0.95;
    double grid_step = 0.0;
    double grid_tolerance = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> distances;  // per trial (lower bounds for early exits)
    nlohmann::json to_json(const SupportSpec& support) const;
};

/// Clopper-Pearson interval for k successes out of n.
std::pair<double, double> clopper_pearson(std::int64_t k, std::int64_t n, double confidence = 0.95);

/// Repeats: draw n points from the support, form the eps-union and test
/// d_H <= eps + grid tolerance. Trial t draws from make_rng(seed, t).
CoverageReport coverage_trial(const SupportSpec& support, double epsilon, std::int64_t n, std::int64_t trials,
                              double grid_step, std::uint64_t seed, Exec exec = Exec::parallel);

}  // namespace anq::geometry
