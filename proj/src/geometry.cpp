#include "anq/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include <boost/math/distributions/beta.hpp>

#include "anq/errors.hpp"
#include "anq/rng.hpp"
#include "grid_kernels.hpp"

namespace anq::geometry {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double norm2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

double disk_distance(const double* p, const double* c, double r) {
    return std::max(0.0, std::hypot(p[0] - c[0], p[1] - c[1]) - r);
}

double unit_ball_volume(int d) {
    switch (d) {
        case 1: return 2.0;
        case 2: return std::numbers::pi;
        default: return 4.0 / 3.0 * std::numbers::pi;
    }
}

int axis_count(double lo, double hi, double step) {
    if (hi <= lo) return 1;
    return static_cast<int>(std::ceil((hi - lo) / step - 1e-9)) + 1;
}

double axis_coord(double lo, double hi, double step, int count, int k) {
    if (k == count - 1) return hi;
    return lo + step * k;
}

// Uniform bucket grid over ball centers answering max(0, min_i ||p - X_i|| - r_i).
class CenterIndex {
public:
    explicit CenterIndex(const BallUnion& u) : u_(u), dim_(u.centers.dim) {
        const Box b = center_box();
        rmax_ = u.max_radius();
        double extent = 0.0;
        for (int j = 0; j < dim_; ++j) extent = std::max(extent, b.hi[j] - b.lo[j]);
        const double per_axis = std::pow(static_cast<double>(u.centers.size()), 1.0 / dim_);
        cell_ = std::max({rmax_, extent / std::max(1.0, per_axis), 1e-12});
        for (int j = 0; j < 3; ++j) {
            lo_[j] = j < dim_ ? b.lo[j] : 0.0;
            dims_[j] = j < dim_ ? std::max(1, static_cast<int>(std::floor((b.hi[j] - b.lo[j]) / cell_)) + 1) : 1;
        }
        const std::size_t cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
        start_.assign(cells + 1, 0);
        std::vector<std::size_t> cell_of(u.centers.size());
        for (std::size_t i = 0; i < u.centers.size(); ++i) {
            cell_of[i] = flat(cell_coords(u.centers.point(i).data()));
            ++start_[cell_of[i] + 1];
        }
        for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
        items_.resize(u.centers.size());
        std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
        for (std::size_t i = 0; i < u.centers.size(); ++i) items_[fill[cell_of[i]]++] = i;
    }

    double distance(const double* p) const {
        const auto home = cell_coords_unclamped(p);
        double best = kInf;
        int max_ring = 0;
        for (int j = 0; j < dim_; ++j) {
            max_ring = std::max({max_ring, std::abs(home[j]), std::abs(home[j] - (dims_[j] - 1))});
        }
        for (int ring = 0; ring <= max_ring; ++ring) {
            visit_ring(home, ring, [&](std::size_t cell) {
                for (std::size_t k = start_[cell]; k < start_[cell + 1]; ++k) {
                    const std::size_t i = items_[k];
                    const double d =
                        std::sqrt(norm2({p, static_cast<std::size_t>(dim_)}, u_.centers.point(i))) - u_.radii[i];
                    best = std::min(best, d);
                }
            });
            if (best <= 0.0) return 0.0;
            // Unvisited centers sit at least ring * cell away from p.
            if (best <= ring * cell_ - rmax_) break;
        }
        return std::max(0.0, best);
    }

private:
    Box center_box() const {
        Box b;
        for (int j = 0; j < dim_; ++j) {
            b.lo[j] = kInf;
            b.hi[j] = -kInf;
        }
        for (std::size_t i = 0; i < u_.centers.size(); ++i) {
            const auto c = u_.centers.point(i);
            for (int j = 0; j < dim_; ++j) {
                b.lo[j] = std::min(b.lo[j], c[j]);
                b.hi[j] = std::max(b.hi[j], c[j]);
            }
        }
        return b;
    }
    std::array<int, 3> cell_coords_unclamped(const double* p) const {
        std::array<int, 3> c{0, 0, 0};
        for (int j = 0; j < dim_; ++j) c[j] = static_cast<int>(std::floor((p[j] - lo_[j]) / cell_));
        return c;
    }
    std::array<int, 3> cell_coords(const double* p) const {
        auto c = cell_coords_unclamped(p);
        for (int j = 0; j < dim_; ++j) c[j] = std::clamp(c[j], 0, dims_[j] - 1);
        return c;
    }
    std::size_t flat(const std::array<int, 3>& c) const {
        return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
    }
    template <typename F>
    void visit_ring(const std::array<int, 3>& home, int ring, F&& f) const {
        std::array<int, 3> lo{0, 0, 0}, hi{0, 0, 0};
        for (int j = 0; j < dim_; ++j) {
            lo[j] = std::max(home[j] - ring, 0);
            hi[j] = std::min(home[j] + ring, dims_[j] - 1);
            if (lo[j] > hi[j]) return;
        }
        for (int z = lo[2]; z <= hi[2]; ++z) {
            for (int y = lo[1]; y <= hi[1]; ++y) {
                for (int x = lo[0]; x <= hi[0]; ++x) {
                    const std::array<int, 3> c{x, y, z};
                    int cheb = 0;
                    for (int j = 0; j < dim_; ++j) cheb = std::max(cheb, std::abs(c[j] - home[j]));
                    if (cheb == ring) f(flat(c));
                }
            }
        }
    }

    const BallUnion& u_;
    int dim_;
    double rmax_ = 0.0;
    double cell_ = 1.0;
    std::array<double, 3> lo_{};
    std::array<int, 3> dims_{1, 1, 1};
    std::vector<std::size_t> start_;
    std::vector<std::size_t> items_;
};

// Max of eval over [0, count) in blocks, stopping once a block exceeds stop.
template <typename Eval>
double blocked_max(std::int64_t count, Exec exec, std::optional<double> stop, bool& stopped, Eval&& eval) {
    constexpr std::int64_t kBlock = 4096;
    double best = 0.0;
    for (std::int64_t start = 0; start < count; start += kBlock) {
        const std::int64_t len = std::min(kBlock, count - start);
        best = std::max(best, kernels::max_over(len, exec, 0.0, [&](std::int64_t i) { return eval(start + i); }));
        if (stop && best > *stop) {
            stopped = true;
            break;
        }
    }
    return best;
}

}  // namespace

// ---------------------------------------------------------------- SupportSpec

SupportSpec SupportSpec::box(int d, double side) {
    if (d < 1 || d > 3) throw InputError("SupportSpec::box: d must be 1, 2 or 3");
    if (!(side > 0.0) || !std::isfinite(side)) throw InputError("SupportSpec::box: side must be > 0");
    SupportSpec s;
    s.shape_ = Shape::box;
    s.dim_ = d;
    s.side_ = side;
    // Worst case is a corner: a 2^-d orthant of the ball, for r <= side.
    s.r0_ = side;
    s.c0_ = unit_ball_volume(d) / std::pow(2.0, d) / std::pow(side, d);
    return s;
}

SupportSpec SupportSpec::disk(double radius) {
    if (!(radius >= 0.0) || !std::isfinite(radius)) throw InputError("SupportSpec::disk: radius must be >= 0");
    SupportSpec s;
    s.shape_ = Shape::disk;
    s.dim_ = 2;
    s.r_out_ = radius;
    if (radius > 0.0) {
        // A boundary point keeps at least a quarter of the ball inside for r <= R.
        s.r0_ = radius;
        s.c0_ = 1.0 / (4.0 * radius * radius);
    }
    return s;
}

SupportSpec SupportSpec::annulus(double r_in, double r_out) {
    if (!(r_in >= 0.0) || !(r_out > r_in) || !std::isfinite(r_out)) {
        throw InputError("SupportSpec::annulus: need 0 <= r_in < r_out");
    }
    SupportSpec s;
    s.shape_ = Shape::annulus;
    s.dim_ = 2;
    s.r_in_ = r_in;
    s.r_out_ = r_out;
    return s;
}

SupportSpec SupportSpec::two_clusters(std::array<std::array<double, 2>, 2> centers, std::array<double, 2> radii) {
    if (!(radii[0] > 0.0) || !(radii[1] > 0.0)) throw InputError("SupportSpec::two_clusters: radii must be > 0");
    SupportSpec s;
    s.shape_ = Shape::two_clusters;
    s.dim_ = 2;
    s.centers_ = centers;
    s.radii_ = radii;
    return s;
}

std::string SupportSpec::name() const {
    switch (shape_) {
        case Shape::box: return "box";
        case Shape::disk: return "disk";
        case Shape::annulus: return "annulus";
        case Shape::two_clusters: return "two_clusters";
    }
    return "unknown";
}

nlohmann::json SupportSpec::to_json() const {
    nlohmann::json j{{"shape", name()}, {"dim", dim_}};
    switch (shape_) {
        case Shape::box: j["side"] = side_; break;
        case Shape::disk: j["radius"] = r_out_; break;
        case Shape::annulus:
            j["r_in"] = r_in_;
            j["r_out"] = r_out_;
            break;
        case Shape::two_clusters:
            j["centers"] = centers_;
            j["radii"] = radii_;
            break;
    }
    j["r0"] = r0_ ? nlohmann::json(*r0_) : nlohmann::json(nullptr);
    j["c0"] = c0_ ? nlohmann::json(*c0_) : nlohmann::json(nullptr);
    return j;
}

double SupportSpec::distance(std::span<const double> p) const {
    if (static_cast<int>(p.size()) != dim_) throw InputError("SupportSpec::distance: dimension mismatch");
    switch (shape_) {
        case Shape::box: {
            double s = 0.0;
            for (int j = 0; j < dim_; ++j) {
                const double d = p[j] < 0.0 ? -p[j] : (p[j] > side_ ? p[j] - side_ : 0.0);
                s += d * d;
            }
            return std::sqrt(s);
        }
        case Shape::disk: return std::max(0.0, std::hypot(p[0], p[1]) - r_out_);
        case Shape::annulus: {
            const double r = std::hypot(p[0], p[1]);
            if (r > r_out_) return r - r_out_;
            if (r < r_in_) return r_in_ - r;
            return 0.0;
        }
        case Shape::two_clusters:
            return std::min(disk_distance(p.data(), centers_[0].data(), radii_[0]),
                            disk_distance(p.data(), centers_[1].data(), radii_[1]));
    }
    return 0.0;
}

Box SupportSpec::bbox() const {
    Box b;
    switch (shape_) {
        case Shape::box:
            for (int j = 0; j < dim_; ++j) b.hi[j] = side_;
            break;
        case Shape::disk:
        case Shape::annulus:
            b.lo = {-r_out_, -r_out_, 0.0};
            b.hi = {r_out_, r_out_, 0.0};
            break;
        case Shape::two_clusters:
            for (int j = 0; j < 2; ++j) {
                b.lo[j] = std::min(centers_[0][j] - radii_[0], centers_[1][j] - radii_[1]);
                b.hi[j] = std::max(centers_[0][j] + radii_[0], centers_[1][j] + radii_[1]);
            }
            break;
    }
    return b;
}

double SupportSpec::diameter() const {
    switch (shape_) {
        case Shape::box: return side_ * std::sqrt(static_cast<double>(dim_));
        case Shape::disk:
        case Shape::annulus: return 2.0 * r_out_;
        case Shape::two_clusters: {
            const double c = std::hypot(centers_[0][0] - centers_[1][0], centers_[0][1] - centers_[1][1]);
            return std::max({2.0 * radii_[0], 2.0 * radii_[1], c + radii_[0] + radii_[1]});
        }
    }
    return 0.0;
}

void SupportSpec::sample(std::mt19937_64& rng, double* out) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (shape_ == Shape::box) {
        for (int j = 0; j < dim_; ++j) out[j] = side_ * unit(rng);
        return;
    }
    if (shape_ == Shape::disk && r_out_ == 0.0) {
        out[0] = out[1] = 0.0;
        return;
    }
    // Rejection from the bounding box gives the uniform law on the set.
    const Box b = bbox();
    for (;;) {
        out[0] = b.lo[0] + (b.hi[0] - b.lo[0]) * unit(rng);
        out[1] = b.lo[1] + (b.hi[1] - b.lo[1]) * unit(rng);
        if (distance({out, 2}) == 0.0) return;
    }
}

// ---------------------------------------------------------------- BallUnion

BallUnion BallUnion::uniform(PointSet centers, double radius) {
    BallUnion u;
    u.radii.assign(centers.size(), radius);
    u.centers = std::move(centers);
    u.validate();
    return u;
}

void BallUnion::validate() const {
    if (centers.dim < 1 || centers.dim > 3) throw InputError("BallUnion: dim must be 1..3");
    if (centers.size() == 0) throw InputError("BallUnion: need at least one center");
    if (radii.size() != centers.size()) throw InputError("BallUnion: one radius per center");
    for (double r : radii) {
        if (!(r > 0.0) || !std::isfinite(r)) throw InputError("BallUnion: radii must be > 0");
    }
}

double BallUnion::min_radius() const { return *std::min_element(radii.begin(), radii.end()); }
double BallUnion::max_radius() const { return *std::max_element(radii.begin(), radii.end()); }

double BallUnion::distance(std::span<const double> p) const {
    double best = kInf;
    for (std::size_t i = 0; i < centers.size(); ++i) best = std::min(best, std::sqrt(norm2(p, centers.point(i))) - radii[i]);
    return std::max(0.0, best);
}

Box BallUnion::bbox() const {
    Box b;
    for (int j = 0; j < centers.dim; ++j) {
        b.lo[j] = kInf;
        b.hi[j] = -kInf;
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const auto c = centers.point(i);
        for (int j = 0; j < centers.dim; ++j) {
            b.lo[j] = std::min(b.lo[j], c[j] - radii[i]);
            b.hi[j] = std::max(b.hi[j], c[j] + radii[i]);
        }
    }
    return b;
}

PointSet grid_points(const Box& box, int dim, double step) {
    if (!(step > 0.0)) throw InputError("grid_points: step must be > 0");
    std::array<int, 3> n{1, 1, 1};
    for (int j = 0; j < dim; ++j) n[j] = axis_count(box.lo[j], box.hi[j], step);
    PointSet out;
    out.dim = dim;
    out.coords.reserve(static_cast<std::size_t>(n[0]) * n[1] * n[2] * dim);
    double p[3];
    for (int z = 0; z < n[2]; ++z) {
        for (int y = 0; y < n[1]; ++y) {
            for (int x = 0; x < n[0]; ++x) {
                const int k[3] = {x, y, z};
                for (int j = 0; j < dim; ++j) p[j] = axis_coord(box.lo[j], box.hi[j], step, n[j], k[j]);
                out.push({p, static_cast<std::size_t>(dim)});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- Hausdorff

namespace {

PointSet support_grid(const SupportSpec& s, double step) {
    const PointSet all = grid_points(s.bbox(), s.dim(), step);
    PointSet in;
    in.dim = s.dim();
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (s.contains(all.point(i))) in.push(all.point(i));
    }
    return in;
}

HausdorffReport hausdorff_impl(const SupportSpec& support, const PointSet& s_grid, const BallUnion& u, double step,
                               Exec exec, std::optional<double> stop) {
    HausdorffReport rep;
    rep.grid_tolerance = step * std::sqrt(static_cast<double>(support.dim()));
    const CenterIndex index(u);

    rep.support_points = static_cast<std::int64_t>(s_grid.size());
    bool stopped = false;
    rep.support_side = blocked_max(rep.support_points, exec, stop, stopped, [&](std::int64_t i) {
        return index.distance(s_grid.point(static_cast<std::size_t>(i)).data());
    });
    if (stopped) {
        rep.early_exit = true;
        rep.distance = rep.support_side;
        return rep;
    }

    // U side: grid over the union's bbox, keeping points inside the union.
    const Box b = u.bbox();
    const int dim = support.dim();
    std::array<int, 3> n{1, 1, 1};
    for (int j = 0; j < dim; ++j) n[j] = axis_count(b.lo[j], b.hi[j], step);
    const std::int64_t total = static_cast<std::int64_t>(n[0]) * n[1] * n[2];
    std::int64_t inside = 0;
    rep.union_side = blocked_max(total, exec, stop, stopped, [&](std::int64_t i) {
        double p[3];
        const int k[3] = {static_cast<int>(i % n[0]), static_cast<int>((i / n[0]) % n[1]),
                          static_cast<int>(i / (static_cast<std::int64_t>(n[0]) * n[1]))};
        for (int j = 0; j < dim; ++j) p[j] = axis_coord(b.lo[j], b.hi[j], step, n[j], k[j]);
        if (index.distance(p) > 0.0) return 0.0;
        return support.distance({p, static_cast<std::size_t>(dim)});
    });
    // Counting inside points is diagnostic only; skip it on the early-exit path.
    if (!stopped) {
        for (std::int64_t i = 0; i < total; ++i) {
            double p[3];
            const int k[3] = {static_cast<int>(i % n[0]), static_cast<int>((i / n[0]) % n[1]),
                              static_cast<int>(i / (static_cast<std::int64_t>(n[0]) * n[1]))};
            for (int j = 0; j < dim; ++j) p[j] = axis_coord(b.lo[j], b.hi[j], step, n[j], k[j]);
            if (index.distance(p) == 0.0) ++inside;
        }
    }
    rep.union_points = inside;
    rep.early_exit = stopped;
    rep.distance = std::max(rep.support_side, rep.union_side);
    return rep;
}

void check_grid_step(double step, double eps) {
    if (!(step > 0.0)) throw InputError("hausdorff_distance: grid_step must be > 0");
    if (step > eps / 10.0 * (1.0 + 1e-12)) throw InputError("hausdorff_distance: grid too coarse, need step <= eps/10");
}

}  // namespace

HausdorffReport hausdorff_distance(const SupportSpec& support, const BallUnion& u, double grid_step, Exec exec,
                                   std::optional<double> stop_above) {
    u.validate();
    if (u.centers.dim != support.dim()) throw InputError("hausdorff_distance: dimension mismatch");
    check_grid_step(grid_step, u.min_radius());
    return hausdorff_impl(support, support_grid(support, grid_step), u, grid_step, exec, stop_above);
}

double hausdorff_point_sets(const PointSet& a, const PointSet& b, Exec exec) {
    if (a.dim != b.dim) throw InputError("hausdorff_point_sets: dimension mismatch");
    if (a.size() == 0 || b.size() == 0) throw InputError("hausdorff_point_sets: empty set");
    auto directed = [&](const PointSet& x, const PointSet& y) {
        return kernels::max_over(static_cast<std::int64_t>(x.size()), exec, 0.0, [&](std::int64_t i) {
            double best = kInf;
            const auto p = x.point(static_cast<std::size_t>(i));
            for (std::size_t k = 0; k < y.size() && best > 0.0; ++k) best = std::min(best, norm2(p, y.point(k)));
            return std::sqrt(best);
        });
    };
    return std::max(directed(a, b), directed(b, a));
}

// ---------------------------------------------------------------- covering

CoveringReport covering_number(const SupportSpec& support, double radius, std::optional<double> grid_step) {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InputError("covering_number: radius must be > 0");
    const double target = grid_step.value_or(radius / 8.0);
    if (!(target > 0.0)) throw InputError("covering_number: grid_step must be > 0");
    const int dim = support.dim();
    const Box b = support.bbox();

    // An even number of intervals per axis puts the bbox midpoint on the grid.
    std::array<int, 3> n{1, 1, 1};
    std::array<double, 3> step{0.0, 0.0, 0.0};
    double max_step = 0.0;
    for (int j = 0; j < dim; ++j) {
        const double len = b.hi[j] - b.lo[j];
        if (len <= 0.0) continue;
        int m = std::max(2, static_cast<int>(std::ceil(len / target - 1e-9)));
        if (m % 2 != 0) ++m;
        n[j] = m + 1;
        step[j] = len / m;
        max_step = std::max(max_step, step[j]);
    }
    auto coord = [&](int j, int k) { return k == n[j] - 1 ? b.hi[j] : b.lo[j] + step[j] * k; };
    const std::int64_t total = static_cast<std::int64_t>(n[0]) * n[1] * n[2];
    auto flat = [&](int x, int y, int z) { return (static_cast<std::int64_t>(z) * n[1] + y) * n[0] + x; };

    std::vector<char> in_s(static_cast<std::size_t>(total), 0);
    std::int64_t in_count = 0;
    for (int z = 0; z < n[2]; ++z) {
        for (int y = 0; y < n[1]; ++y) {
            for (int x = 0; x < n[0]; ++x) {
                double p[3];
                const int k[3] = {x, y, z};
                for (int j = 0; j < dim; ++j) p[j] = coord(j, k[j]);
                if (support.contains({p, static_cast<std::size_t>(dim)})) {
                    in_s[static_cast<std::size_t>(flat(x, y, z))] = 1;
                    ++in_count;
                }
            }
        }
    }

    // Integer offsets within the radius (on the regular part of the grid).
    std::array<int, 3> reach{0, 0, 0};
    for (int j = 0; j < dim; ++j) {
        if (step[j] > 0.0) reach[j] = static_cast<int>(std::floor(radius / step[j] * (1.0 + 1e-9)));
    }
    auto members = [&](std::int64_t c, std::vector<std::int64_t>& out) {
        out.clear();
        const int cx = static_cast<int>(c % n[0]);
        const int cy = static_cast<int>((c / n[0]) % n[1]);
        const int cz = static_cast<int>(c / (static_cast<std::int64_t>(n[0]) * n[1]));
        const int ck[3] = {cx, cy, cz};
        double cp[3];
        for (int j = 0; j < dim; ++j) cp[j] = coord(j, ck[j]);
        const double r2 = radius * radius * (1.0 + 1e-9);
        for (int z = std::max(0, cz - reach[2]); z <= std::min(n[2] - 1, cz + reach[2]); ++z) {
            for (int y = std::max(0, cy - reach[1]); y <= std::min(n[1] - 1, cy + reach[1]); ++y) {
                for (int x = std::max(0, cx - reach[0]); x <= std::min(n[0] - 1, cx + reach[0]); ++x) {
                    const std::int64_t f = flat(x, y, z);
                    if (!in_s[static_cast<std::size_t>(f)]) continue;
                    const int k[3] = {x, y, z};
                    double d2 = 0.0;
                    for (int j = 0; j < dim; ++j) {
                        const double d = coord(j, k[j]) - cp[j];
                        d2 += d * d;
                    }
                    if (d2 <= r2) out.push_back(f);
                }
            }
        }
    };

    // Lazy greedy: stale gains only ever overestimate, so re-evaluate on pop.
    std::vector<char> covered(static_cast<std::size_t>(total), 0);
    using Entry = std::pair<std::int64_t, std::int64_t>;  // (gain, -index)
    std::priority_queue<Entry> heap;
    std::vector<std::int64_t> buf;
    for (std::int64_t c = 0; c < total; ++c) {
        if (!in_s[static_cast<std::size_t>(c)]) continue;
        members(c, buf);
        heap.emplace(static_cast<std::int64_t>(buf.size()), -c);
    }
    CoveringReport rep;
    rep.radius = radius;
    rep.grid_step = max_step;
    rep.grid_points = in_count;
    rep.centers.dim = dim;
    std::int64_t remaining = in_count;
    while (remaining > 0 && !heap.empty()) {
        const auto [stale, neg] = heap.top();
        heap.pop();
        const std::int64_t c = -neg;
        members(c, buf);
        std::int64_t gain = 0;
        for (auto f : buf) gain += covered[static_cast<std::size_t>(f)] ? 0 : 1;
        if (gain == 0) continue;
        if (!heap.empty() && Entry(gain, neg) < heap.top()) {
            heap.emplace(gain, neg);
            continue;
        }
        for (auto f : buf) covered[static_cast<std::size_t>(f)] = 1;
        remaining -= gain;
        ++rep.count;
        double p[3];
        const int k[3] = {static_cast<int>(c % n[0]), static_cast<int>((c / n[0]) % n[1]),
                          static_cast<int>(c / (static_cast<std::int64_t>(n[0]) * n[1]))};
        for (int j = 0; j < dim; ++j) p[j] = coord(j, k[j]);
        rep.centers.push({p, static_cast<std::size_t>(dim)});
    }
    return rep;
}

double required_n_bound(double covering_n, double c0, double epsilon, int d, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw InputError("required_n: delta must lie in (0, 1)");
    if (!(covering_n >= 1.0) || !(c0 > 0.0) || !(epsilon > 0.0) || d < 1) {
        throw InputError("required_n: N >= 1, C0 > 0, eps > 0, d >= 1 required");
    }
    return (std::log(covering_n) + std::log(1.0 / delta)) / (c0 * std::pow(epsilon / 2.0, d));
}

std::int64_t required_n(double covering_n, double c0, double epsilon, int d, double delta) {
    const double bound = required_n_bound(covering_n, c0, epsilon, d, delta);
    // Absorb rounding in the logs so exact integers are not pushed up by one.
    const double n = std::ceil(bound - 1e-9 * std::max(1.0, bound));
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
}

// ---------------------------------------------------------------- coverage

std::pair<double, double> clopper_pearson(std::int64_t k, std::int64_t n, double confidence) {
    if (n < 1 || k < 0 || k > n) throw InputError("clopper_pearson: need 0 <= k <= n, n >= 1");
    if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("clopper_pearson: confidence in (0, 1)");
    const double a = 1.0 - confidence;
    const double kd = static_cast<double>(k);
    const double nd = static_cast<double>(n);
    const double lo = k == 0 ? 0.0 : boost::math::quantile(boost::math::beta_distribution<>(kd, nd - kd + 1.0), a / 2);
    const double hi =
        k == n ? 1.0 : boost::math::quantile(boost::math::beta_distribution<>(kd + 1.0, nd - kd), 1.0 - a / 2);
    return {lo, hi};
}

nlohmann::json CoverageReport::to_json(const SupportSpec& support) const {
    return {{"support", support.to_json()},
            {"epsilon", epsilon},
            {"n", n},
            {"trials", trials},
            {"successes", successes},
            {"frequency", frequency},
            {"ci", {ci_low, ci_high}},
            {"confidence", confidence},
            {"grid_step", grid_step},
            {"grid_tolerance", grid_tolerance},
            {"seed", seed},
            {"covering_number_note", "greedy upper bound; required_n is conservative"}};
}

CoverageReport coverage_trial(const SupportSpec& support, double epsilon, std::int64_t n, std::int64_t trials,
                              double grid_step, std::uint64_t seed, Exec exec) {
    if (!(epsilon > 0.0)) throw InputError("coverage_trial: epsilon must be > 0");
    if (n < 1) throw InputError("coverage_trial: n must be >= 1");
    if (trials < 1) throw InputError("coverage_trial: trials must be >= 1");
    if (support.r0() && epsilon > 2.0 * *support.r0() * (1.0 + 1e-12)) {
        throw InputError("coverage_trial: epsilon must be <= 2 r0");
    }
    check_grid_step(grid_step, epsilon);
    const int dim = support.dim();
    const PointSet s_grid = support_grid(support, grid_step);

    CoverageReport rep;
    rep.n = n;
    rep.trials = trials;
    rep.epsilon = epsilon;
    rep.grid_step = grid_step;
    rep.grid_tolerance = grid_step * std::sqrt(static_cast<double>(dim));
    rep.seed = seed;
    rep.distances.assign(static_cast<std::size_t>(trials), 0.0);
    const double threshold = epsilon + rep.grid_tolerance;

    auto one = [&](std::int64_t t) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(t));
        PointSet centers;
        centers.dim = dim;
        centers.coords.resize(static_cast<std::size_t>(n) * dim);
        for (std::int64_t i = 0; i < n; ++i) support.sample(rng, centers.coords.data() + i * dim);
        const BallUnion u = BallUnion::uniform(std::move(centers), epsilon);
        return hausdorff_impl(support, s_grid, u, grid_step, Exec::serial, threshold).distance;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (std::int64_t t = 0; t < trials; ++t) rep.distances[static_cast<std::size_t>(t)] = one(t);
    } else {
        for (std::int64_t t = 0; t < trials; ++t) rep.distances[static_cast<std::size_t>(t)] = one(t);
    }
    for (double d : rep.distances) rep.successes += d <= threshold ? 1 : 0;
    rep.frequency = static_cast<double>(rep.successes) / static_cast<double>(trials);
    std::tie(rep.ci_low, rep.ci_high) = clopper_pearson(rep.successes, trials, rep.confidence);
    return rep;
}

}  // namespace anq::geometry
