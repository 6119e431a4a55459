#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttmpc/path.hpp"
#include "ttmpc/vehicle.hpp"

namespace ttmpc {

struct FitFailed : std::runtime_error {
    explicit FitFailed(const std::string& what) : std::runtime_error(what) {}
};

/// Convex polytope {q in R^2 : H q <= h} acting on joint-angle vectors
/// q = (beta3, beta2). Rows are kept normalized to unit norm.
struct Polytope {
    Eigen::MatrixX2d H;
    Eigen::VectorXd h;

    int rows() const { return static_cast<int>(H.rows()); }
    void normalize_rows();
    bool contains(const Eigen::Vector2d& q, double tol = 0.0) const;
    /// Largest row violation; <= 0 inside.
    double max_violation(const Eigen::Vector2d& q) const;
    /// Vertices of the bounded polytope (counter-clockwise). Throws
    /// FitFailed when empty or unbounded within the clip box.
    std::vector<Eigen::Vector2d> vertices(double clip = 10.0) const;
    double area() const;

    static Polytope from_vertices(const std::vector<Eigen::Vector2d>& verts);
};

/// Union of convex polytopes; membership is the disjunction of the
/// per-polytope memberships.
struct PolytopeUnion {
    std::vector<Polytope> polys;

    int count() const { return static_cast<int>(polys.size()); }
    bool contains(const Eigen::Vector2d& q, double tol = 0.0) const;
    /// min over members of the max row violation; <= 0 inside the union.
    double violation(const Eigen::Vector2d& q) const;

    void save_json(const std::string& file) const;
    static PolytopeUnion load_json(const std::string& file);
};

/// Sensor field-of-view parameters; the half-space margin variant selects
/// which joint angle enters the front-face offset term.
struct FovSpec {
    double epsilon = 1.0;
    bool use_beta2_variant = false;
};

/// Positions of the two semitrailer front corners in the frame fixed to
/// the tractor with origin at the off-axle hitch and x toward the front.
std::pair<Eigen::Vector2d, Eigen::Vector2d> corner_positions(double beta2, double beta3,
                                                             const VehicleParams& p);

/// True when both front corners lie in the sensor cone and the sensor is
/// ahead of the semitrailer front face with margin epsilon.
bool fov_admissible(double beta2, double beta3, const FovSpec& spec, const VehicleParams& p);

/// Boolean lattice over (beta3, beta2) in [lo, lo + (n-1)*res]^2.
struct BoolGrid {
    double lo = -1.2;
    double res = 0.02;
    int n = 0;
    std::vector<std::uint8_t> cells;  // row-major, beta3 outer, beta2 inner

    bool at(int i, int j) const { return cells[static_cast<std::size_t>(i) * n + j] != 0; }
    void set(int i, int j, bool v) { cells[static_cast<std::size_t>(i) * n + j] = v ? 1 : 0; }
    double beta3(int i) const { return lo + i * res; }
    double beta2(int j) const { return lo + j * res; }
    std::size_t count_true() const;
    bool same_lattice(const BoolGrid& other) const;
    BoolGrid intersect(const BoolGrid& other) const;
    /// cells admissible only together with their point reflection
    BoolGrid symmetrized() const;

    void save_csv(const std::string& file) const;
    static BoolGrid load_csv(const std::string& file);
};

BoolGrid region_grid(const FovSpec& spec, const VehicleParams& p, double resolution,
                     double half_range = 1.2);

/// Shifted polytopes in error coordinates: hbar = h - H*(beta3r, beta2r).
std::vector<Polytope> shift_polytopes(const PolytopeUnion& u, double beta3r, double beta2r);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Bounds on the curvature deviation from |u_r + u_tilde| <= u_max.
Interval curvature_bounds(double u_r, const VehicleParams& p);

/// Curvature slew bound per meter at a nominal sample:
/// c_max = du_max / (|v| * C1(nominal)).
double rate_bound(const PathSample& ref, double v_abs, const VehicleParams& p);

/// Inner polytope approximations fitted to the intersection of the FOV
/// grid and the stability grid.
struct PolytopeFit {
    Polytope single;          ///< largest symmetric fit, axis-aligned direction set
    PolytopeUnion union2;     ///< single + a band polytope along the principal axis
    Polytope rotated;         ///< single-style fit under a principal-axis rotation
};

PolytopeFit fit_default_polytopes(const BoolGrid& fov, const BoolGrid& stability);

}  // namespace ttmpc
