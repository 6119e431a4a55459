#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ttmpc/vehicle.hpp"

namespace ttmpc {

struct OutOfRange : std::out_of_range {
    explicit OutOfRange(const std::string& what) : std::out_of_range(what) {}
};

struct ProjectionLost : std::runtime_error {
    explicit ProjectionLost(const std::string& what) : std::runtime_error(what) {}
};

struct InfeasibleReference : std::runtime_error {
    explicit InfeasibleReference(const std::string& what) : std::runtime_error(what) {}
};

/// One station of a nominal path: full state, feedforward curvature,
/// semitrailer curvature tan(beta3r)/L3 and motion direction.
struct PathSample {
    double s = 0.0;
    VehicleState state;
    double u_r = 0.0;
    double kappa3r = 0.0;
    int dir = 1;  ///< +1 forward, -1 backward
};

/// s-parameterized nominal path with uniform sample spacing. The samples
/// satisfy dx_r/ds = dir * f(x_r, u_r) up to discretization tolerance;
/// angles are stored continuous (unwrapped) so interpolation is safe
/// across full loops.
class NominalPath {
  public:
    static constexpr double kDefaultSpacing = 0.1;

    NominalPath() = default;

    /// Straight path along the x-axis: zero joint angles and curvature.
    static NominalPath straight(double length, int dir, const VehicleParams& p,
                                double spacing = kDefaultSpacing);

    /// Closed figure-eight. `length` is the total loop length; the heading
    /// profile A*(1 - cos(2*pi*s/length)) with A the first zero of the
    /// Bessel function J0 closes the loop exactly and makes the curve
    /// point-symmetric about the crossing. Throws InfeasibleReference when
    /// the implied feedforward curvature exceeds u_max.
    static NominalPath figure_eight(double length, int dir, const VehicleParams& p,
                                    double spacing = kDefaultSpacing);

    static NominalPath from_csv(const std::string& file, const VehicleParams& p);
    void to_csv(const std::string& file) const;

    /// Linear interpolation between stored samples; exact at grid points.
    PathSample sample_at(double s) const;

    /// Arc length of the closest point to `pos` near s_hint (window search,
    /// golden-section refinement, tangent-orthogonality polish).
    double project(double px, double py, double s_hint, double window = 5.0) const;

    /// Max over samples of ||FD(dx_r/ds) - dir*f(x_r,u_r)||_inf using
    /// 4th-order stencils.
    double consistency_residual(const VehicleParams& p) const;

    /// Largest |u_r| over the stored samples.
    double max_feedforward_curvature() const;

    double s_end() const { return samples_.empty() ? 0.0 : samples_.back().s; }
    int dir() const { return dir_; }
    double spacing() const { return spacing_; }
    std::size_t size() const { return samples_.size(); }
    const std::vector<PathSample>& samples() const { return samples_; }

  private:
    NominalPath(std::vector<PathSample> samples, double spacing, double L3);

    std::vector<PathSample> samples_;
    double spacing_ = kDefaultSpacing;
    double L3_ = 1.0;
    int dir_ = 1;
};

}  // namespace ttmpc
