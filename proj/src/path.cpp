#include "ttmpc/path.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace ttmpc {

namespace {

// First positive zero of the Bessel function J0; makes the sinusoidal
// heading profile close the loop exactly.
constexpr double kBesselJ0Zero = 2.404825557695773;

// Velocity-normalized right-hand side f(x, u) of the kinematic model
// (time derivative divided by v3).
void normalized_rhs(const VehicleState& x, double u, const VehicleParams& p, double f[5]) {
    const double c1 = c1_factor(x.beta2, x.beta3, u, p);
    if (c1 <= kSingularTol)
        throw SingularConfiguration("normalized_rhs: singular nominal configuration");
    const double sb2 = std::sin(x.beta2);
    const double cb2 = std::cos(x.beta2);
    const double tb3 = std::tan(x.beta3);
    f[0] = std::cos(x.theta3);
    f[1] = std::sin(x.theta3);
    f[2] = tb3 / p.L3;
    f[3] = (sb2 - p.M1 * cb2 * u) / (p.L2 * c1) - tb3 / p.L3;
    f[4] = (u - sb2 / p.L2 + p.M1 / p.L2 * cb2 * u) / c1;
}

double state_component(const VehicleState& st, int c) {
    switch (c) {
        case 0: return st.x3;
        case 1: return st.y3;
        case 2: return st.theta3;
        case 3: return st.beta3;
        default: return st.beta2;
    }
}

}  // namespace

NominalPath::NominalPath(std::vector<PathSample> samples, double spacing, double L3)
    : samples_(std::move(samples)), spacing_(spacing), L3_(L3) {
    if (samples_.size() < 2) throw std::invalid_argument("NominalPath: need >= 2 samples");
    dir_ = samples_.front().dir;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        auto& smp = samples_[i];
        if (smp.dir != dir_) throw std::invalid_argument("NominalPath: mixed directions");
        smp.kappa3r = std::tan(smp.state.beta3) / L3_;
        if (i > 0) {
            const double ds = smp.s - samples_[i - 1].s;
            if (ds <= 0.0) throw std::invalid_argument("NominalPath: s not increasing");
            if (std::abs(ds - spacing_) > 1e-9 * std::max(1.0, spacing_))
                throw std::invalid_argument("NominalPath: non-uniform spacing");
        }
    }
}

NominalPath NominalPath::straight(double length, int dir, const VehicleParams& p,
                                  double spacing) {
    if (length <= 0.0) throw std::invalid_argument("straight: length must be positive");
    p.validate();
    dir = dir < 0 ? -1 : 1;
    const int n = static_cast<int>(std::round(length / spacing)) + 1;
    std::vector<PathSample> samples(n);
    for (int i = 0; i < n; ++i) {
        PathSample& smp = samples[i];
        smp.s = i * spacing;
        smp.state.x3 = dir * smp.s;
        smp.dir = dir;
    }
    return NominalPath(std::move(samples), spacing, p.L3);
}

NominalPath NominalPath::figure_eight(double length, int dir, const VehicleParams& p,
                                      double spacing) {
    p.validate();
    if (length <= 0.0) throw std::invalid_argument("figure_eight: length must be positive");
    if (std::abs(p.M1) < 1e-9)
        throw InfeasibleReference("figure_eight generator requires an off-axle hitch (M1 != 0)");
    dir = dir < 0 ? -1 : 1;

    const double A = kBesselJ0Zero;
    const double w = 2.0 * kPi / length;

    // Closed-form semitrailer profiles: curvature, heading, and the target
    // spatial derivative of beta3.
    auto kappa3 = [&](double s) { return A * w * std::sin(w * s); };
    auto dkappa3 = [&](double s) { return A * w * w * std::cos(w * s); };
    auto theta3 = [&](double s) { return A * (1.0 - std::cos(w * s)); };
    auto beta3 = [&](double s) { return std::atan(p.L3 * kappa3(s)); };
    auto p_target = [&](double s) {
        const double k = kappa3(s);
        const double lk = p.L3 * k;
        return k + p.L3 * dkappa3(s) / (1.0 + lk * lk);
    };
    // Feedforward curvature solving p(beta2, beta3, u) = p_target.
    auto u_of = [&](double b2, double s) {
        const double pbar = p_target(s) * p.L2 * std::cos(beta3(s));
        return (std::sin(b2) - pbar * std::cos(b2)) /
               (p.M1 * (std::cos(b2) + pbar * std::sin(b2)));
    };
    auto db2_ds = [&](double b2, double s) {
        const double u = u_of(b2, s);
        const double b3 = beta3(s);
        const double c1 = c1_factor(b2, b3, u, p);
        if (c1 <= kSingularTol)
            throw InfeasibleReference("figure_eight: singular configuration during generation");
        return (u - std::sin(b2) / p.L2 + p.M1 / p.L2 * std::cos(b2) * u) / c1;
    };

    const int sub = std::max(1, static_cast<int>(std::ceil(spacing / 0.01)));
    const double h = spacing / sub;
    const int n = static_cast<int>(std::round(length / spacing)) + 1;

    // With beta3 pinned to the curvature profile and u solved from the
    // beta3 equation, the beta2 dynamics are contracting only when
    // integrated with decreasing s; the bounded periodic solution is
    // reached by settling downward through two extra loops.
    auto rk4_back = [&](double b2, double s) {
        const double k1 = db2_ds(b2, s);
        const double k2 = db2_ds(b2 - 0.5 * h * k1, s - 0.5 * h);
        const double k3 = db2_ds(b2 - 0.5 * h * k2, s - 0.5 * h);
        const double k4 = db2_ds(b2 - h * k3, s - h);
        return b2 - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };
    double b2 = 0.0;
    {
        double s = 3.0 * length;
        const long settle_steps = 2L * (n - 1) * sub;
        for (long i = 0; i < settle_steps; ++i) {
            b2 = rk4_back(b2, s);
            s -= h;
        }
    }
    std::vector<double> beta2_grid(n);
    beta2_grid[n - 1] = b2;  // value at s = length (== periodic value at 0)
    for (int i = n - 1; i > 0; --i) {
        double s = i * spacing;
        for (int j = 0; j < sub; ++j) {
            b2 = rk4_back(b2, s);
            s -= h;
        }
        beta2_grid[i - 1] = b2;
    }

    // Record pass: positions by Simpson quadrature of the closed-form heading.
    std::vector<PathSample> samples(n);
    double x = 0.0, y = 0.0;
    double u_abs_max = 0.0;
    for (int i = 0; i < n; ++i) {
        const double s = i * spacing;
        PathSample& smp = samples[i];
        smp.s = s;
        smp.state = {x, y, theta3(s), beta3(s), beta2_grid[i]};
        smp.u_r = u_of(beta2_grid[i], s);
        smp.dir = 1;
        u_abs_max = std::max(u_abs_max, std::abs(smp.u_r));
        if (i + 1 == n) break;
        for (int j = 0; j < sub; ++j) {
            const double sj = s + j * h;
            x += h / 6.0 * (std::cos(theta3(sj)) + 4.0 * std::cos(theta3(sj + 0.5 * h)) +
                            std::cos(theta3(sj + h)));
            y += h / 6.0 * (std::sin(theta3(sj)) + 4.0 * std::sin(theta3(sj + 0.5 * h)) +
                            std::sin(theta3(sj + h)));
        }
    }
    if (u_abs_max > p.u_max) {
        throw InfeasibleReference("figure_eight: |u_r| = " + std::to_string(u_abs_max) +
                                  " exceeds u_max; increase the length");
    }

    // Center the loop on its crossing point.
    const auto& half = samples[(n - 1) / 2];
    const double cx = 0.5 * (samples.front().state.x3 + half.state.x3);
    const double cy = 0.5 * (samples.front().state.y3 + half.state.y3);
    for (auto& smp : samples) {
        smp.state.x3 -= cx;
        smp.state.y3 -= cy;
    }

    if (dir < 0) {
        std::vector<PathSample> rev(n);
        for (int i = 0; i < n; ++i) {
            rev[i] = samples[n - 1 - i];
            rev[i].s = i * spacing;
            rev[i].dir = -1;
        }
        samples = std::move(rev);
    }
    return NominalPath(std::move(samples), spacing, p.L3);
}

PathSample NominalPath::sample_at(double s) const {
    if (samples_.size() < 2) throw OutOfRange("sample_at: empty path");
    const double s0 = samples_.front().s;
    const double tol = 1e-9 * std::max(1.0, s_end());
    if (s < s0 - tol || s > s_end() + tol)
        throw OutOfRange("sample_at: s = " + std::to_string(s) + " outside [0, " +
                         std::to_string(s_end()) + "]");
    s = std::clamp(s, s0, s_end());
    const double t = (s - s0) / spacing_;
    const std::size_t i =
        std::min(static_cast<std::size_t>(std::max(0.0, t)), samples_.size() - 2);
    const double a = t - static_cast<double>(i);
    const PathSample& lo = samples_[i];
    const PathSample& hi = samples_[i + 1];
    PathSample out;
    out.s = s;
    out.dir = dir_;
    out.state.x3 = lo.state.x3 + a * (hi.state.x3 - lo.state.x3);
    out.state.y3 = lo.state.y3 + a * (hi.state.y3 - lo.state.y3);
    out.state.theta3 = lo.state.theta3 + a * (hi.state.theta3 - lo.state.theta3);
    out.state.beta3 = lo.state.beta3 + a * (hi.state.beta3 - lo.state.beta3);
    out.state.beta2 = lo.state.beta2 + a * (hi.state.beta2 - lo.state.beta2);
    out.u_r = lo.u_r + a * (hi.u_r - lo.u_r);
    out.kappa3r = std::tan(out.state.beta3) / L3_;
    return out;
}

double NominalPath::project(double px, double py, double s_hint, double window) const {
    const double s0 = samples_.front().s;
    const double lo = std::max(s0, s_hint - window);
    const double hi = std::min(s_end(), s_hint + window);
    if (lo >= hi) throw ProjectionLost("project: empty search window");

    const std::size_t i_lo = static_cast<std::size_t>(std::ceil((lo - s0) / spacing_ - 1e-12));
    const std::size_t i_hi = std::min(
        samples_.size() - 1, static_cast<std::size_t>(std::floor((hi - s0) / spacing_ + 1e-12)));
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t best_i = i_lo;
    for (std::size_t i = i_lo; i <= i_hi; ++i) {
        const double dx = px - samples_[i].state.x3;
        const double dy = py - samples_[i].state.y3;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best_d2) {
            best_d2 = d2;
            best_i = i;
        }
    }
    const double s_best = samples_[best_i].s;
    const bool at_window_edge = (best_i == i_lo && lo > s0 + 1e-9) ||
                                (best_i == i_hi && hi < s_end() - 1e-9);

    auto dist2 = [&](double s) {
        const PathSample smp = sample_at(s);
        const double dx = px - smp.state.x3;
        const double dy = py - smp.state.y3;
        return dx * dx + dy * dy;
    };
    // Stationarity residual: offset dotted with the heading-aligned tangent.
    auto phi = [&](double s) {
        const PathSample smp = sample_at(s);
        const double dx = px - smp.state.x3;
        const double dy = py - smp.state.y3;
        return dx * std::cos(smp.state.theta3) + dy * std::sin(smp.state.theta3);
    };

    double a = std::max(lo, s_best - spacing_);
    double b = std::min(hi, s_best + spacing_);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = dist2(x1), f2 = dist2(x2);
    for (int it = 0; it < 40 && (b - a) > 1e-10; ++it) {
        if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - gr * (b - a); f1 = dist2(x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + gr * (b - a); f2 = dist2(x2);
        }
    }
    double s_star = 0.5 * (a + b);

    double ra = std::max(lo, s_star - spacing_), rb = std::min(hi, s_star + spacing_);
    double fa = phi(ra), fb = phi(rb);
    if (fa * fb <= 0.0) {
        for (int it = 0; it < 80; ++it) {
            const double m = 0.5 * (ra + rb);
            const double fm = phi(m);
            if (fa * fm <= 0.0) {
                rb = m; fb = fm;
            } else {
                ra = m; fa = fm;
            }
        }
        s_star = 0.5 * (ra + rb);
    } else if (at_window_edge) {
        throw ProjectionLost("project: no interior minimum in the search window");
    }
    return s_star;
}

double NominalPath::consistency_residual(const VehicleParams& p) const {
    const std::size_t n = samples_.size();
    if (n < 5) throw std::invalid_argument("consistency_residual: need >= 5 samples");
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double f[5];
        normalized_rhs(samples_[i].state, samples_[i].u_r, p, f);
        for (int c = 0; c < 5; ++c) {
            auto v = [&](std::size_t j) { return state_component(samples_[j].state, c); };
            double fd;
            if (i >= 2 && i + 2 < n) {
                fd = (v(i - 2) - 8.0 * v(i - 1) + 8.0 * v(i + 1) - v(i + 2)) / (12.0 * spacing_);
            } else if (i == 0) {
                fd = (-25.0 * v(0) + 48.0 * v(1) - 36.0 * v(2) + 16.0 * v(3) - 3.0 * v(4)) /
                     (12.0 * spacing_);
            } else if (i == 1) {
                fd = (-3.0 * v(0) - 10.0 * v(1) + 18.0 * v(2) - 6.0 * v(3) + v(4)) /
                     (12.0 * spacing_);
            } else if (i + 2 == n) {
                fd = (3.0 * v(n - 1) + 10.0 * v(n - 2) - 18.0 * v(n - 3) + 6.0 * v(n - 4) -
                      v(n - 5)) /
                     (12.0 * spacing_);
            } else {
                fd = (25.0 * v(n - 1) - 48.0 * v(n - 2) + 36.0 * v(n - 3) - 16.0 * v(n - 4) +
                      3.0 * v(n - 5)) /
                     (12.0 * spacing_);
            }
            worst = std::max(worst, std::abs(fd - dir_ * f[c]));
        }
    }
    return worst;
}

double NominalPath::max_feedforward_curvature() const {
    double m = 0.0;
    for (const auto& smp : samples_) m = std::max(m, std::abs(smp.u_r));
    return m;
}

void NominalPath::to_csv(const std::string& file) const {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("to_csv: cannot open " + file);
    out << "s,x3,y3,theta3,beta3,beta2,u_r,dir\n";
    char line[512];
    for (const auto& smp : samples_) {
        std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                      smp.s, smp.state.x3, smp.state.y3, smp.state.theta3, smp.state.beta3,
                      smp.state.beta2, smp.u_r, smp.dir);
        out << line;
    }
}

NominalPath NominalPath::from_csv(const std::string& file, const VehicleParams& p) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("from_csv: cannot open " + file);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("from_csv: empty file");
    std::vector<PathSample> samples;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        double vals[7];
        for (int i = 0; i < 7; ++i) {
            if (!std::getline(ss, tok, ',')) throw std::runtime_error("from_csv: short row");
            vals[i] = std::stod(tok);
        }
        if (!std::getline(ss, tok, ',')) throw std::runtime_error("from_csv: missing dir");
        PathSample smp;
        smp.s = vals[0];
        smp.state = {vals[1], vals[2], vals[3], vals[4], vals[5]};
        smp.u_r = vals[6];
        smp.dir = std::stoi(tok);
        samples.push_back(smp);
    }
    if (samples.size() < 2) throw std::runtime_error("from_csv: need >= 2 samples");
    const double spacing = samples[1].s - samples[0].s;
    return NominalPath(std::move(samples), spacing, p.L3);
}

}  // namespace ttmpc
