#include "ttmpc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ttmpc {

void Polytope::normalize_rows() {
    for (Eigen::Index r = 0; r < H.rows(); ++r) {
        const double n = H.row(r).norm();
        if (n < 1e-12) throw std::invalid_argument("Polytope: zero row");
        H.row(r) /= n;
        h(r) /= n;
    }
}

bool Polytope::contains(const Eigen::Vector2d& q, double tol) const {
    return max_violation(q) <= tol;
}

double Polytope::max_violation(const Eigen::Vector2d& q) const {
    return (H * q - h).maxCoeff();
}

namespace {

std::vector<Eigen::Vector2d> clip_halfplane(const std::vector<Eigen::Vector2d>& poly,
                                            const Eigen::Vector2d& d, double c) {
    std::vector<Eigen::Vector2d> out;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d& a = poly[i];
        const Eigen::Vector2d& b = poly[(i + 1) % n];
        const double fa = d.dot(a) - c;
        const double fb = d.dot(b) - c;
        if (fa <= 1e-12) out.push_back(a);
        if ((fa < -1e-12 && fb > 1e-12) || (fa > 1e-12 && fb < -1e-12)) {
            const double t = fa / (fa - fb);
            out.push_back(a + t * (b - a));
        }
    }
    return out;
}

std::vector<Eigen::Vector2d> dedup_polygon(const std::vector<Eigen::Vector2d>& poly) {
    std::vector<Eigen::Vector2d> out;
    for (const auto& v : poly) {
        if (out.empty() || (out.back() - v).norm() > 1e-9) out.push_back(v);
    }
    if (out.size() > 1 && (out.front() - out.back()).norm() <= 1e-9) out.pop_back();
    return out;
}

}  // namespace

std::vector<Eigen::Vector2d> Polytope::vertices(double clip) const {
    std::vector<Eigen::Vector2d> poly = {{-clip, -clip}, {clip, -clip}, {clip, clip}, {-clip, clip}};
    for (Eigen::Index r = 0; r < H.rows(); ++r) {
        poly = clip_halfplane(poly, H.row(r).transpose(), h(r));
        if (poly.size() < 3) throw FitFailed("Polytope::vertices: empty polytope");
    }
    poly = dedup_polygon(poly);
    for (const auto& v : poly) {
        if (std::abs(v.x()) >= clip - 1e-6 || std::abs(v.y()) >= clip - 1e-6)
            throw FitFailed("Polytope::vertices: polytope not bounded within clip box");
    }
    if (poly.size() < 3) throw FitFailed("Polytope::vertices: degenerate polytope");
    return poly;
}

double Polytope::area() const {
    const auto verts = vertices();
    double a = 0.0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        const auto& p = verts[i];
        const auto& q = verts[(i + 1) % verts.size()];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * std::abs(a);
}

Polytope Polytope::from_vertices(const std::vector<Eigen::Vector2d>& verts) {
    if (verts.size() < 3) throw FitFailed("from_vertices: need >= 3 vertices");
    // centroid decides outward orientation
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& v : verts) c += v;
    c /= static_cast<double>(verts.size());
    Polytope P;
    P.H.resize(static_cast<Eigen::Index>(verts.size()), 2);
    P.h.resize(static_cast<Eigen::Index>(verts.size()));
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        const Eigen::Vector2d a = verts[i];
        const Eigen::Vector2d b = verts[(i + 1) % verts.size()];
        const Eigen::Vector2d t = b - a;
        if (t.norm() < 1e-12) continue;
        Eigen::Vector2d n(t.y(), -t.x());
        n.normalize();
        if (n.dot(c - a) > 0.0) n = -n;
        P.H.row(r) = n.transpose();
        P.h(r) = n.dot(a);
        ++r;
    }
    P.H.conservativeResize(r, 2);
    P.h.conservativeResize(r);
    return P;
}

bool PolytopeUnion::contains(const Eigen::Vector2d& q, double tol) const {
    for (const auto& p : polys)
        if (p.contains(q, tol)) return true;
    return false;
}

double PolytopeUnion::violation(const Eigen::Vector2d& q) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : polys) best = std::min(best, p.max_violation(q));
    return best;
}

void PolytopeUnion::save_json(const std::string& file) const {
    nlohmann::json j;
    j["polytopes"] = nlohmann::json::array();
    for (const auto& p : polys) {
        nlohmann::json jp;
        jp["H"] = nlohmann::json::array();
        jp["h"] = nlohmann::json::array();
        for (Eigen::Index r = 0; r < p.H.rows(); ++r) {
            jp["H"].push_back({p.H(r, 0), p.H(r, 1)});
            jp["h"].push_back(p.h(r));
        }
        j["polytopes"].push_back(jp);
    }
    std::ofstream out(file);
    if (!out) throw std::runtime_error("save_json: cannot open " + file);
    out << j.dump(2) << "\n";
}

PolytopeUnion PolytopeUnion::load_json(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("load_json: cannot open " + file);
    nlohmann::json j;
    in >> j;
    PolytopeUnion u;
    for (const auto& jp : j.at("polytopes")) {
        Polytope p;
        const auto& H = jp.at("H");
        const auto& h = jp.at("h");
        p.H.resize(static_cast<Eigen::Index>(H.size()), 2);
        p.h.resize(static_cast<Eigen::Index>(h.size()));
        for (std::size_t r = 0; r < H.size(); ++r) {
            p.H(static_cast<Eigen::Index>(r), 0) = H[r][0].get<double>();
            p.H(static_cast<Eigen::Index>(r), 1) = H[r][1].get<double>();
            p.h(static_cast<Eigen::Index>(r)) = h[r].get<double>();
        }
        p.normalize_rows();
        u.polys.push_back(std::move(p));
    }
    return u;
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> corner_positions(double beta2, double beta3,
                                                             const VehicleParams& p) {
    const double sum = beta2 + beta3;
    // dolly axle sits L2 behind the hitch along the dolly axis; the front
    // face center is La ahead of it along the semitrailer axis.
    const Eigen::Vector2d center(-p.L2 * std::cos(beta2) + p.La * std::cos(sum),
                                 p.L2 * std::sin(beta2) - p.La * std::sin(sum));
    const Eigen::Vector2d perp(std::sin(sum), std::cos(sum));
    return {center + 0.5 * p.b * perp, center - 0.5 * p.b * perp};
}

bool fov_admissible(double beta2, double beta3, const FovSpec& spec, const VehicleParams& p) {
    const auto [p1, p2] = corner_positions(beta2, beta3, p);
    const double ch = std::cos(0.5 * p.phi);
    const double sh = std::sin(0.5 * p.phi);
    for (const auto& q : {p1, p2}) {
        if (ch * q.y() + sh * q.x() > 0.0) return false;
        if (ch * q.y() - sh * q.x() < 0.0) return false;
    }
    // sensor ahead of the front face with margin epsilon
    const double mbar =
        p.L2 * std::cos(spec.use_beta2_variant ? beta2 : beta3) - p.La;
    return mbar >= spec.epsilon;
}

std::size_t BoolGrid::count_true() const {
    std::size_t c = 0;
    for (auto v : cells) c += v != 0;
    return c;
}

bool BoolGrid::same_lattice(const BoolGrid& other) const {
    return n == other.n && std::abs(lo - other.lo) < 1e-9 && std::abs(res - other.res) < 1e-9;
}

BoolGrid BoolGrid::intersect(const BoolGrid& other) const {
    if (!same_lattice(other)) throw std::invalid_argument("BoolGrid::intersect: lattice mismatch");
    BoolGrid out = *this;
    for (std::size_t k = 0; k < cells.size(); ++k)
        out.cells[k] = (cells[k] && other.cells[k]) ? 1 : 0;
    return out;
}

BoolGrid BoolGrid::symmetrized() const {
    BoolGrid out = *this;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out.set(i, j, at(i, j) && at(n - 1 - i, n - 1 - j));
    return out;
}

void BoolGrid::save_csv(const std::string& file) const {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("BoolGrid::save_csv: cannot open " + file);
    out << "beta3,beta2,value\n";
    char line[128];
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            std::snprintf(line, sizeof(line), "%.17g,%.17g,%d\n", beta3(i), beta2(j),
                          at(i, j) ? 1 : 0);
            out << line;
        }
}

BoolGrid BoolGrid::load_csv(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("BoolGrid::load_csv: cannot open " + file);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("BoolGrid::load_csv: empty file");
    struct Row {
        double b3, b2;
        int v;
    };
    std::vector<Row> rows;
    std::set<double> b3set;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        Row r{};
        std::getline(ss, tok, ',');
        r.b3 = std::stod(tok);
        std::getline(ss, tok, ',');
        r.b2 = std::stod(tok);
        std::getline(ss, tok, ',');
        r.v = std::stoi(tok);
        rows.push_back(r);
        b3set.insert(r.b3);
    }
    BoolGrid g;
    g.n = static_cast<int>(b3set.size());
    if (g.n < 2) throw std::runtime_error("BoolGrid::load_csv: degenerate grid");
    g.lo = *b3set.begin();
    g.res = (*b3set.rbegin() - g.lo) / (g.n - 1);
    g.cells.assign(static_cast<std::size_t>(g.n) * g.n, 0);
    if (rows.size() != g.cells.size())
        throw std::runtime_error("BoolGrid::load_csv: not a square lattice");
    for (const auto& r : rows) {
        const int i = static_cast<int>(std::lround((r.b3 - g.lo) / g.res));
        const int j = static_cast<int>(std::lround((r.b2 - g.lo) / g.res));
        if (i < 0 || i >= g.n || j < 0 || j >= g.n)
            throw std::runtime_error("BoolGrid::load_csv: point off lattice");
        g.set(i, j, r.v != 0);
    }
    return g;
}

BoolGrid region_grid(const FovSpec& spec, const VehicleParams& p, double resolution,
                     double half_range) {
    if (resolution <= 0.0) throw std::invalid_argument("region_grid: resolution must be positive");
    BoolGrid g;
    g.lo = -half_range;
    g.res = resolution;
    g.n = static_cast<int>(std::lround(2.0 * half_range / resolution)) + 1;
    g.cells.assign(static_cast<std::size_t>(g.n) * g.n, 0);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            g.set(i, j, fov_admissible(g.beta2(j), g.beta3(i), spec, p));
    return g;
}

std::vector<Polytope> shift_polytopes(const PolytopeUnion& u, double beta3r, double beta2r) {
    std::vector<Polytope> out;
    out.reserve(u.polys.size());
    const Eigen::Vector2d ref(beta3r, beta2r);
    for (const auto& p : u.polys) {
        Polytope s = p;
        s.h = p.h - p.H * ref;
        out.push_back(std::move(s));
    }
    return out;
}

Interval curvature_bounds(double u_r, const VehicleParams& p) {
    return {-p.u_max - u_r, p.u_max - u_r};
}

double rate_bound(const PathSample& ref, double v_abs, const VehicleParams& p) {
    if (v_abs <= 0.0) throw std::invalid_argument("rate_bound: |v| must be positive");
    const double c1 = c1_factor(ref.state.beta2, ref.state.beta3, ref.u_r, p);
    if (c1 <= kSingularTol) throw SingularConfiguration("rate_bound: singular nominal sample");
    return p.du_max / (v_abs * c1);
}

namespace {

// Shrinks halfplane offsets until no inadmissible cell center remains
// inside. Directions must form a point-symmetric set.
Polytope fit_symmetric(const BoolGrid& grid, const std::vector<Eigen::Vector2d>& dirs,
                       double margin) {
    const int nd = static_cast<int>(dirs.size());
    std::vector<int> opposite(nd, -1);
    for (int a = 0; a < nd; ++a)
        for (int b = 0; b < nd; ++b)
            if ((dirs[a] + dirs[b]).norm() < 1e-9) opposite[a] = b;
    for (int a = 0; a < nd; ++a)
        if (opposite[a] < 0) throw FitFailed("fit: direction set is not point-symmetric");

    std::vector<Eigen::Vector2d> cloud;
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j)
            if (grid.at(i, j)) cloud.emplace_back(grid.beta3(i), grid.beta2(j));
    if (cloud.empty()) throw FitFailed("fit: empty admissible region");

    std::vector<double> c(nd, -std::numeric_limits<double>::infinity());
    for (const auto& q : cloud)
        for (int a = 0; a < nd; ++a) c[a] = std::max(c[a], dirs[a].dot(q));
    for (int a = 0; a < nd; ++a) {
        const double m = std::min(c[a], c[opposite[a]]);
        c[a] = m;
        c[opposite[a]] = m;
    }

    const long cap = static_cast<long>(grid.cells.size()) * nd + 16;
    for (long iter = 0; iter < cap; ++iter) {
        // deepest inadmissible cell still inside
        bool found = false;
        Eigen::Vector2d worst;
        double depth_best = -1.0;
        for (int i = 0; i < grid.n; ++i)
            for (int j = 0; j < grid.n; ++j) {
                if (grid.at(i, j)) continue;
                const Eigen::Vector2d q(grid.beta3(i), grid.beta2(j));
                double depth = std::numeric_limits<double>::infinity();
                for (int a = 0; a < nd; ++a) depth = std::min(depth, c[a] - dirs[a].dot(q));
                if (depth >= 0.0 && depth > depth_best) {
                    depth_best = depth;
                    worst = q;
                    found = true;
                }
            }
        if (!found) break;
        // cut with the row needing the smallest shrink
        int j_star = 0;
        double gap_best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < nd; ++a) {
            const double gap = dirs[a].dot(worst) - c[a];
            if (gap > gap_best) {
                gap_best = gap;
                j_star = a;
            }
        }
        const double cut = dirs[j_star].dot(worst) - margin;
        c[j_star] = std::min(c[j_star], cut);
        c[opposite[j_star]] = c[j_star];
        if (c[j_star] <= margin) throw FitFailed("fit: origin no longer interior");
    }

    Polytope raw;
    raw.H.resize(nd, 2);
    raw.h.resize(nd);
    for (int a = 0; a < nd; ++a) {
        raw.H.row(a) = dirs[a].transpose();
        raw.h(a) = c[a];
    }
    // rebuild a minimal description from the polygon
    Polytope out = Polytope::from_vertices(raw.vertices());
    out.normalize_rows();
    if (out.vertices().size() < 4) throw FitFailed("fit: fewer than 4 vertices");
    return out;
}

std::vector<Eigen::Vector2d> uniform_directions(int count, double offset_angle) {
    std::vector<Eigen::Vector2d> dirs;
    dirs.reserve(count);
    for (int k = 0; k < count; ++k) {
        const double a = offset_angle + 2.0 * kPi * k / count;
        dirs.emplace_back(std::cos(a), std::sin(a));
    }
    return dirs;
}

double principal_angle(const BoolGrid& grid) {
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    std::size_t cnt = 0;
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j)
            if (grid.at(i, j)) {
                const double x = grid.beta3(i);
                const double y = grid.beta2(j);
                sxx += x * x;
                sxy += x * y;
                syy += y * y;
                ++cnt;
            }
    if (cnt == 0) throw FitFailed("principal_angle: empty region");
    // symmetric region has zero mean; principal axis of second moments
    return 0.5 * std::atan2(2.0 * sxy, sxx - syy);
}

}  // namespace

PolytopeFit fit_default_polytopes(const BoolGrid& fov, const BoolGrid& stability) {
    if (!fov.same_lattice(stability))
        throw std::invalid_argument("fit_default_polytopes: grids on different lattices");
    const BoolGrid inter = fov.intersect(stability).symmetrized();
    const double margin = inter.res / 4.0;

    PolytopeFit fit;
    fit.single = fit_symmetric(inter, uniform_directions(8, 0.0), margin);

    const double theta_p = principal_angle(inter);
    fit.rotated = fit_symmetric(inter, uniform_directions(8, theta_p), margin);

    // band polytope: restrict to cells near the principal axis, fit along it
    const Eigen::Vector2d e1(std::cos(theta_p), std::sin(theta_p));
    const Eigen::Vector2d e2(-std::sin(theta_p), std::cos(theta_p));
    std::vector<double> offsets;
    for (int i = 0; i < inter.n; ++i)
        for (int j = 0; j < inter.n; ++j)
            if (inter.at(i, j))
                offsets.push_back(std::abs(e2.dot(Eigen::Vector2d(inter.beta3(i), inter.beta2(j)))));
    std::sort(offsets.begin(), offsets.end());
    const double w_band = offsets[static_cast<std::size_t>(0.35 * (offsets.size() - 1))];
    BoolGrid band = inter;
    for (int i = 0; i < band.n; ++i)
        for (int j = 0; j < band.n; ++j) {
            const Eigen::Vector2d q(band.beta3(i), band.beta2(j));
            if (std::abs(e2.dot(q)) > w_band + 1e-12) band.set(i, j, false);
        }
    Polytope band_poly = fit_symmetric(band, uniform_directions(8, theta_p), margin);

    fit.union2.polys = {fit.single, band_poly};
    return fit;
}

}  // namespace ttmpc
