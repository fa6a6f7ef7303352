#include "airnet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "airnet/mhd.hpp"
#include "airnet/rng.hpp"

namespace airnet {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 mul(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalize(const Vec3& a) {
    const double n = norm(a);
    return {a.x / n, a.y / n, a.z / n};
}
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double point_segment_dist(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = sub(b, a);
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(sub(p, a), ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(sub(p, add(a, mul(ab, t))));
}

double segment_segment_dist(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1) {
    // sampled lower bound is enough for clearance rejection at these scales
    double best = 1e300;
    for (int i = 0; i <= 8; ++i) {
        const Vec3 p = add(a0, mul(sub(a1, a0), i / 8.0));
        best = std::min(best, point_segment_dist(p, b0, b1));
    }
    for (int i = 0; i <= 8; ++i) {
        const Vec3 p = add(b0, mul(sub(b1, b0), i / 8.0));
        best = std::min(best, point_segment_dist(p, a0, a1));
    }
    return best;
}

} // namespace

double CenterlineTree::total_length_mm() const {
    double s = 0.0;
    for (const TreeSegment& seg : segments) s += norm(sub(seg.p1, seg.p0));
    return s;
}

bool LungGeometry::inside_left(const Vec3& p) const {
    const double u = (p.x - center_left.x) / semi_axes.x;
    const double v = (p.y - center_left.y) / semi_axes.y;
    const double w = (p.z - center_left.z) / semi_axes.z;
    return u * u + v * v + w * w <= 1.0;
}

bool LungGeometry::inside_right(const Vec3& p) const {
    const double u = (p.x - center_right.x) / semi_axes.x;
    const double v = (p.y - center_right.y) / semi_axes.y;
    const double w = (p.z - center_right.z) / semi_axes.z;
    return u * u + v * v + w * w <= 1.0;
}

double LungGeometry::rho(const Vec3& p) const {
    auto r = [&](const Vec3& c) {
        const double u = (p.x - c.x) / semi_axes.x;
        const double v = (p.y - c.y) / semi_axes.y;
        const double w = (p.z - c.z) / semi_axes.z;
        return std::sqrt(u * u + v * v + w * w);
    };
    return std::min(r(center_left), r(center_right));
}

LungGeometry default_lungs(Index3 dims, double spacing_mm) {
    const double W = dims.x * spacing_mm;
    const double D = dims.y * spacing_mm;
    const double H = dims.z * spacing_mm;
    LungGeometry g;
    g.semi_axes = {0.18 * W, 0.27 * D, 0.33 * H};
    g.center_left = {0.5 * W - 0.225 * W, 0.5 * D, 0.47 * H};
    g.center_right = {0.5 * W + 0.225 * W, 0.5 * D, 0.47 * H};
    return g;
}

namespace {

// endpoint fits when it lies inside the ellipsoid shrunk by `margin` mm on
// every semi-axis
bool inside_shrunk(const Vec3& p, const Vec3& c, const Vec3& semi, double margin) {
    const double ax = semi.x - margin, ay = semi.y - margin, az = semi.z - margin;
    if (ax <= 0 || ay <= 0 || az <= 0) return false;
    const double u = (p.x - c.x) / ax, v = (p.y - c.y) / ay, w = (p.z - c.z) / az;
    return u * u + v * v + w * w <= 1.0;
}

} // namespace

CenterlineTree generate_tree(const TreeSpec& spec, const LungGeometry& lungs, Index3 dims,
                             double spacing_mm) {
    if (spec.generations < 0 || spec.root_radius_mm <= 0.0 || spec.taper <= 0.0 ||
        spec.taper >= 1.0)
        throw std::invalid_argument("generate_tree: invalid TreeSpec");

    const double W = dims.x * spacing_mm;
    const double D = dims.y * spacing_mm;
    const double H = dims.z * spacing_mm;
    Rng rng(derive_seed(spec.seed, 0xA13));

    CenterlineTree tree;
    // trachea: vertical, entering at the top face, carina above the lungs
    const Vec3 top{0.5 * W, 0.5 * D, H};
    const Vec3 carina{0.5 * W, 0.5 * D, 0.62 * H};
    tree.segments.push_back({top, carina, spec.root_radius_mm, 0, -1});
    if (spec.generations == 0) return tree;

    struct Grow {
        int parent;
        int generation;
        bool left_lung;
    };
    std::vector<Grow> frontier;

    // main bronchi aim at a point inside each lung, above its center
    for (int side = 0; side < 2; ++side) {
        const Vec3 c = side == 0 ? lungs.center_left : lungs.center_right;
        const Vec3 target = add(c, Vec3{0, 0, 0.35 * lungs.semi_axes.z});
        tree.segments.push_back(
            {carina, target, spec.root_radius_mm * spec.taper, 1, 0});
        frontier.push_back({static_cast<int>(tree.segments.size()) - 1, 2, side == 0});
    }

    const double clearance_mm = 1.0;
    auto collides = [&](const Vec3& a, const Vec3& b, double r, int parent) {
        for (int i = 0; i < static_cast<int>(tree.segments.size()); ++i) {
            if (i == parent) continue;
            const TreeSegment& o = tree.segments[static_cast<std::size_t>(i)];
            if (o.parent == parent) continue; // sibling shares the branch point
            if (segment_segment_dist(a, b, o.p0, o.p1) < r + o.radius_mm + clearance_mm)
                return true;
        }
        return false;
    };

    while (!frontier.empty()) {
        const Grow g = frontier.front();
        frontier.erase(frontier.begin());
        if (g.generation > spec.generations) continue;
        const TreeSegment& par = tree.segments[static_cast<std::size_t>(g.parent)];
        const Vec3 origin = par.p1;
        const Vec3 pdir = normalize(sub(par.p1, par.p0));
        // orthonormal frame around the parent direction
        Vec3 ref = std::abs(pdir.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
        const Vec3 u = normalize(cross(pdir, ref));
        const Vec3 v = cross(pdir, u);

        const double radius = par.radius_mm * spec.taper;
        const Vec3 lung_center = g.left_lung ? lungs.center_left : lungs.center_right;
        const double fit_margin = radius + 2.5; // wall plus one voxel of clearance
        const double phi0 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        for (int child = 0; child < 2; ++child) {
            bool placed = false;
            for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
                const double theta =
                    rng.uniform(spec.angle_min_deg, spec.angle_max_deg) * 3.14159265358979323846 /
                    180.0;
                const double phi = phi0 + child * 3.14159265358979323846 +
                                   rng.uniform(-0.4, 0.4) +
                                   (attempt > 0 ? rng.uniform(0.0, 2.0 * 3.14159265358979323846)
                                                : 0.0);
                Vec3 dir = add(mul(pdir, std::cos(theta)),
                               add(mul(u, std::sin(theta) * std::cos(phi)),
                                   mul(v, std::sin(theta) * std::sin(phi))));
                dir = normalize(dir);
                const Vec3 inward = normalize(sub(lung_center, origin));
                // later attempts blend toward the lung center so branches
                // near the surface can still fold back inside
                for (double pull : {0.0, 0.4, 0.9}) {
                    const Vec3 d2 =
                        pull == 0.0 ? dir : normalize(add(dir, mul(inward, pull)));
                    for (double shrink : {1.0, 0.75, 0.55, 0.4}) {
                        const double len = spec.length_to_radius * radius * shrink;
                        const Vec3 end = add(origin, mul(d2, len));
                        if (!inside_shrunk(end, lung_center, lungs.semi_axes, fit_margin))
                            continue;
                        if (collides(origin, end, radius, g.parent)) continue;
                        tree.segments.push_back({origin, end, radius, g.generation, g.parent});
                        frontier.push_back(
                            {static_cast<int>(tree.segments.size()) - 1, g.generation + 1,
                             g.left_lung});
                        placed = true;
                        break;
                    }
                    if (placed) break;
                }
            }
            if (!placed)
                throw std::runtime_error(
                    "generate_tree: branch cannot fit after bounded resampling "
                    "(generation " +
                    std::to_string(g.generation) + ")");
        }
    }
    return tree;
}

PhantomBundle render_ct(const CenterlineTree& tree, const PhantomConfig& cfg) {
    const Index3 d = cfg.dims;
    const double s = cfg.spacing_mm;
    const Vec3 sp{s, s, s};
    const PhantomIntensities& I = cfg.intensities;
    const LungGeometry lungs = default_lungs(d, s);

    PhantomBundle b;
    b.tree = tree;
    b.ct = Volume3D(d, sp, {0, 0, 0}, ElementKind::ct_hu);
    b.gt = Volume3D(d, sp, {0, 0, 0}, ElementKind::binary_mask);
    b.lung = Volume3D(d, sp, {0, 0, 0}, ElementKind::binary_mask);
    b.central = Volume3D(d, sp, {0, 0, 0}, ElementKind::binary_mask);

    // body / parenchyma base
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                const Vec3 p{x * s, y * s, z * s};
                if (lungs.inside(p)) {
                    b.ct.at(x, y, z) = I.parenchyma_hu;
                    b.lung.at(x, y, z) = 1.0f;
                } else {
                    b.ct.at(x, y, z) = I.body_hu;
                }
            }

    // vessels: bright distractor tubes fully inside the lungs
    {
        Rng vr(derive_seed(cfg.tree.seed, 0xB255E1));
        for (int side = 0; side < 2; ++side) {
            const Vec3 c = side == 0 ? lungs.center_left : lungs.center_right;
            for (int k = 0; k < cfg.vessels_per_lung; ++k) {
                for (int attempt = 0; attempt < 50; ++attempt) {
                    Vec3 a{c.x + vr.uniform(-0.5, 0.5) * lungs.semi_axes.x,
                           c.y + vr.uniform(-0.5, 0.5) * lungs.semi_axes.y,
                           c.z + vr.uniform(-0.5, 0.5) * lungs.semi_axes.z};
                    Vec3 dir = normalize(
                        {vr.uniform(-1, 1), vr.uniform(-1, 1), vr.uniform(-1, 1)});
                    const double len = vr.uniform(12.0, 28.0);
                    const double radius = vr.uniform(0.8, 1.6);
                    Vec3 bpt = add(a, mul(dir, len));
                    if (lungs.rho(a) > 0.8 || lungs.rho(bpt) > 0.8) continue;
                    // rasterize
                    const int pad = static_cast<int>(radius / s) + 2;
                    const int x0 = std::max(0, static_cast<int>(std::min(a.x, bpt.x) / s) - pad);
                    const int x1 = std::min(d.x - 1, static_cast<int>(std::max(a.x, bpt.x) / s) + pad);
                    const int y0 = std::max(0, static_cast<int>(std::min(a.y, bpt.y) / s) - pad);
                    const int y1 = std::min(d.y - 1, static_cast<int>(std::max(a.y, bpt.y) / s) + pad);
                    const int z0 = std::max(0, static_cast<int>(std::min(a.z, bpt.z) / s) - pad);
                    const int z1 = std::min(d.z - 1, static_cast<int>(std::max(a.z, bpt.z) / s) + pad);
                    for (int z = z0; z <= z1; ++z)
                        for (int y = y0; y <= y1; ++y)
                            for (int x = x0; x <= x1; ++x) {
                                const Vec3 p{x * s, y * s, z * s};
                                if (b.lung.at(x, y, z) != 0.0f &&
                                    point_segment_dist(p, a, bpt) <= radius)
                                    b.ct.at(x, y, z) = I.vessel_hu;
                            }
                    break;
                }
            }
        }
    }

    // airway walls, then lumen on top so no wall cuts through a joint
    auto rasterize = [&](double extra, float hu, bool mark_gt) {
        for (const TreeSegment& seg : tree.segments) {
            const double r = seg.radius_mm + extra;
            const int pad = static_cast<int>(r / s) + 2;
            const int x0 = std::max(0, static_cast<int>(std::min(seg.p0.x, seg.p1.x) / s) - pad);
            const int x1 =
                std::min(d.x - 1, static_cast<int>(std::max(seg.p0.x, seg.p1.x) / s) + pad);
            const int y0 = std::max(0, static_cast<int>(std::min(seg.p0.y, seg.p1.y) / s) - pad);
            const int y1 =
                std::min(d.y - 1, static_cast<int>(std::max(seg.p0.y, seg.p1.y) / s) + pad);
            const int z0 = std::max(0, static_cast<int>(std::min(seg.p0.z, seg.p1.z) / s) - pad);
            const int z1 =
                std::min(d.z - 1, static_cast<int>(std::max(seg.p0.z, seg.p1.z) / s) + pad);
            for (int z = z0; z <= z1; ++z)
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        const Vec3 p{x * s, y * s, z * s};
                        if (point_segment_dist(p, seg.p0, seg.p1) <= r) {
                            b.ct.at(x, y, z) = hu;
                            if (mark_gt) b.gt.at(x, y, z) = 1.0f;
                        }
                    }
        }
    };
    rasterize(cfg.intensities.wall_thickness_mm, I.wall_hu, false);
    rasterize(0.0, I.lumen_hu, true);

    b.central = mask_and_not(b.gt, b.lung);

    if (cfg.noise_sigma_hu > 0.0) {
        Rng nr(derive_seed(cfg.noise_seed, 0x4015E));
        for (auto& v : b.ct.data()) {
            const double noisy = std::round(v + nr.normal(0.0, cfg.noise_sigma_hu));
            v = static_cast<float>(std::clamp(noisy, -1024.0, 1500.0));
        }
    }
    return b;
}

PhantomBundle make_phantom(const PhantomConfig& cfg) {
    const LungGeometry lungs = default_lungs(cfg.dims, cfg.spacing_mm);
    CenterlineTree tree = generate_tree(cfg.tree, lungs, cfg.dims, cfg.spacing_mm);
    return render_ct(tree, cfg);
}

Volume3D voxelize_centerline(const CenterlineTree& tree, Index3 dims, double spacing_mm) {
    Volume3D out(dims, {spacing_mm, spacing_mm, spacing_mm}, {0, 0, 0},
                 ElementKind::binary_mask);
    for (const TreeSegment& seg : tree.segments) {
        const double len = norm(sub(seg.p1, seg.p0));
        const int steps = std::max(2, static_cast<int>(len / (0.25 * spacing_mm)));
        for (int i = 0; i <= steps; ++i) {
            const Vec3 p = add(seg.p0, mul(sub(seg.p1, seg.p0), static_cast<double>(i) / steps));
            const int x = static_cast<int>(std::lround(p.x / spacing_mm));
            const int y = static_cast<int>(std::lround(p.y / spacing_mm));
            const int z = static_cast<int>(std::lround(p.z / spacing_mm));
            if (out.in_bounds(x, y, z)) out.at(x, y, z) = 1.0f;
        }
    }
    return out;
}

void write_phantom(const PhantomBundle& bundle, const PhantomConfig& cfg,
                   const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_mhd(bundle.ct, (fs::path(dir) / "ct.mhd").string());
    write_mhd(bundle.gt, (fs::path(dir) / "gt.mhd").string());
    write_mhd(bundle.lung, (fs::path(dir) / "lung.mhd").string());
    write_mhd(bundle.central, (fs::path(dir) / "central.mhd").string());
    std::ofstream man(fs::path(dir) / "phantom_manifest.txt");
    man << "segments = " << bundle.tree.segments.size() << "\n"
        << "generations = " << cfg.tree.generations << "\n"
        << "total_centerline_mm = " << bundle.tree.total_length_mm() << "\n"
        << "tree_seed = " << cfg.tree.seed << "\n"
        << "noise_seed = " << cfg.noise_seed << "\n"
        << "noise_sigma_hu = " << cfg.noise_sigma_hu << "\n"
        << "dims = " << cfg.dims.x << ' ' << cfg.dims.y << ' ' << cfg.dims.z << "\n"
        << "spacing_mm = " << cfg.spacing_mm << "\n";
}

} // namespace airnet
