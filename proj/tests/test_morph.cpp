#include <cmath>
#include <queue>
#include <set>
#include <stack>

#include "doctest.h"

#include "airnet/morphology.hpp"
#include "airnet/rng.hpp"
#include "test_support.hpp"

using namespace airnet;

namespace {

// repeated BFS flood fill, first-appearance numbering: the independent
// labelling oracle
std::vector<std::int32_t> flood_labels(const Volume3D& mask, int conn) {
    const Index3 d = mask.dims();
    std::vector<std::int32_t> lab(mask.voxel_count(), 0);
    std::int32_t next = 0;
    std::vector<Index3> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (!dx && !dy && !dz) continue;
                if (conn == 6 && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1) continue;
                offs.push_back({dx, dy, dz});
            }
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                const std::size_t i = mask.index(x, y, z);
                if (mask.data()[i] == 0.0f || lab[i] != 0) continue;
                ++next;
                std::queue<Index3> q;
                q.push({x, y, z});
                lab[i] = next;
                while (!q.empty()) {
                    Index3 p = q.front();
                    q.pop();
                    for (const Index3& o : offs) {
                        const int nx = p.x + o.x, ny = p.y + o.y, nz = p.z + o.z;
                        if (!mask.in_bounds(nx, ny, nz)) continue;
                        const std::size_t j = mask.index(nx, ny, nz);
                        if (mask.data()[j] != 0.0f && lab[j] == 0) {
                            lab[j] = next;
                            q.push({nx, ny, nz});
                        }
                    }
                }
            }
    return lab;
}

Volume3D capsule_mask(Index3 dims, Vec3 a, Vec3 b, double radius) {
    Volume3D v(dims, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    const double abx = b.x - a.x, aby = b.y - a.y, abz = b.z - a.z;
    const double len2 = abx * abx + aby * aby + abz * abz;
    for (int z = 0; z < dims.z; ++z)
        for (int y = 0; y < dims.y; ++y)
            for (int x = 0; x < dims.x; ++x) {
                double t = len2 > 0 ? ((x - a.x) * abx + (y - a.y) * aby + (z - a.z) * abz) / len2
                                    : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double px = a.x + t * abx - x, py = a.y + t * aby - y,
                             pz = a.z + t * abz - z;
                if (px * px + py * py + pz * pz <= radius * radius) v.at(x, y, z) = 1.0f;
            }
    return v;
}

} // namespace

TEST_CASE("connected_components: single voxel") {
    Volume3D m({5, 5, 5}, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    m.at(2, 2, 2) = 1.0f;
    LabelVolume lv = connected_components(m, 26);
    CHECK(lv.num_components() == 1);
    CHECK(lv.component_sizes[0] == 1);
    CHECK(lv.label_at(2, 2, 2) == 1);
}

TEST_CASE("connected_components: corner-touching voxels split at 6, join at 26") {
    Volume3D m({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    m.at(1, 1, 1) = 1.0f;
    m.at(2, 2, 2) = 1.0f;
    CHECK(connected_components(m, 26).num_components() == 1);
    CHECK(connected_components(m, 6).num_components() == 2);
}

TEST_CASE("connected_components equals the flood-fill oracle on random masks") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Volume3D m = testsup::random_mask({20, 20, 20}, 0.25, 500 + seed);
        for (int conn : {6, 26}) {
            LabelVolume lv = connected_components(m, conn);
            std::vector<std::int32_t> want = flood_labels(m, conn);
            CHECK(lv.labels == want);
            // partition: sizes sum to foreground count
            std::size_t total = 0;
            for (std::size_t s : lv.component_sizes) total += s;
            CHECK(total == m.count_nonzero());
        }
    }
}

TEST_CASE("region_grow: uniform dark cylinder is segmented exactly") {
    Volume3D ct({24, 24, 24}, {1, 1, 1}, {0, 0, 0}, ElementKind::ct_hu);
    ct.fill(0.0f);
    Volume3D want({24, 24, 24}, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    for (int z = 2; z < 22; ++z)
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x)
                if ((x - 12) * (x - 12) + (y - 12) * (y - 12) <= 16) {
                    ct.at(x, y, z) = -1000.0f;
                    want.at(x, y, z) = 1.0f;
                }
    Volume3D got = region_grow(ct, {12, 12, 10}, -500.0f);
    CHECK(got.data() == want.data());
}

TEST_CASE("region_grow: isolated voxel, seed containment, threshold error") {
    Volume3D ct({8, 8, 8}, {1, 1, 1}, {0, 0, 0}, ElementKind::ct_hu);
    ct.fill(100.0f);
    ct.at(4, 4, 4) = -800.0f;
    Volume3D got = region_grow(ct, {4, 4, 4}, -500.0f);
    CHECK(got.count_nonzero() == 1);
    CHECK(got.at(4, 4, 4) == 1.0f);
    CHECK_THROWS_AS(region_grow(ct, {0, 0, 0}, -500.0f), std::runtime_error);
    CHECK_THROWS_AS(region_grow(ct, {99, 0, 0}, -500.0f), std::invalid_argument);
}

TEST_CASE("region_grow is traversal-order independent (BFS vs DFS oracle)") {
    Volume3D ct = testsup::random_ct({15, 15, 15}, 31);
    // find a sub-threshold seed
    Index3 seed{-1, -1, -1};
    for (int z = 0; z < 15 && seed.x < 0; ++z)
        for (int y = 0; y < 15 && seed.x < 0; ++y)
            for (int x = 0; x < 15 && seed.x < 0; ++x)
                if (ct.at(x, y, z) < -200.0f) seed = {x, y, z};
    REQUIRE(seed.x >= 0);
    Volume3D bfs = region_grow(ct, seed, -200.0f);

    // DFS oracle
    Volume3D dfs(ct.dims(), ct.spacing(), ct.origin(), ElementKind::binary_mask);
    std::stack<Index3> st;
    st.push(seed);
    dfs.at(seed.x, seed.y, seed.z) = 1.0f;
    static const Index3 face[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                   {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    while (!st.empty()) {
        Index3 p = st.top();
        st.pop();
        for (const Index3& o : face) {
            const int nx = p.x + o.x, ny = p.y + o.y, nz = p.z + o.z;
            if (!ct.in_bounds(nx, ny, nz) || dfs.at(nx, ny, nz) != 0.0f) continue;
            if (ct.at(nx, ny, nz) < -200.0f) {
                dfs.at(nx, ny, nz) = 1.0f;
                st.push({nx, ny, nz});
            }
        }
    }
    CHECK(bfs.data() == dfs.data());
}

TEST_CASE("segment_lungs: two dark ellipsoids in a bright body") {
    const Index3 d{64, 64, 64};
    Volume3D ct(d, {1, 1, 1}, {0, 0, 0}, ElementKind::ct_hu);
    ct.fill(40.0f);
    Volume3D ell(d, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    auto inside = [](int x, int y, int z, int cx, int cy, int cz) {
        const double a = 11, b = 14, c = 18;
        const double u = (x - cx) / a, v = (y - cy) / b, w = (z - cz) / c;
        return u * u + v * v + w * w <= 1.0;
    };
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                if (inside(x, y, z, 18, 32, 30) || inside(x, y, z, 46, 32, 30)) {
                    ct.at(x, y, z) = -850.0f;
                    ell.at(x, y, z) = 1.0f;
                }

    Volume3D lungs = segment_lungs(ct);
    const std::size_t covered = overlap_count(lungs, ell);
    CHECK(static_cast<double>(covered) >= 0.99 * static_cast<double>(ell.count_nonzero()));
    // no bright body voxel enters the mask
    std::size_t body_in_mask = 0;
    for (std::size_t i = 0; i < lungs.data().size(); ++i)
        if (lungs.data()[i] != 0.0f && ct.data()[i] == 40.0f) ++body_in_mask;
    CHECK(body_in_mask == 0);
}

TEST_CASE("segment_lungs: all-bright volume errors; border air is excluded") {
    Volume3D bright({16, 16, 16}, {1, 1, 1}, {0, 0, 0}, ElementKind::ct_hu);
    bright.fill(100.0f);
    CHECK_THROWS_AS(segment_lungs(bright), std::runtime_error);

    // air slab touching the border plus an interior air blob: only the
    // interior blob survives
    Volume3D ct({32, 32, 32}, {1, 1, 1}, {0, 0, 0}, ElementKind::ct_hu);
    ct.fill(40.0f);
    for (int z = 0; z < 32; ++z)
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 4; ++x) ct.at(x, y, z) = -1000.0f; // touches border
    for (int z = 12; z < 20; ++z)
        for (int y = 12; y < 20; ++y)
            for (int x = 12; x < 20; ++x) ct.at(x, y, z) = -800.0f;
    Volume3D lungs = segment_lungs(ct);
    for (int z = 0; z < 32; ++z)
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 4; ++x) CHECK(lungs.at(x, y, z) == 0.0f);
    CHECK(lungs.at(15, 15, 15) == 1.0f);
}

TEST_CASE("extract_central_airways: tube outside the lung mask") {
    const Index3 d{40, 40, 60};
    Volume3D ct(d, {1, 1, 1}, {0, 0, 0}, ElementKind::ct_hu);
    ct.fill(40.0f);
    Volume3D lung(d, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    // lung blob in the lower half
    for (int z = 5; z < 30; ++z)
        for (int y = 10; y < 30; ++y)
            for (int x = 10; x < 30; ++x) {
                ct.at(x, y, z) = -850.0f;
                lung.at(x, y, z) = 1.0f;
            }
    // vertical dark tube from the top into the lung
    for (int z = 25; z < 60; ++z)
        for (int y = 18; y <= 22; ++y)
            for (int x = 18; x <= 22; ++x)
                if ((x - 20) * (x - 20) + (y - 20) * (y - 20) <= 4) ct.at(x, y, z) = -980.0f;

    Index3 seed = detect_trachea_seed(ct);
    CHECK(ct.at(seed.x, seed.y, seed.z) == -980.0f);
    CHECK(seed.z >= 50);

    Volume3D central = extract_central_airways(ct, lung);
    CHECK(central.count_nonzero() > 0);
    CHECK(overlap_count(central, lung) == 0);
    // every central voxel is tube, not lung interior
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                if (central.at(x, y, z) != 0.0f) CHECK(ct.at(x, y, z) == -980.0f);

    Volume3D nothing(d, {1, 1, 1}, {0, 0, 0}, ElementKind::ct_hu);
    nothing.fill(100.0f);
    CHECK_THROWS_AS(detect_trachea_seed(nothing), std::runtime_error);
}

TEST_CASE("skeletonize: 1-voxel-wide line is unchanged") {
    Volume3D m({20, 7, 7}, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    for (int x = 2; x < 18; ++x) m.at(x, 3, 3) = 1.0f;
    Volume3D s = skeletonize(m);
    CHECK(s.data() == m.data());
}

TEST_CASE("skeletonize: solid tube thins to a single path of ~40 voxels") {
    const Index3 d{48, 15, 15};
    Volume3D tube = capsule_mask(d, {4, 7, 7}, {43, 7, 7}, 3.0);
    Volume3D s = skeletonize(tube);
    // subset of the input
    for (std::size_t i = 0; i < s.data().size(); ++i)
        if (s.data()[i] != 0.0f) CHECK(tube.data()[i] != 0.0f);
    CHECK(connected_components(s, 26).num_components() == 1);
    const std::size_t n = s.count_nonzero();
    MESSAGE("tube skeleton voxels: ", n);
    CHECK(n >= 40);
    CHECK(n <= 48);
    // idempotent
    Volume3D s2 = skeletonize(s);
    CHECK(s2.data() == s.data());
}

TEST_CASE("skeletonize: subset, idempotence, component preservation on random masks") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Volume3D m = testsup::random_mask({14, 14, 14}, 0.35, 900 + seed);
        Volume3D s = skeletonize(m);
        for (std::size_t i = 0; i < s.data().size(); ++i)
            if (s.data()[i] != 0.0f) CHECK(m.data()[i] != 0.0f);
        CHECK(connected_components(s, 26).num_components() ==
              connected_components(m, 26).num_components());
        Volume3D s2 = skeletonize(s);
        CHECK(s2.data() == s.data());
    }
}

TEST_CASE("fill_holes: solid mask unchanged; hollow square filled") {
    Volume3D solid = testsup::random_mask({1, 1, 1}, 1.0, 0);
    Volume3D m({12, 12, 3}, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    for (int i = 2; i <= 9; ++i) {
        m.at(i, 2, 1) = 1.0f;
        m.at(i, 9, 1) = 1.0f;
        m.at(2, i, 1) = 1.0f;
        m.at(9, i, 1) = 1.0f;
    }
    Volume3D f = fill_holes_slicewise(m);
    for (int y = 2; y <= 9; ++y)
        for (int x = 2; x <= 9; ++x) CHECK(f.at(x, y, 1) == 1.0f);
    CHECK(f.at(0, 0, 1) == 0.0f);
    CHECK(f.at(5, 5, 0) == 0.0f); // other slices untouched

    Volume3D solid2({6, 6, 6}, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    solid2.fill(1.0f);
    CHECK(fill_holes_slicewise(solid2).data() == solid2.data());
}

TEST_CASE("fill_holes equals the border-flood complement oracle on random masks") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Volume3D m = testsup::random_mask({15, 13, 4}, 0.45, 700 + seed);
        Volume3D got = fill_holes_slicewise(m);
        // oracle: per slice, 4-connected background flood from the border
        const Index3 d = m.dims();
        for (int z = 0; z < d.z; ++z) {
            std::vector<std::uint8_t> reach(static_cast<std::size_t>(d.x) * d.y, 0);
            std::queue<std::pair<int, int>> q;
            auto push = [&](int x, int y) {
                if (x < 0 || y < 0 || x >= d.x || y >= d.y) return;
                const std::size_t i = static_cast<std::size_t>(y) * d.x + x;
                if (reach[i] || m.at(x, y, z) != 0.0f) return;
                reach[i] = 1;
                q.push({x, y});
            };
            for (int x = 0; x < d.x; ++x) {
                push(x, 0);
                push(x, d.y - 1);
            }
            for (int y = 0; y < d.y; ++y) {
                push(0, y);
                push(d.x - 1, y);
            }
            while (!q.empty()) {
                auto [x, y] = q.front();
                q.pop();
                push(x + 1, y);
                push(x - 1, y);
                push(x, y + 1);
                push(x, y - 1);
            }
            for (int y = 0; y < d.y; ++y)
                for (int x = 0; x < d.x; ++x) {
                    const bool fg = m.at(x, y, z) != 0.0f;
                    const bool want =
                        fg || !reach[static_cast<std::size_t>(y) * d.x + x];
                    CHECK(got.at(x, y, z) == (want ? 1.0f : 0.0f));
                }
        }
    }
}
