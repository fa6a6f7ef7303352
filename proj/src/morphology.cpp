#include "airnet/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace airnet {

namespace {

struct Offsets {
    std::vector<Index3> all;
};

Offsets neighbor_offsets(int connectivity) {
    if (connectivity != 6 && connectivity != 26)
        throw std::invalid_argument("connectivity must be 6 or 26");
    Offsets o;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (!dx && !dy && !dz) continue;
                if (connectivity == 6 && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1)
                    continue;
                o.all.push_back({dx, dy, dz});
            }
    return o;
}

struct UnionFind {
    std::vector<std::int32_t> parent;
    std::int32_t make() {
        parent.push_back(static_cast<std::int32_t>(parent.size()));
        return parent.back();
    }
    std::int32_t find(std::int32_t x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
};

} // namespace

LabelVolume connected_components(const Volume3D& mask, int connectivity) {
    // two-pass union-find; the flood-fill formulation lives in the tests as
    // the independent oracle
    const Index3 d = mask.dims();
    LabelVolume out;
    out.dims = d;
    out.spacing = mask.spacing();
    out.labels.assign(mask.voxel_count(), 0);

    std::vector<Index3> back;
    for (const Index3& o : neighbor_offsets(connectivity).all)
        if (o.z < 0 || (o.z == 0 && (o.y < 0 || (o.y == 0 && o.x < 0)))) back.push_back(o);

    UnionFind uf;
    std::vector<std::int32_t> prov(mask.voxel_count(), -1);
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                const std::size_t i = mask.index(x, y, z);
                if (mask.data()[i] == 0.0f) continue;
                std::int32_t lbl = -1;
                for (const Index3& o : back) {
                    const int nx = x + o.x, ny = y + o.y, nz = z + o.z;
                    if (!mask.in_bounds(nx, ny, nz)) continue;
                    const std::int32_t nl = prov[mask.index(nx, ny, nz)];
                    if (nl < 0) continue;
                    if (lbl < 0)
                        lbl = uf.find(nl);
                    else
                        uf.unite(lbl, nl);
                }
                prov[i] = (lbl < 0) ? uf.make() : uf.find(lbl);
            }

    // dense relabel in scan order of first appearance
    std::vector<std::int32_t> dense(uf.parent.size(), 0);
    std::int32_t next = 0;
    for (std::size_t i = 0; i < prov.size(); ++i) {
        if (prov[i] < 0) continue;
        const std::int32_t root = uf.find(prov[i]);
        if (dense[static_cast<std::size_t>(root)] == 0) {
            dense[static_cast<std::size_t>(root)] = ++next;
            out.component_sizes.push_back(0);
        }
        out.labels[i] = dense[static_cast<std::size_t>(root)];
        out.component_sizes[static_cast<std::size_t>(out.labels[i] - 1)] += 1;
    }
    return out;
}

Volume3D largest_component(const Volume3D& mask, int connectivity) {
    LabelVolume lv = connected_components(mask, connectivity);
    Volume3D out(mask.dims(), mask.spacing(), mask.origin(), ElementKind::binary_mask);
    if (lv.num_components() == 0) return out;
    const std::int32_t best =
        1 + static_cast<std::int32_t>(
                std::max_element(lv.component_sizes.begin(), lv.component_sizes.end()) -
                lv.component_sizes.begin());
    for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = lv.labels[i] == best ? 1.0f : 0.0f;
    return out;
}

Volume3D region_grow(const Volume3D& ct, Index3 seed, float upper_threshold_hu) {
    if (!ct.in_bounds(seed.x, seed.y, seed.z))
        throw std::invalid_argument("region_grow: seed out of bounds");
    if (!(ct.at(seed.x, seed.y, seed.z) < upper_threshold_hu))
        throw std::runtime_error("region_grow: seed intensity not below threshold");
    Volume3D out(ct.dims(), ct.spacing(), ct.origin(), ElementKind::binary_mask);
    std::queue<Index3> q;
    q.push(seed);
    out.at(seed.x, seed.y, seed.z) = 1.0f;
    static const Index3 face[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                   {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    while (!q.empty()) {
        const Index3 p = q.front();
        q.pop();
        for (const Index3& o : face) {
            const int nx = p.x + o.x, ny = p.y + o.y, nz = p.z + o.z;
            if (!ct.in_bounds(nx, ny, nz)) continue;
            if (out.at(nx, ny, nz) != 0.0f) continue;
            if (ct.at(nx, ny, nz) < upper_threshold_hu) {
                out.at(nx, ny, nz) = 1.0f;
                q.push({nx, ny, nz});
            }
        }
    }
    return out;
}

Volume3D fill_holes_slicewise(const Volume3D& mask) {
    const Index3 d = mask.dims();
    Volume3D out = mask;
    std::vector<std::uint8_t> reach(static_cast<std::size_t>(d.x) * d.y);
    for (int z = 0; z < d.z; ++z) {
        std::fill(reach.begin(), reach.end(), 0);
        std::queue<int> q;
        auto idx2 = [&](int x, int y) { return static_cast<std::size_t>(y) * d.x + x; };
        auto try_push = [&](int x, int y) {
            if (x < 0 || y < 0 || x >= d.x || y >= d.y) return;
            const std::size_t i = idx2(x, y);
            if (reach[i] || mask.at(x, y, z) != 0.0f) return;
            reach[i] = 1;
            q.push(static_cast<int>(i));
        };
        for (int x = 0; x < d.x; ++x) {
            try_push(x, 0);
            try_push(x, d.y - 1);
        }
        for (int y = 0; y < d.y; ++y) {
            try_push(0, y);
            try_push(d.x - 1, y);
        }
        while (!q.empty()) {
            const int i = q.front();
            q.pop();
            const int x = i % d.x, y = i / d.x;
            try_push(x + 1, y);
            try_push(x - 1, y);
            try_push(x, y + 1);
            try_push(x, y - 1);
        }
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                if (mask.at(x, y, z) == 0.0f && !reach[idx2(x, y)]) out.at(x, y, z) = 1.0f;
    }
    return out;
}

Volume3D morphological_close(const Volume3D& mask, int radius) {
    if (radius < 1) return mask;
    std::vector<Index3> ball;
    for (int dz = -radius; dz <= radius; ++dz)
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
                if (dx * dx + dy * dy + dz * dz <= radius * radius)
                    ball.push_back({dx, dy, dz});
    const Index3 d = mask.dims();
    Volume3D dil(d, mask.spacing(), mask.origin(), ElementKind::binary_mask);
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                if (mask.at(x, y, z) == 0.0f) continue;
                for (const Index3& o : ball) {
                    const int nx = x + o.x, ny = y + o.y, nz = z + o.z;
                    if (mask.in_bounds(nx, ny, nz)) dil.at(nx, ny, nz) = 1.0f;
                }
            }
    Volume3D out(d, mask.spacing(), mask.origin(), ElementKind::binary_mask);
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                bool all = true;
                for (const Index3& o : ball) {
                    const int nx = x + o.x, ny = y + o.y, nz = z + o.z;
                    if (!dil.in_bounds(nx, ny, nz) || dil.at(nx, ny, nz) == 0.0f) {
                        all = false;
                        break;
                    }
                }
                if (all) out.at(x, y, z) = 1.0f;
            }
    return out;
}

Volume3D segment_lungs(const Volume3D& ct, const LungSegParams& params) {
    const Index3 d = ct.dims();
    Volume3D air(d, ct.spacing(), ct.origin(), ElementKind::binary_mask);
    for (std::size_t i = 0; i < air.data().size(); ++i)
        air.data()[i] = ct.data()[i] < params.threshold_hu ? 1.0f : 0.0f;

    LabelVolume lv = connected_components(air, 6);
    if (lv.num_components() == 0)
        throw std::runtime_error("segment_lungs: no sub-threshold air found");

    // components with any voxel on a volume face are exterior-like and excluded
    std::vector<std::uint8_t> touches(static_cast<std::size_t>(lv.num_components()), 0);
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                if (x != 0 && y != 0 && z != 0 && x != d.x - 1 && y != d.y - 1 && z != d.z - 1)
                    continue;
                const std::int32_t l = lv.label_at(x, y, z);
                if (l > 0) touches[static_cast<std::size_t>(l - 1)] = 1;
            }

    std::vector<std::pair<std::size_t, std::int32_t>> candidates; // (size, label)
    for (std::int32_t l = 1; l <= lv.num_components(); ++l)
        if (!touches[static_cast<std::size_t>(l - 1)])
            candidates.push_back({lv.component_sizes[static_cast<std::size_t>(l - 1)], l});
    if (candidates.empty())
        throw std::runtime_error("segment_lungs: no candidate lung component");
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<std::int32_t> keep{candidates[0].second};
    if (candidates.size() > 1 &&
        static_cast<double>(candidates[1].first) >=
            params.second_component_min_fraction * static_cast<double>(candidates[0].first))
        keep.push_back(candidates[1].second);

    Volume3D lungs(d, ct.spacing(), ct.origin(), ElementKind::binary_mask);
    for (std::size_t i = 0; i < lungs.data().size(); ++i)
        lungs.data()[i] = (lv.labels[i] == keep[0] || (keep.size() > 1 && lv.labels[i] == keep[1]))
                              ? 1.0f
                              : 0.0f;

    lungs = morphological_close(lungs, params.closing_radius);
    lungs = fill_holes_slicewise(lungs);
    return lungs;
}

Index3 detect_trachea_seed(const Volume3D& ct, const CentralAirwayParams& params) {
    const Index3 d = ct.dims();
    const int z0 = std::max(0, d.z - params.seed_slab_slices);
    Volume3D slab({d.x, d.y, d.z - z0}, ct.spacing(), ct.origin(), ElementKind::binary_mask);
    bool any = false;
    for (int z = z0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                if (ct.at(x, y, z) < params.grow_threshold_hu) {
                    slab.at(x, y, z - z0) = 1.0f;
                    any = true;
                }
    if (!any)
        throw std::runtime_error(
            "detect_trachea_seed: no sub-threshold voxel in the cranial slab");
    LabelVolume lv = connected_components(slab, 6);
    const std::int32_t best =
        1 + static_cast<std::int32_t>(
                std::max_element(lv.component_sizes.begin(), lv.component_sizes.end()) -
                lv.component_sizes.begin());
    double cx = 0, cy = 0, cz = 0;
    std::size_t n = 0;
    for (int z = 0; z < slab.dims().z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                if (lv.label_at(x, y, z) == best) {
                    cx += x;
                    cy += y;
                    cz += z;
                    ++n;
                }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    cz /= static_cast<double>(n);
    // snap to the nearest voxel of the component (centroid of a ring could
    // fall outside it)
    Index3 bestv{0, 0, 0};
    double bestd = 1e300;
    for (int z = 0; z < slab.dims().z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                if (lv.label_at(x, y, z) == best) {
                    const double dd = (x - cx) * (x - cx) + (y - cy) * (y - cy) +
                                      (z - cz) * (z - cz);
                    if (dd < bestd) {
                        bestd = dd;
                        bestv = {x, y, z + z0};
                    }
                }
    return bestv;
}

Volume3D extract_central_airways(const Volume3D& ct, const Volume3D& lung_mask,
                                 std::optional<Index3> seed,
                                 const CentralAirwayParams& params) {
    if (!(ct.dims() == lung_mask.dims()))
        throw std::invalid_argument("extract_central_airways: dims mismatch");
    const Index3 s = seed ? *seed : detect_trachea_seed(ct, params);
    Volume3D grown = region_grow(ct, s, params.grow_threshold_hu);
    return mask_and_not(grown, lung_mask);
}

} // namespace airnet
