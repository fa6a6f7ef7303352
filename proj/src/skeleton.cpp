#include "airnet/morphology.hpp"

#include <array>
#include <cstdint>

namespace airnet {

namespace {

// 3x3x3 neighborhood cell index: n = (dz+1)*9 + (dy+1)*3 + (dx+1); center 13.
struct NeighborTables {
    std::array<std::array<int, 3>, 27> offset;
    // 26-adjacency between non-center cells (for the foreground condition)
    std::array<std::vector<int>, 27> adj26;
    // 6-adjacency restricted to the 18-neighborhood (for the background
    // condition), plus which cells are faces / in N18
    std::array<std::vector<int>, 27> adj6;
    std::array<bool, 27> in18{};
    std::array<bool, 27> face{};

    NeighborTables() {
        for (int n = 0; n < 27; ++n) {
            const int dz = n / 9 - 1, dy = (n / 3) % 3 - 1, dx = n % 3 - 1;
            offset[static_cast<std::size_t>(n)] = {dx, dy, dz};
            const int nz = std::abs(dx) + std::abs(dy) + std::abs(dz);
            in18[static_cast<std::size_t>(n)] = n != 13 && nz <= 2;
            face[static_cast<std::size_t>(n)] = nz == 1;
        }
        for (int a = 0; a < 27; ++a) {
            if (a == 13) continue;
            for (int b = 0; b < 27; ++b) {
                if (b == 13 || b == a) continue;
                const auto& oa = offset[static_cast<std::size_t>(a)];
                const auto& ob = offset[static_cast<std::size_t>(b)];
                const int ax = std::abs(oa[0] - ob[0]), ay = std::abs(oa[1] - ob[1]),
                          az = std::abs(oa[2] - ob[2]);
                if (std::max(ax, std::max(ay, az)) == 1)
                    adj26[static_cast<std::size_t>(a)].push_back(b);
                if (in18[static_cast<std::size_t>(a)] && in18[static_cast<std::size_t>(b)] &&
                    ax + ay + az == 1)
                    adj6[static_cast<std::size_t>(a)].push_back(b);
            }
        }
    }
};

const NeighborTables& tables() {
    static const NeighborTables t;
    return t;
}

// bit n of `bits` = foreground of neighborhood cell n (center included)
std::uint32_t gather_bits(const Volume3D& v, int x, int y, int z) {
    std::uint32_t bits = 0;
    int n = 0;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx, ++n) {
                const int nx = x + dx, ny = y + dy, nz = z + dz;
                if (v.in_bounds(nx, ny, nz) && v.at(nx, ny, nz) != 0.0f)
                    bits |= 1u << n;
            }
    return bits;
}

int fg_neighbor_count(std::uint32_t bits) {
    return __builtin_popcount(bits & ~(1u << 13));
}

// Topological characterization of a simple point: exactly one 26-component
// of foreground among the 26 neighbors, and exactly one 6-component of
// background within the 18-neighborhood touching a face cell.
bool is_simple(std::uint32_t bits) {
    const NeighborTables& t = tables();

    // foreground condition
    std::uint32_t fg = bits & ~(1u << 13);
    if (fg == 0) return false;
    {
        int start = __builtin_ctz(fg);
        std::uint32_t visited = 0;
        int stack[26];
        int sp = 0;
        stack[sp++] = start;
        visited |= 1u << start;
        while (sp) {
            const int c = stack[--sp];
            for (int nb : t.adj26[static_cast<std::size_t>(c)])
                if ((fg >> nb & 1u) && !(visited >> nb & 1u)) {
                    visited |= 1u << nb;
                    stack[sp++] = nb;
                }
        }
        if (visited != fg) return false; // more than one foreground component
    }

    // background condition
    std::uint32_t bg18 = 0;
    for (int n = 0; n < 27; ++n)
        if (t.in18[static_cast<std::size_t>(n)] && !(bits >> n & 1u)) bg18 |= 1u << n;
    int face_components = 0;
    std::uint32_t visited = 0;
    for (int n = 0; n < 27; ++n) {
        if (!(bg18 >> n & 1u) || (visited >> n & 1u)) continue;
        bool has_face = false;
        int stack[18];
        int sp = 0;
        stack[sp++] = n;
        visited |= 1u << n;
        while (sp) {
            const int c = stack[--sp];
            if (t.face[static_cast<std::size_t>(c)]) has_face = true;
            for (int nb : t.adj6[static_cast<std::size_t>(c)])
                if ((bg18 >> nb & 1u) && !(visited >> nb & 1u)) {
                    visited |= 1u << nb;
                    stack[sp++] = nb;
                }
        }
        if (has_face) ++face_components;
    }
    return face_components == 1;
}

} // namespace

Volume3D skeletonize(const Volume3D& mask) {
    Volume3D out = mask;
    const Index3 d = out.dims();
    static const Index3 dirs[6] = {{0, 0, 1}, {0, 0, -1}, {0, 1, 0},
                                   {0, -1, 0}, {1, 0, 0}, {-1, 0, 0}};
    std::vector<Index3> candidates;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const Index3& dir : dirs) {
            candidates.clear();
            for (int z = 0; z < d.z; ++z)
                for (int y = 0; y < d.y; ++y)
                    for (int x = 0; x < d.x; ++x) {
                        if (out.at(x, y, z) == 0.0f) continue;
                        const int bx = x + dir.x, by = y + dir.y, bz = z + dir.z;
                        if (out.in_bounds(bx, by, bz) && out.at(bx, by, bz) != 0.0f)
                            continue; // not a border point in this direction
                        const std::uint32_t bits = gather_bits(out, x, y, z);
                        if (fg_neighbor_count(bits) < 2) continue; // line end or isolated
                        if (is_simple(bits)) candidates.push_back({x, y, z});
                    }
            // sequential deletion with re-check keeps the thinning
            // topology-preserving
            for (const Index3& p : candidates) {
                const std::uint32_t bits = gather_bits(out, p.x, p.y, p.z);
                if (fg_neighbor_count(bits) < 2) continue;
                if (!is_simple(bits)) continue;
                out.at(p.x, p.y, p.z) = 0.0f;
                changed = true;
            }
        }
    }
    return out;
}

} // namespace airnet
