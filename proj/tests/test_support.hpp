#ifndef AIRNET_TEST_SUPPORT_HPP
#define AIRNET_TEST_SUPPORT_HPP

#include <filesystem>
#include <random>
#include <string>

#include "airnet/rng.hpp"
#include "airnet/volume.hpp"

namespace testsup {

// Scratch directory unique per test binary run.
inline std::filesystem::path tmp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("airnet_test_" + tag);
    std::filesystem::create_directories(dir);
    return dir;
}

inline airnet::Volume3D random_mask(airnet::Index3 dims, double fg_prob, std::uint64_t seed) {
    airnet::Rng rng(seed);
    airnet::Volume3D v(dims, {1, 1, 1}, {0, 0, 0}, airnet::ElementKind::binary_mask);
    for (auto& x : v.data()) x = rng.uniform() < fg_prob ? 1.0f : 0.0f;
    return v;
}

inline airnet::Volume3D random_ct(airnet::Index3 dims, std::uint64_t seed) {
    airnet::Rng rng(seed);
    airnet::Volume3D v(dims, {1, 1, 1}, {0, 0, 0}, airnet::ElementKind::ct_hu);
    for (auto& x : v.data()) x = static_cast<float>(rng.uniform_int(-1024, 1500));
    return v;
}

} // namespace testsup

#endif
