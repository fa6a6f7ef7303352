#ifndef AIRNET_CHECKPOINT_HPP
#define AIRNET_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "airnet/adam.hpp"
#include "airnet/unet.hpp"

namespace airnet {

/// Self-describing little-endian binary checkpoint: magic, config block,
/// epoch / step counters, then weight + bias + Adam moment blobs in layer
/// order. Round trips are bit-exact.
struct Checkpoint {
    UNetModel model;
    AdamState adam;
    int epoch = 0;
    double best_val_loss = 0.0;
};

void save_checkpoint(const UNetModel& model, const AdamState& adam, int epoch,
                     double best_val_loss, const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

/// Loads and verifies the stored config equals `expect`; throws on mismatch.
Checkpoint load_checkpoint(const std::string& path, const UNetConfig& expect);

} // namespace airnet

#endif
