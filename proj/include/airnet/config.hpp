#ifndef AIRNET_CONFIG_HPP
#define AIRNET_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "airnet/morphology.hpp"
#include "airnet/phantom.hpp"
#include "airnet/train.hpp"

namespace airnet {

/// Flat typed key-value configuration with [section] headers. Unknown keys
/// are rejected at load so typos fail fast.
class IniFile {
public:
    static IniFile parse_file(const std::string& path);
    static IniFile parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    double get_num(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

    /// Sorted "section.key = value" lines; input to the config hash.
    std::string canonical() const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_; // "section.key" -> value
};

std::uint64_t fnv1a64(const std::string& s);

struct PipelineConfig {
    // [paths]
    std::string out_dir = "out";
    std::string train_list; // text file, one scan directory per line
    std::string val_list;

    // [model]
    UNetConfig model{3, 8, 3, {68, 68, 68}, 1, 1}; // desk-scale default

    // [train]
    AdamHyperParams adam;
    AugmentParams augment;
    int patches_per_scan = 8;
    int epoch_cap = 1000;
    int roi_buffer = 30;
    int val_windows_per_scan = 8;
    int ma_window = 50;
    int stall_window = 20;
    double rise_tol = 0.05;
    double stall_tol = 0.001;
    std::uint64_t seed = 17;

    // [infer]
    std::string mode = "default"; // default | exact
    float threshold = 0.5f;
    int connectivity = 26;
    bool save_prob = false;

    // [phantom]
    PhantomConfig phantom;
    int phantom_count = 15;

    // [morph]
    LungSegParams lung_params;
    CentralAirwayParams central_params;

    std::uint64_t config_hash = 0;

    static PipelineConfig from_ini(const IniFile& ini);
    TrainOptions to_train_options() const;

    /// Resolves mode "exact" to threshold 0.1 / 6-connectivity unless the
    /// values were given explicitly.
    void apply_mode(bool threshold_explicit, bool connectivity_explicit);
};

std::vector<std::string> read_list_file(const std::string& path);

/// Reproducibility manifest written next to every run's outputs. Contains no
/// timestamps so reruns stay byte-identical.
void write_manifest(const std::string& out_dir, const std::string& subcommand,
                    std::uint64_t config_hash, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs);

} // namespace airnet

#endif
