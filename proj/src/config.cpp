#include "airnet/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace airnet {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "paths.out_dir", "paths.train_list", "paths.val_list",
        "model.levels", "model.base_channels", "model.valid_levels", "model.patch_size",
        "model.in_channels", "model.out_channels",
        "train.lr", "train.beta1", "train.beta2", "train.epsilon", "train.patches_per_scan",
        "train.epoch_cap", "train.roi_buffer", "train.val_windows_per_scan", "train.ma_window",
        "train.stall_window", "train.rise_tol", "train.stall_tol", "train.seed",
        "train.augment", "train.flips", "train.max_rotate_deg", "train.scale_min",
        "train.scale_max",
        "infer.mode", "infer.threshold", "infer.connectivity", "infer.save_prob",
        "infer.roi_buffer",
        "phantom.count", "phantom.dims", "phantom.spacing", "phantom.generations",
        "phantom.root_radius", "phantom.taper", "phantom.angle_min", "phantom.angle_max",
        "phantom.length_to_radius", "phantom.noise_sigma", "phantom.vessels_per_lung",
        "phantom.seed",
        "morph.lung_threshold_hu", "morph.central_threshold_hu", "morph.closing_radius",
    };
    return keys;
}

} // namespace

IniFile IniFile::parse_string(const std::string& text, const std::string& origin) {
    IniFile ini;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        const std::string key = section + "." + trim(line.substr(0, eq));
        if (!known_keys().count(key))
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": unknown configuration key '" + key + "'");
        ini.kv_[key] = trim(line.substr(eq + 1));
    }
    return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_string(os.str(), path);
}

bool IniFile::has(const std::string& section, const std::string& key) const {
    return kv_.count(section + "." + key) != 0;
}

std::string IniFile::get_str(const std::string& section, const std::string& key,
                             const std::string& fallback) const {
    auto it = kv_.find(section + "." + key);
    return it == kv_.end() ? fallback : it->second;
}

double IniFile::get_num(const std::string& section, const std::string& key,
                        double fallback) const {
    auto it = kv_.find(section + "." + key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key " + section + "." + key + " is not a number: '" +
                                 it->second + "'");
    }
}

int IniFile::get_int(const std::string& section, const std::string& key, int fallback) const {
    const double v = get_num(section, key, static_cast<double>(fallback));
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw std::runtime_error("config: key " + section + "." + key + " must be an integer");
    return i;
}

bool IniFile::get_bool(const std::string& section, const std::string& key,
                       bool fallback) const {
    auto it = kv_.find(section + "." + key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::runtime_error("config: key " + section + "." + key + " must be true or false");
}

std::uint64_t IniFile::get_u64(const std::string& section, const std::string& key,
                               std::uint64_t fallback) const {
    auto it = kv_.find(section + "." + key);
    if (it == kv_.end()) return fallback;
    return std::stoull(it->second);
}

void IniFile::set(const std::string& section, const std::string& key,
                  const std::string& value) {
    const std::string full = section + "." + key;
    if (!known_keys().count(full))
        throw std::runtime_error("config: unknown key '" + full + "'");
    kv_[full] = value;
}

std::string IniFile::canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv_) os << k << " = " << v << '\n';
    return os.str();
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

PipelineConfig PipelineConfig::from_ini(const IniFile& ini) {
    PipelineConfig c;
    c.out_dir = ini.get_str("paths", "out_dir", c.out_dir);
    c.train_list = ini.get_str("paths", "train_list", "");
    c.val_list = ini.get_str("paths", "val_list", "");

    c.model.levels = ini.get_int("model", "levels", c.model.levels);
    c.model.base_channels = ini.get_int("model", "base_channels", c.model.base_channels);
    c.model.valid_levels = ini.get_int("model", "valid_levels", c.model.valid_levels);
    const int patch = ini.get_int("model", "patch_size", c.model.input_shape[0]);
    c.model.input_shape = {patch, patch, patch};
    c.model.in_channels = ini.get_int("model", "in_channels", 1);
    c.model.out_channels = ini.get_int("model", "out_channels", 1);

    c.adam.lr = static_cast<float>(ini.get_num("train", "lr", c.adam.lr));
    c.adam.beta1 = static_cast<float>(ini.get_num("train", "beta1", c.adam.beta1));
    c.adam.beta2 = static_cast<float>(ini.get_num("train", "beta2", c.adam.beta2));
    c.adam.eps = static_cast<float>(ini.get_num("train", "epsilon", c.adam.eps));
    c.patches_per_scan = ini.get_int("train", "patches_per_scan", c.patches_per_scan);
    c.epoch_cap = ini.get_int("train", "epoch_cap", c.epoch_cap);
    c.roi_buffer = ini.get_int("train", "roi_buffer", c.roi_buffer);
    c.val_windows_per_scan =
        ini.get_int("train", "val_windows_per_scan", c.val_windows_per_scan);
    c.ma_window = ini.get_int("train", "ma_window", c.ma_window);
    c.stall_window = ini.get_int("train", "stall_window", c.stall_window);
    c.rise_tol = ini.get_num("train", "rise_tol", c.rise_tol);
    c.stall_tol = ini.get_num("train", "stall_tol", c.stall_tol);
    c.seed = ini.get_u64("train", "seed", c.seed);
    c.augment.enabled = ini.get_bool("train", "augment", c.augment.enabled);
    c.augment.flips = ini.get_bool("train", "flips", c.augment.flips);
    c.augment.max_rotate_deg = ini.get_num("train", "max_rotate_deg", c.augment.max_rotate_deg);
    c.augment.scale_min = ini.get_num("train", "scale_min", c.augment.scale_min);
    c.augment.scale_max = ini.get_num("train", "scale_max", c.augment.scale_max);

    c.mode = ini.get_str("infer", "mode", c.mode);
    if (c.mode != "default" && c.mode != "exact")
        throw std::runtime_error("config: infer.mode must be 'default' or 'exact'");
    c.threshold = static_cast<float>(ini.get_num("infer", "threshold", c.threshold));
    c.connectivity = ini.get_int("infer", "connectivity", c.connectivity);
    c.save_prob = ini.get_bool("infer", "save_prob", c.save_prob);

    c.phantom_count = ini.get_int("phantom", "count", c.phantom_count);
    const int pd = ini.get_int("phantom", "dims", c.phantom.dims.x);
    c.phantom.dims = {pd, pd, pd};
    c.phantom.spacing_mm = ini.get_num("phantom", "spacing", c.phantom.spacing_mm);
    c.phantom.tree.generations = ini.get_int("phantom", "generations", c.phantom.tree.generations);
    c.phantom.tree.root_radius_mm =
        ini.get_num("phantom", "root_radius", c.phantom.tree.root_radius_mm);
    c.phantom.tree.taper = ini.get_num("phantom", "taper", c.phantom.tree.taper);
    c.phantom.tree.angle_min_deg =
        ini.get_num("phantom", "angle_min", c.phantom.tree.angle_min_deg);
    c.phantom.tree.angle_max_deg =
        ini.get_num("phantom", "angle_max", c.phantom.tree.angle_max_deg);
    c.phantom.tree.length_to_radius =
        ini.get_num("phantom", "length_to_radius", c.phantom.tree.length_to_radius);
    c.phantom.noise_sigma_hu = ini.get_num("phantom", "noise_sigma", c.phantom.noise_sigma_hu);
    c.phantom.vessels_per_lung =
        ini.get_int("phantom", "vessels_per_lung", c.phantom.vessels_per_lung);
    c.phantom.tree.seed = ini.get_u64("phantom", "seed", c.phantom.tree.seed);

    c.lung_params.threshold_hu =
        static_cast<float>(ini.get_num("morph", "lung_threshold_hu", c.lung_params.threshold_hu));
    c.central_params.grow_threshold_hu = static_cast<float>(
        ini.get_num("morph", "central_threshold_hu", c.central_params.grow_threshold_hu));
    c.lung_params.closing_radius =
        ini.get_int("morph", "closing_radius", c.lung_params.closing_radius);

    c.config_hash = fnv1a64(ini.canonical());
    return c;
}

void PipelineConfig::apply_mode(bool threshold_explicit, bool connectivity_explicit) {
    if (mode == "exact") {
        if (!threshold_explicit) threshold = 0.1f;
        if (!connectivity_explicit) connectivity = 6;
    }
}

TrainOptions PipelineConfig::to_train_options() const {
    TrainOptions o;
    o.model = model;
    o.adam = adam;
    o.augment = augment;
    o.patches_per_scan = patches_per_scan;
    o.epoch_cap = epoch_cap;
    o.roi_buffer = roi_buffer;
    o.val_windows_per_scan = val_windows_per_scan;
    o.ma_window = ma_window;
    o.stall_window = stall_window;
    o.rise_tol = rise_tol;
    o.stall_tol = stall_tol;
    o.seed = seed;
    o.out_dir = out_dir;
    return o;
}

std::vector<std::string> read_list_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open list file " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty() && line[0] != '#') out.push_back(line);
    }
    return out;
}

void write_manifest(const std::string& out_dir, const std::string& subcommand,
                    std::uint64_t config_hash, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["tool"] = "airnet";
    j["version"] = "0.1.0";
    j["subcommand"] = subcommand;
    char hex[32];
    std::snprintf(hex, sizeof hex, "fnv1a64:%016llx",
                  static_cast<unsigned long long>(config_hash));
    j["config_hash"] = hex;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + out_dir);
    out << j.dump(2) << '\n';
}

} // namespace airnet
