#include "airnet/mhd.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace airnet {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("read_mhd(" + path + "): " + what);
}

// Shortest decimal form that still contains a decimal point, e.g. 1 -> "1.0".
std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    std::string s = os.str();
    // try shorter representations that round-trip
    for (int prec = 1; prec < 17; ++prec) {
        std::ostringstream t;
        t.precision(prec);
        t << v;
        if (std::stod(t.str()) == v) {
            s = t.str();
            break;
        }
    }
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
        s += ".0";
    return s;
}

} // namespace

Volume3D read_mhd(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open header");

    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(path, "malformed header line: " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto require = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) fail(path, std::string("missing key ") + key);
        return it->second;
    };

    if (auto it = kv.find("NDims"); it != kv.end()) {
        if (trim(it->second) != "3") fail(path, "NDims must be 3");
    } else {
        fail(path, "missing key NDims");
    }
    for (const char* key : {"ElementByteOrderMSB", "BinaryDataByteOrderMSB"}) {
        if (auto it = kv.find(key); it != kv.end() && it->second == "True")
            fail(path, std::string(key) + " = True is not supported (little-endian only)");
    }
    if (auto it = kv.find("CompressedData"); it != kv.end() && it->second == "True")
        fail(path, "CompressedData is not supported");

    const auto dim_tok = split_ws(require("DimSize"));
    if (dim_tok.size() != 3) fail(path, "DimSize must have 3 entries");
    Index3 dims{std::stoi(dim_tok[0]), std::stoi(dim_tok[1]), std::stoi(dim_tok[2])};
    if (dims.x < 1 || dims.y < 1 || dims.z < 1) fail(path, "DimSize entries must be >= 1");

    Vec3 spacing{1.0, 1.0, 1.0};
    if (auto it = kv.find("ElementSpacing"); it != kv.end()) {
        const auto t = split_ws(it->second);
        if (t.size() != 3) fail(path, "ElementSpacing must have 3 entries");
        spacing = {std::stod(t[0]), std::stod(t[1]), std::stod(t[2])};
    }
    Vec3 origin{0.0, 0.0, 0.0};
    if (auto it = kv.find("Offset"); it != kv.end()) {
        const auto t = split_ws(it->second);
        if (t.size() != 3) fail(path, "Offset must have 3 entries");
        origin = {std::stod(t[0]), std::stod(t[1]), std::stod(t[2])};
    }

    const std::string& et = require("ElementType");
    ElementKind kind;
    std::size_t elem_size;
    if (et == "MET_SHORT") {
        kind = ElementKind::ct_hu;
        elem_size = 2;
    } else if (et == "MET_UCHAR") {
        kind = ElementKind::binary_mask;
        elem_size = 1;
    } else if (et == "MET_FLOAT") {
        kind = ElementKind::probability;
        elem_size = 4;
    } else {
        fail(path, "unsupported ElementType " + et);
    }

    const std::string& data_file = require("ElementDataFile");
    if (data_file == "LOCAL" || data_file == "LIST")
        fail(path, "ElementDataFile must name a companion raw file");
    fs::path raw_path = fs::path(path).parent_path() / data_file;

    const std::size_t n =
        static_cast<std::size_t>(dims.x) * dims.y * dims.z;
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) fail(path, "cannot open raw file " + raw_path.string());
    raw.seekg(0, std::ios::end);
    const std::size_t raw_size = static_cast<std::size_t>(raw.tellg());
    if (raw_size != n * elem_size) {
        std::ostringstream os;
        os << "raw size mismatch: expected " << n * elem_size << " bytes, found " << raw_size;
        fail(path, os.str());
    }
    raw.seekg(0);
    std::vector<char> bytes(raw_size);
    raw.read(bytes.data(), static_cast<std::streamsize>(raw_size));
    if (!raw) fail(path, "raw read failed");

    std::vector<float> data(n);
    if (kind == ElementKind::ct_hu) {
        const auto* p = reinterpret_cast<const std::int16_t*>(bytes.data());
        for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(p[i]);
    } else if (kind == ElementKind::binary_mask) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
        for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(p[i]);
    } else {
        std::memcpy(data.data(), bytes.data(), raw_size);
    }

    Volume3D v(dims, spacing, origin, kind, std::move(data));
    v.validate_values();
    return v;
}

void write_mhd(const Volume3D& v, const std::string& path) {
    v.validate_values();
    fs::path hdr(path);
    fs::path raw_path = hdr;
    raw_path.replace_extension(".raw");

    const char* et = nullptr;
    switch (v.kind()) {
    case ElementKind::ct_hu: et = "MET_SHORT"; break;
    case ElementKind::binary_mask: et = "MET_UCHAR"; break;
    case ElementKind::probability: et = "MET_FLOAT"; break;
    }

    std::ofstream out(hdr);
    if (!out) throw std::runtime_error("write_mhd: cannot open " + path);
    out << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "ElementByteOrderMSB = False\n"
        << "DimSize = " << v.dims().x << ' ' << v.dims().y << ' ' << v.dims().z << '\n'
        << "ElementSpacing = " << fmt_double(v.spacing().x) << ' ' << fmt_double(v.spacing().y)
        << ' ' << fmt_double(v.spacing().z) << '\n'
        << "Offset = " << fmt_double(v.origin().x) << ' ' << fmt_double(v.origin().y) << ' '
        << fmt_double(v.origin().z) << '\n'
        << "ElementType = " << et << '\n'
        << "ElementDataFile = " << raw_path.filename().string() << '\n';
    if (!out) throw std::runtime_error("write_mhd: header write failed for " + path);
    out.close();

    std::ofstream raw(raw_path, std::ios::binary);
    if (!raw) throw std::runtime_error("write_mhd: cannot open " + raw_path.string());
    const std::size_t n = v.voxel_count();
    if (v.kind() == ElementKind::ct_hu) {
        std::vector<std::int16_t> buf(n);
        for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<std::int16_t>(v.data()[i]);
        raw.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(n * 2));
    } else if (v.kind() == ElementKind::binary_mask) {
        std::vector<std::uint8_t> buf(n);
        for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<std::uint8_t>(v.data()[i]);
        raw.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n));
    } else {
        raw.write(reinterpret_cast<const char*>(v.data().data()),
                  static_cast<std::streamsize>(n * 4));
    }
    if (!raw) throw std::runtime_error("write_mhd: raw write failed for " + raw_path.string());
}

} // namespace airnet
