#include "airnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace airnet {

namespace {

constexpr char kMagic[8] = {'A', 'W', 'C', 'K', '0', '0', '0', '1'};

template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("load_checkpoint(" + path + "): truncated file");
    return v;
}

void put_floats(std::ofstream& out, const float* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}

void get_floats(std::ifstream& in, float* p, std::size_t n, const std::string& path) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 4));
    if (!in) throw std::runtime_error("load_checkpoint(" + path + "): truncated file");
}

} // namespace

void save_checkpoint(const UNetModel& model, const AdamState& adam, int epoch,
                     double best_val_loss, const std::string& path) {
    const UNetConfig& c = model.config();
    const auto& params = model.parameters();
    if (adam.m.size() != params.size())
        throw std::invalid_argument("save_checkpoint: adam state does not match parameters");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 8);
    put<std::int32_t>(out, c.levels);
    put<std::int32_t>(out, c.base_channels);
    put<std::int32_t>(out, c.valid_levels);
    put<std::int32_t>(out, c.input_shape[0]);
    put<std::int32_t>(out, c.input_shape[1]);
    put<std::int32_t>(out, c.input_shape[2]);
    put<std::int32_t>(out, c.in_channels);
    put<std::int32_t>(out, c.out_channels);
    put<std::int32_t>(out, epoch);
    put<std::int64_t>(out, adam.t);
    put<double>(out, best_val_loss);
    put<float>(out, adam.hyper.lr);
    put<float>(out, adam.hyper.beta1);
    put<float>(out, adam.hyper.beta2);
    put<float>(out, adam.hyper.eps);
    put<std::int32_t>(out, static_cast<std::int32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = params[i];
        put<std::int32_t>(out, static_cast<std::int32_t>(p.rank()));
        for (int a = 0; a < p.rank(); ++a) put<std::int32_t>(out, p.extent(a));
        put_floats(out, p.data(), p.size());
        put_floats(out, adam.m[i].data(), adam.m[i].size());
        put_floats(out, adam.v[i].data(), adam.v[i].size());
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint(" + path + "): bad magic");

    UNetConfig c;
    c.levels = get<std::int32_t>(in, path);
    c.base_channels = get<std::int32_t>(in, path);
    c.valid_levels = get<std::int32_t>(in, path);
    c.input_shape[0] = get<std::int32_t>(in, path);
    c.input_shape[1] = get<std::int32_t>(in, path);
    c.input_shape[2] = get<std::int32_t>(in, path);
    c.in_channels = get<std::int32_t>(in, path);
    c.out_channels = get<std::int32_t>(in, path);

    Checkpoint ck;
    ck.epoch = get<std::int32_t>(in, path);
    const std::int64_t t = get<std::int64_t>(in, path);
    ck.best_val_loss = get<double>(in, path);
    AdamHyperParams hp;
    hp.lr = get<float>(in, path);
    hp.beta1 = get<float>(in, path);
    hp.beta2 = get<float>(in, path);
    hp.eps = get<float>(in, path);

    const std::int32_t nblocks = get<std::int32_t>(in, path);
    if (nblocks < 0 || nblocks > 1 << 20)
        throw std::runtime_error("load_checkpoint(" + path + "): corrupt block count");
    std::vector<Tensor> params;
    AdamState adam;
    adam.t = t;
    adam.hyper = hp;
    params.reserve(static_cast<std::size_t>(nblocks));
    for (std::int32_t i = 0; i < nblocks; ++i) {
        const std::int32_t rank = get<std::int32_t>(in, path);
        if (rank < 1 || rank > 8)
            throw std::runtime_error("load_checkpoint(" + path + "): corrupt tensor rank");
        std::vector<int> shape(static_cast<std::size_t>(rank));
        for (auto& e : shape) e = get<std::int32_t>(in, path);
        Tensor p(shape);
        get_floats(in, p.data(), p.size(), path);
        std::vector<float> m(p.size()), v(p.size());
        get_floats(in, m.data(), m.size(), path);
        get_floats(in, v.data(), v.size(), path);
        params.push_back(std::move(p));
        adam.m.push_back(std::move(m));
        adam.v.push_back(std::move(v));
    }
    in.peek();
    if (!in.eof()) throw std::runtime_error("load_checkpoint(" + path + "): trailing bytes");

    ck.model = UNetModel::from_parts(c, std::move(params));
    ck.adam = std::move(adam);
    return ck;
}

Checkpoint load_checkpoint(const std::string& path, const UNetConfig& expect) {
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.model.config() == expect))
        throw std::runtime_error("load_checkpoint(" + path +
                                 "): config mismatch with expected architecture");
    return ck;
}

} // namespace airnet
