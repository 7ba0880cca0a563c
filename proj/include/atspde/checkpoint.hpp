#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "atspde/resnet.hpp"

namespace atspde {

// Checkpoint layout (little-endian):
//   8-byte magic "ATSPDEN1", then int64 fields input_dim, out_dim, width,
//   blocks, block_depth, activation (0 = swish, 1 = sine), seed, param_count,
//   followed by param_count float64 values in flat traversal order.
inline void save_checkpoint(const ResNet& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    const char magic[8] = {'A', 'T', 'S', 'P', 'D', 'E', 'N', '1'};
    f.write(magic, 8);
    auto put = [&](std::int64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
    put(net.spec.input_dim);
    put(net.spec.out_dim);
    put(net.spec.width);
    put(net.spec.blocks);
    put(net.spec.block_depth);
    put(net.spec.activation == Activation::Sine ? 1 : 0);
    put(static_cast<std::int64_t>(net.seed));
    put(static_cast<std::int64_t>(net.flat.size()));
    f.write(reinterpret_cast<const char*>(net.flat.data()),
            static_cast<std::streamsize>(net.flat.size() * sizeof(double)));
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline ResNet load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "ATSPDEN1", 8) != 0) {
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    }
    auto get = [&]() {
        std::int64_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    NetSpec spec;
    spec.input_dim = static_cast<int>(get());
    spec.out_dim = static_cast<int>(get());
    spec.width = static_cast<int>(get());
    spec.blocks = static_cast<int>(get());
    spec.block_depth = static_cast<int>(get());
    spec.activation = get() == 1 ? Activation::Sine : Activation::Swish;
    std::uint64_t seed = static_cast<std::uint64_t>(get());
    std::int64_t count = get();
    ResNet net = init_resnet(spec, seed);
    if (count != static_cast<std::int64_t>(net.flat.size())) {
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
    }
    f.read(reinterpret_cast<char*>(net.flat.data()),
           static_cast<std::streamsize>(net.flat.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return net;
}

}  // namespace atspde
