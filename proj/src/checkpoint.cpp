#include "egomem/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace egomem {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params,
                     const std::string& hyper_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
    os.write("EGMM", 4);
    write_u32(os, kCheckpointVersion);
    write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u32(os, static_cast<std::uint32_t>(p.tensor.rows()));
        write_u32(os, static_cast<std::uint32_t>(p.tensor.cols()));
        os.write(reinterpret_cast<const char*>(p.tensor.values().data()),
                 static_cast<std::streamsize>(p.tensor.size() * sizeof(double)));
    }
    if (!os) throw IoError("checkpoint: write failed: " + path);
    std::ofstream side(path + ".json");
    if (!side) throw IoError("checkpoint: cannot write sidecar: " + path + ".json");
    side << hyper_json << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "EGMM", 4) != 0)
        throw IoError("checkpoint: bad magic in " + path);
    const std::uint32_t version = read_u32(is);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    const std::uint32_t count = read_u32(is);
    LoadedCheckpoint out;
    out.params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const std::uint32_t rows = read_u32(is);
        const std::uint32_t cols = read_u32(is);
        Tensor t(rows, cols, true);
        is.read(reinterpret_cast<char*>(t.values().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw IoError("checkpoint: truncated tensor data in " + path);
        out.params.push_back({std::move(name), std::move(t)});
    }
    std::ifstream side(path + ".json");
    if (side) {
        std::string line, all;
        while (std::getline(side, line)) all += line + "\n";
        out.hyper_json = all;
    }
    return out;
}

void restore_params(const std::vector<NamedParam>& params, const LoadedCheckpoint& loaded) {
    std::unordered_map<std::string, const NamedParam*> by_name;
    for (const auto& p : loaded.params) by_name[p.name] = &p;
    for (const auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
            throw IoError("checkpoint: missing parameter '" + p.name + "'");
        const Tensor& src = it->second->tensor;
        Tensor dst = p.tensor;
        if (src.rows() != dst.rows() || src.cols() != dst.cols())
            throw IoError("checkpoint: shape mismatch for '" + p.name + "': file " +
                          shape_str(src) + " vs model " + shape_str(dst));
        dst.values() = src.values();
        dst.zero_grad();
    }
}

}  // namespace egomem
