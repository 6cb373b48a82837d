#include "fusion_stereo/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "fusion_stereo/errors.hpp"

namespace fstereo {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_i32(std::ostream& os, int32_t v) { put_u32(os, static_cast<uint32_t>(v)); }

void put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(os, bits);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw DataError("checkpoint '" + path + "' is truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw DataError("checkpoint '" + path + "' is truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is, const std::string& path) {
    const uint64_t bits = get_u64(is, path);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint '" + path + "' for writing");
    os << kCheckpointMagic << '\n';
    put_u64(os, entries.size());
    for (const CheckpointEntry& e : entries) {
        put_u32(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<uint32_t>(e.tensor.ndim()));
        for (int a = 0; a < e.tensor.ndim(); ++a) put_i32(os, e.tensor.dim(a));
        for (double v : e.tensor.values) put_f64(os, v);
    }
    if (!os) throw DataError("write to checkpoint '" + path + "' failed");
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    std::string magic;
    if (!std::getline(is, magic))
        throw DataError("checkpoint '" + path + "' is truncated");
    if (magic != kCheckpointMagic) {
        throw DataError("checkpoint '" + path + "' has unknown format tag '" + magic +
                        "', expected '" + kCheckpointMagic + "'");
    }
    const uint64_t count = get_u64(is, path);
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw DataError("checkpoint '" + path + "' is truncated");
        const uint32_t rank = get_u32(is, path);
        if (rank > 8)
            throw DataError("checkpoint '" + path + "' entry '" + name +
                            "' has implausible rank " + std::to_string(rank));
        if (rank == 0)
            throw DataError("checkpoint '" + path + "' entry '" + name + "' has rank 0");
        std::vector<int> shape(rank);
        for (uint32_t a = 0; a < rank; ++a)
            shape[a] = static_cast<int32_t>(get_u32(is, path));
        Tensor t(shape);
        for (double& v : t.values) v = get_f64(is, path);
        entries.push_back({std::move(name), std::move(t)});
    }
    return entries;
}

}  // namespace fstereo
