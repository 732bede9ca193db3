#include "dagan/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dagan {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("checkpoint: " + msg); }

// All multi-byte fields are little-endian; write bytes explicitly so the
// format does not depend on host endianness.
void put_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {(unsigned char)v, (unsigned char)(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}
void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)v, (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t get_u16(std::istream& in) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) fail("truncated record header");
    return (std::uint16_t)(b[0] | (b[1] << 8));
}
std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) fail(std::string("truncated ") + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

}  // namespace

void Checkpoint::add(std::string name, std::vector<int> dims, std::vector<float> data) {
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) fail("record '" + name + "': non-positive dim");
        n *= (std::size_t)d;
    }
    if (n != data.size())
        fail("record '" + name + "': dims describe " + std::to_string(n) + " values, got " +
             std::to_string(data.size()));
    if (name.empty() || name.size() > 0xFFFF) fail("bad record name length");
    if (dims.size() > 0xFF) fail("record '" + name + "': rank too large");
    if (has(name)) fail("duplicate record '" + name + "'");
    records_.push_back({std::move(name), std::move(dims), std::move(data)});
}

void Checkpoint::add_scalar(const std::string& name, double v) {
    add(name, {1}, {(float)v});
}

void Checkpoint::add_u64(const std::string& name, std::uint64_t v) {
    std::vector<float> limbs(4);
    for (int i = 0; i < 4; ++i) limbs[i] = (float)((v >> (16 * i)) & 0xFFFFu);
    add(name, {4}, std::move(limbs));
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& r : records_)
        if (r.name == name) return true;
    return false;
}

const CheckpointRecord& Checkpoint::at(const std::string& name) const {
    for (const auto& r : records_)
        if (r.name == name) return r;
    fail("missing record '" + name + "'");
}

double Checkpoint::scalar(const std::string& name) const {
    const auto& r = at(name);
    if (r.data.size() != 1) fail("record '" + name + "' is not a scalar");
    return r.data[0];
}

std::uint64_t Checkpoint::u64_at(const std::string& name) const {
    const auto& r = at(name);
    if (r.data.size() != 4) fail("record '" + name + "' is not a u64 limb vector");
    std::uint64_t v = 0;
    for (int i = 0; i < 4; ++i) v |= (std::uint64_t)(std::uint16_t)std::lround(r.data[i]) << (16 * i);
    return v;
}

void checkpoint_save(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path + "' for writing");
    out.write("DAGN", 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, (std::uint32_t)ck.size());
    for (const auto& r : ck.records()) {
        put_u16(out, (std::uint16_t)r.name.size());
        out.write(r.name.data(), (std::streamsize)r.name.size());
        out.put((char)0);  // dtype 0 = f32
        out.put((char)r.dims.size());
        for (int d : r.dims) put_u32(out, (std::uint32_t)d);
        for (float v : r.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(out, bits);
        }
    }
    if (!out) fail("write failed for '" + path + "'");
}

Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4)) fail("truncated magic in '" + path + "'");
    if (std::memcmp(magic, "DAGN", 4) != 0) fail("bad magic in '" + path + "'");
    const std::uint32_t version = get_u32(in, "version");
    if (version != kCheckpointVersion)
        fail("unsupported version " + std::to_string(version) + " (want " +
             std::to_string(kCheckpointVersion) + ")");
    const std::uint32_t count = get_u32(in, "record count");

    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = get_u16(in);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) fail("truncated record name");
        const int dtype = in.get();
        const int rank = in.get();
        if (dtype < 0 || rank < 0) fail("truncated record '" + name + "'");
        if (dtype != 0) fail("record '" + name + "': unknown dtype " + std::to_string(dtype));
        std::vector<int> dims(rank);
        std::size_t n = 1;
        for (int d = 0; d < rank; ++d) {
            dims[d] = (int)get_u32(in, "dims");
            n *= (std::size_t)dims[d];
        }
        std::vector<float> data(n);
        for (std::size_t j = 0; j < n; ++j) {
            std::uint32_t bits = get_u32(in, "payload");
            std::memcpy(&data[j], &bits, 4);
        }
        ck.add(std::move(name), std::move(dims), std::move(data));
    }
    return ck;
}

}  // namespace dagan
