#include "rlwav/nn/checkpoint_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <memory>

namespace rlwav::nn {

namespace {

constexpr char kMagic[8] = {'R', 'L', 'W', 'V', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_bytes(std::FILE *f, const void *p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw IoError("checkpoint write failed");
}
void get_bytes(std::FILE *f, void *p, size_t n) {
    if (std::fread(p, 1, n, f) != n) throw IoError("checkpoint read failed (truncated file)");
}
// the build targets little-endian hosts; serialize integers explicitly anyway
void put_u16(std::FILE *f, uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
    put_bytes(f, b, 2);
}
void put_u32(std::FILE *f, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)(v >> (8 * i));
    put_bytes(f, b, 4);
}
uint16_t get_u16(std::FILE *f) {
    unsigned char b[2];
    get_bytes(f, b, 2);
    return uint16_t(b[0] | (uint16_t(b[1]) << 8));
}
uint32_t get_u32(std::FILE *f) {
    unsigned char b[4];
    get_bytes(f, b, 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string &path, const Checkpoint &ck) {
    size_t vol = 0;
    for (const auto &e : ck.manifest) vol += e.volume();
    if (vol != ck.values.size()) throw ConfigError("checkpoint manifest volume does not match value count");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open for writing: " + path);
    put_bytes(f.get(), kMagic, 8);
    put_u32(f.get(), kVersion);
    put_u32(f.get(), uint32_t(ck.manifest.size()));
    for (const auto &e : ck.manifest) {
        if (e.name.size() > 0xffff) throw ConfigError("checkpoint entry name too long");
        if (e.dims.size() > 0xff) throw ConfigError("checkpoint entry rank too large");
        put_u16(f.get(), uint16_t(e.name.size()));
        put_bytes(f.get(), e.name.data(), e.name.size());
        unsigned char rank = (unsigned char)e.dims.size();
        put_bytes(f.get(), &rank, 1);
        for (auto d : e.dims) put_u32(f.get(), d);
    }
    static_assert(sizeof(float) == 4);
    put_bytes(f.get(), ck.values.data(), ck.values.size() * 4);
    put_u32(f.get(), uint32_t(ck.meta.size()));
    put_bytes(f.get(), ck.meta.data(), ck.meta.size());
    if (std::fflush(f.get()) != 0) throw IoError("checkpoint flush failed: " + path);
}

Checkpoint load_checkpoint(const std::string &path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open for reading: " + path);
    char magic[8];
    get_bytes(f.get(), magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint file: " + path);
    uint32_t ver = get_u32(f.get());
    if (ver != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(ver));
    uint32_t count = get_u32(f.get());
    Checkpoint ck;
    ck.manifest.resize(count);
    size_t vol = 0;
    for (auto &e : ck.manifest) {
        uint16_t nl = get_u16(f.get());
        e.name.resize(nl);
        get_bytes(f.get(), e.name.data(), nl);
        unsigned char rank;
        get_bytes(f.get(), &rank, 1);
        e.dims.resize(rank);
        for (auto &d : e.dims) d = get_u32(f.get());
        e.offset = vol;
        vol += e.volume();
    }
    ck.values.resize(vol);
    get_bytes(f.get(), ck.values.data(), vol * 4);
    uint32_t ml = get_u32(f.get());
    ck.meta.resize(ml);
    get_bytes(f.get(), ck.meta.data(), ml);
    return ck;
}

}  // namespace rlwav::nn
