#include "dpmn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace dpmn {
namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for write: " + path);
    os.write("DPMN", 4);
    put_u32(os, static_cast<std::uint32_t>(kCheckpointVersion));
    put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        if (t.name.size() > 0xffff) throw IoError("tensor name too long: " + t.name);
        put_u16(os, static_cast<std::uint16_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        if (t.shape.size() > 0xff) throw IoError("tensor rank too large");
        os.put(static_cast<char>(t.shape.size()));
        i64 n = 1;
        for (i64 d : t.shape) {
            put_u32(os, static_cast<std::uint32_t>(d));
            n *= d;
        }
        if (n != static_cast<i64>(t.values.size()))
            throw IoError("tensor '" + t.name + "': value count does not match shape");
        for (float v : t.values) put_f32(os, v);
    }
    if (!os) throw IoError("write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DPMN", 4) != 0)
        throw IoError("bad checkpoint magic in " + path);
    const std::uint32_t version = get_u32(is);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = get_u32(is);
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const std::uint16_t len = get_u16(is);
        t.name.resize(len);
        is.read(t.name.data(), len);
        const int rank = is.get();
        i64 n = 1;
        for (int d = 0; d < rank; ++d) {
            t.shape.push_back(static_cast<i64>(get_u32(is)));
            n *= t.shape.back();
        }
        t.values.resize(static_cast<size_t>(n));
        for (i64 j = 0; j < n; ++j) t.values[static_cast<size_t>(j)] = get_f32(is);
        if (!is) throw IoError("truncated checkpoint: " + path);
        out.push_back(std::move(t));
    }
    return out;
}

void save_manifest(const std::string& path,
                   const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open manifest for write: " + path);
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

std::map<std::string, std::string> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

}  // namespace dpmn
