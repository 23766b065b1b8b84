#include "fsr/tns_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace fsr {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> tns_encode(const Tensor& t) {
    if (t.rank() > kTnsMaxRank)
        throw TnsError(TnsError::Kind::bad_header, "tns: rank " + std::to_string(t.rank()) + " exceeds 4");
    std::vector<std::uint8_t> out(std::begin(kTnsMagic), std::end(kTnsMagic));
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) {
        if (d > std::numeric_limits<std::uint32_t>::max())
            throw TnsError(TnsError::Kind::bad_header, "tns: dimension " + std::to_string(d) + " exceeds u32");
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    out.reserve(out.size() + 4 * t.numel());
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

Tensor tns_decode(const std::vector<std::uint8_t>& bytes, const std::string& context) {
    if (bytes.size() < 5) throw TnsError(TnsError::Kind::truncated, context + ": truncated header");
    if (std::memcmp(bytes.data(), kTnsMagic, 4) != 0) throw TnsError(TnsError::Kind::bad_magic, context + ": bad magic");
    const std::size_t rank = bytes[4];
    if (rank > kTnsMaxRank)
        throw TnsError(TnsError::Kind::bad_header, context + ": rank " + std::to_string(rank) + " exceeds 4");
    if (bytes.size() < 5 + 4 * rank) throw TnsError(TnsError::Kind::truncated, context + ": truncated dimensions");
    Shape shape(rank);
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        shape[i] = get_u32(bytes.data() + 5 + 4 * i);
        if (shape[i] == 0) throw TnsError(TnsError::Kind::bad_header, context + ": zero dimension");
        if (count > (std::uint64_t{1} << 60) / shape[i])
            throw TnsError(TnsError::Kind::bad_header, context + ": element count overflow");
        count *= shape[i];
    }
    const std::uint64_t payload = 5 + 4 * rank;
    if (bytes.size() - payload < 4 * count)
        throw TnsError(TnsError::Kind::truncated, context + ": header declares " + std::to_string(count) +
                                                      " values but payload has " +
                                                      std::to_string((bytes.size() - payload) / 4));
    if (bytes.size() - payload > 4 * count)
        throw TnsError(TnsError::Kind::bad_header, context + ": trailing bytes after payload");
    std::vector<double> values(count);
    for (std::uint64_t i = 0; i < count; ++i)
        values[i] = std::bit_cast<float>(get_u32(bytes.data() + payload + 4 * i));
    return Tensor(std::move(shape), std::move(values));
}

void tns_write(const std::filesystem::path& path, const Tensor& t) {
    auto bytes = tns_encode(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw TnsError(TnsError::Kind::io, path.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw TnsError(TnsError::Kind::io, path.string() + ": write failed");
}

Tensor tns_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TnsError(TnsError::Kind::io, path.string() + ": cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return tns_decode(bytes, path.string());
}

}  // namespace fsr
