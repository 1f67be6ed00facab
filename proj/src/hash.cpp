#include "xgkit/hash.hpp"

#include "xgkit/errors.hpp"

#include <fstream>
#include <iterator>

namespace xgkit {

void Fnv1a::update(const void* data, std::size_t n) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        state_ ^= p[i];
        state_ *= 0x100000001b3ULL;
    }
}

std::string Fnv1a::hex() const {
    return to_hex(state_);
}

std::string to_hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

std::string hash_bytes(std::string_view s) {
    Fnv1a h;
    h.update(s);
    return h.hex();
}

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path);
    }
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return hash_bytes(bytes);
}

} // namespace xgkit
