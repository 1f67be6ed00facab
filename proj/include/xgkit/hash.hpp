#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace xgkit {

// 64-bit FNV-1a; used for content fingerprints and manifest hashes.
class Fnv1a {
public:
    void update(const void* data, std::size_t n) noexcept;
    void update(std::string_view s) noexcept { update(s.data(), s.size()); }
    void update(std::span<const double> xs) noexcept { update(xs.data(), xs.size_bytes()); }
    std::uint64_t digest() const noexcept { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t v);
std::string hash_bytes(std::string_view s);
std::string hash_file(const std::string& path);

} // namespace xgkit
