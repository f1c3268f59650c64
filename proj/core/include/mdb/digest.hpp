#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace mdb {

/// Incremental FNV-1a (64-bit). Used for content digests of records,
/// plans and pools; not a cryptographic hash.
class Fnv1a {
public:
    void update(std::span<const std::byte> bytes) noexcept;
    void update(std::string_view s) noexcept;
    void update_u64(std::uint64_t v) noexcept;
    void update_f32(float v) noexcept;

    std::uint64_t value() const noexcept { return h_; }
    std::string hex() const;

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t v);
std::uint64_t digest_of(std::string_view s) noexcept;

}  // namespace mdb
