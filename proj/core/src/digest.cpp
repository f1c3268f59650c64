#include "mdb/digest.hpp"

#include <bit>
#include <cstring>

namespace mdb {

void Fnv1a::update(std::span<const std::byte> bytes) noexcept {
    for (std::byte b : bytes) {
        h_ ^= static_cast<std::uint64_t>(b);
        h_ *= 0x100000001b3ULL;
    }
}

void Fnv1a::update(std::string_view s) noexcept {
    update(std::as_bytes(std::span<const char>(s.data(), s.size())));
}

void Fnv1a::update_u64(std::uint64_t v) noexcept {
    std::byte buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
    update(buf);
}

void Fnv1a::update_f32(float v) noexcept {
    update_u64(std::bit_cast<std::uint32_t>(v));
}

std::string Fnv1a::hex() const { return to_hex(h_); }

std::string to_hex(std::uint64_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = kDigits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::uint64_t digest_of(std::string_view s) noexcept {
    Fnv1a h;
    h.update(s);
    return h.value();
}

}  // namespace mdb
