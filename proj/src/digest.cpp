#include "genonet/digest.hpp"

#include "genonet/error.hpp"

#include <openssl/evp.h>

namespace genonet {

std::string Digest::hex() const
{
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0x0f]);
    }
    return out;
}

Digest Digest::from_hex(std::string_view hex)
{
    if (hex.size() != 64)
        throw InvalidArgument("digest hex must be 64 characters");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw InvalidArgument("invalid hex digit in digest");
    };
    Digest d;
    for (std::size_t i = 0; i < d.bytes.size(); ++i)
        d.bytes[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    return d;
}

Digest sha256(std::string_view data)
{
    Digest d;
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != d.bytes.size())
        throw Error("DigestFailure", "SHA-256 computation failed");
    return d;
}

} // namespace genonet
