#pragma once

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

namespace bscbf {

/// FNV-1a, 64 bit. Used for provenance tags, not security.
class Fnv1a {
public:
    Fnv1a& bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Fnv1a& add(double x) { return bytes(&x, sizeof x); }
    Fnv1a& add(std::uint64_t x) { return bytes(&x, sizeof x); }
    Fnv1a& add(std::string_view s) { return bytes(s.data(), s.size()); }

    std::uint64_t value() const { return h_; }
    std::string hex() const {
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << h_;
        return os.str();
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace bscbf
