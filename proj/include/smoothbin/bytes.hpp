#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoothbin {

using Bytes = std::vector<std::uint8_t>;
using Hash256 = std::array<std::uint8_t, 32>;

// Exit-code categories used by the CLI: configuration errors exit 2,
// data errors exit 3.
class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class DataError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Label { benign, malicious, unlabeled };

inline const char* to_string(Label l) {
    switch (l) {
        case Label::benign: return "benign";
        case Label::malicious: return "malicious";
        default: return "unlabeled";
    }
}

inline Label label_from_string(const std::string& s) {
    if (s == "benign") return Label::benign;
    if (s == "malicious") return Label::malicious;
    if (s == "unlabeled") return Label::unlabeled;
    throw DataError("unknown label: " + s);
}

inline Hash256 sha256(const std::uint8_t* data, std::size_t len) {
    Hash256 out{};
    unsigned int out_len = 0;
    if (EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) != 1 ||
        out_len != out.size()) {
        throw std::runtime_error("sha256 failed");
    }
    return out;
}

inline Hash256 sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

inline std::string to_hex(const Hash256& h) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (std::uint8_t b : h) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

// Truncated digest, convenient as an RNG key.
inline std::uint64_t hash_prefix_u64(const Hash256& h) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | h[static_cast<std::size_t>(i)];
    return v;
}

// The unit of classification: raw bytes with label and provenance.
struct ByteSample {
    Bytes bytes;
    Label label = Label::unlabeled;
    std::int64_t timestamp = 0;
    Hash256 content_hash{};
    enum class Origin { synthetic, ingested } origin = Origin::synthetic;

    void rehash() { content_hash = sha256(bytes); }
};

}  // namespace smoothbin
