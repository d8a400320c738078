// Copyright 2026 meshgate contributors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/// @file common.hpp
/// @brief Error type, byte helpers, addresses and time units shared by every module.

#include <arpa/inet.h>

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace meshgate {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Simulated or wall-clock instants are microseconds since an arbitrary origin.
using Micros = std::chrono::microseconds;
using SimTime = Micros;

enum class Errc {
    oversized_payload,
    truncated,
    oversized,
    checksum_mismatch,
    bad_version,
    length_mismatch,
    crc_error,
    framing_error,
    datagram_too_large,
    stale_fragment,
    malformed_dispatch,
    conflicting_fragment,
    timeout,
    connection_reset,
    no_such_link,
    destination_unreachable,
    bad_command,
    not_mesh_address,
    not_pool_address,
    not_gateway_prefix,
    unsupported_protocol,
    serial_down,
    not_for_mesh,
    insufficient_samples,
    config_error,
    io_error,
};

constexpr std::string_view to_string(Errc e) {
    switch (e) {
        case Errc::oversized_payload: return "OversizedPayload";
        case Errc::truncated: return "Truncated";
        case Errc::oversized: return "Oversized";
        case Errc::checksum_mismatch: return "ChecksumMismatch";
        case Errc::bad_version: return "BadVersion";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::crc_error: return "CrcError";
        case Errc::framing_error: return "FramingError";
        case Errc::datagram_too_large: return "DatagramTooLarge";
        case Errc::stale_fragment: return "StaleFragment";
        case Errc::malformed_dispatch: return "MalformedDispatch";
        case Errc::conflicting_fragment: return "ConflictingFragment";
        case Errc::timeout: return "Timeout";
        case Errc::connection_reset: return "ConnectionReset";
        case Errc::no_such_link: return "NoSuchLink";
        case Errc::destination_unreachable: return "DestinationUnreachable";
        case Errc::bad_command: return "BadCommand";
        case Errc::not_mesh_address: return "NotMeshAddress";
        case Errc::not_pool_address: return "NotPoolAddress";
        case Errc::not_gateway_prefix: return "NotGatewayPrefix";
        case Errc::unsupported_protocol: return "UnsupportedProtocol";
        case Errc::serial_down: return "SerialDown";
        case Errc::not_for_mesh: return "NotForMesh";
        case Errc::insufficient_samples: return "InsufficientSamples";
        case Errc::config_error: return "ConfigError";
        case Errc::io_error: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    explicit Error(Errc code, const std::string& detail = {})
        : std::runtime_error(detail.empty() ? std::string(to_string(code))
                                            : std::string(to_string(code)) + ": " + detail),
          code_(code),
          detail_(detail) {}

    Errc code() const noexcept { return code_; }
    /// The message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

// Big-endian readers/writers.

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
    put_u16(out, static_cast<std::uint16_t>(v >> 16));
    put_u16(out, static_cast<std::uint16_t>(v));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
    put_u32(out, static_cast<std::uint32_t>(v));
}

inline void put_bytes(Bytes& out, ByteView v) { out.insert(out.end(), v.begin(), v.end()); }

inline std::uint16_t get_u16(ByteView b, std::size_t at) {
    return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

inline std::uint32_t get_u32(ByteView b, std::size_t at) {
    return (static_cast<std::uint32_t>(get_u16(b, at)) << 16) | get_u16(b, at + 2);
}

inline std::uint64_t get_u64(ByteView b, std::size_t at) {
    return (static_cast<std::uint64_t>(get_u32(b, at)) << 32) | get_u32(b, at + 4);
}

/// Sequential big-endian reader that throws Truncated on underrun.
class Reader {
public:
    explicit Reader(ByteView data) : data_(data) {}

    std::uint8_t u8() { need(1); return data_[pos_++]; }
    std::uint16_t u16() { need(2); auto v = get_u16(data_, pos_); pos_ += 2; return v; }
    std::uint32_t u32() { need(4); auto v = get_u32(data_, pos_); pos_ += 4; return v; }
    std::uint64_t u64() { need(8); auto v = get_u64(data_, pos_); pos_ += 8; return v; }

    ByteView take(std::size_t n) {
        need(n);
        auto v = data_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

    ByteView rest() { auto v = data_.subspan(pos_); pos_ = data_.size(); return v; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw Error(Errc::truncated);
    }

    ByteView data_;
    std::size_t pos_ = 0;
};

struct Ipv4Address {
    std::uint32_t value = 0;

    static Ipv4Address parse(std::string_view text) {
        std::string s(text);
        in_addr a{};
        if (inet_pton(AF_INET, s.c_str(), &a) != 1) {
            throw Error(Errc::config_error, "bad IPv4 address '" + s + "'");
        }
        return Ipv4Address{ntohl(a.s_addr)};
    }

    std::string to_string() const {
        in_addr a{};
        a.s_addr = htonl(value);
        char buf[INET_ADDRSTRLEN] = {};
        inet_ntop(AF_INET, &a, buf, sizeof buf);
        return buf;
    }

    auto operator<=>(const Ipv4Address&) const = default;
};

struct Ipv6Address {
    std::array<std::uint8_t, 16> bytes{};

    static Ipv6Address parse(std::string_view text) {
        std::string s(text);
        Ipv6Address out;
        if (inet_pton(AF_INET6, s.c_str(), out.bytes.data()) != 1) {
            throw Error(Errc::config_error, "bad IPv6 address '" + s + "'");
        }
        return out;
    }

    std::string to_string() const {
        char buf[INET6_ADDRSTRLEN] = {};
        inet_ntop(AF_INET6, bytes.data(), buf, sizeof buf);
        return buf;
    }

    /// True when the first `bits` bits equal those of `prefix` (bits is a multiple of 8).
    bool has_prefix(const Ipv6Address& prefix, unsigned bits) const {
        for (unsigned i = 0; i < bits / 8; ++i) {
            if (bytes[i] != prefix.bytes[i]) return false;
        }
        return true;
    }

    std::uint16_t low16() const { return static_cast<std::uint16_t>((bytes[14] << 8) | bytes[15]); }
    std::uint32_t low32() const { return get_u32(bytes, 12); }

    auto operator<=>(const Ipv6Address&) const = default;
};

/// Internet ones-complement checksum accumulator.
class InternetChecksum {
public:
    void add(ByteView data) {
        std::size_t i = 0;
        if (odd_) {
            sum_ += data.empty() ? 0 : data[0];
            i = data.empty() ? 0 : 1;
            odd_ = data.empty();
        }
        for (; i + 1 < data.size(); i += 2) sum_ += static_cast<std::uint32_t>((data[i] << 8) | data[i + 1]);
        if (i < data.size()) {
            sum_ += static_cast<std::uint32_t>(data[i]) << 8;
            odd_ = true;
        }
    }

    void add_u16(std::uint16_t v) { add(std::array<std::uint8_t, 2>{std::uint8_t(v >> 8), std::uint8_t(v)}); }
    void add_u32(std::uint32_t v) { add_u16(std::uint16_t(v >> 16)); add_u16(std::uint16_t(v)); }

    /// Folded ones-complement sum (not inverted).
    std::uint16_t sum() const {
        std::uint64_t s = sum_;
        while (s >> 16) s = (s & 0xFFFF) + (s >> 16);
        return static_cast<std::uint16_t>(s);
    }

    std::uint16_t checksum() const { return static_cast<std::uint16_t>(~sum()); }

private:
    std::uint64_t sum_ = 0;
    bool odd_ = false;
};

}  // namespace meshgate
