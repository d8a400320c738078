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

/// @file net_model.hpp
/// @brief Bit-exact codecs for link frames, IPv4/IPv6 datagrams and serial tunnel frames.
///
/// All multi-byte integers are big-endian. Layouts:
///
///   LinkFrame   dst16 | src16 | seq8 | type8 | payload (<= 121)
///   Ipv6Packet  standard 40-byte header, no extension headers
///   Ipv4Packet  standard 20-byte header, no options, DF clear, id 0
///   SerialFrame 0x7E | stuffed(payload | crc16) | 0x7E

#include "meshgate/common.hpp"

#include <optional>

namespace meshgate {

inline constexpr std::size_t kLinkMtu = 127;
inline constexpr std::size_t kLinkHeaderSize = 6;
inline constexpr std::size_t kLinkPayloadMax = kLinkMtu - kLinkHeaderSize;
inline constexpr std::size_t kIpv6HeaderSize = 40;
inline constexpr std::size_t kIpv6Mtu = 1280;
inline constexpr std::size_t kIpv4HeaderSize = 20;
inline constexpr std::uint16_t kBroadcastShort = 0xFFFF;

enum class FrameType : std::uint8_t { data = 0, aodv_control = 1, ack = 2 };

struct LinkFrame {
    std::uint16_t dst_short = 0;
    std::uint16_t src_short = 0;
    std::uint8_t seq = 0;
    FrameType frame_type = FrameType::data;
    Bytes payload;

    bool operator==(const LinkFrame&) const = default;
};

inline Bytes encode_link_frame(const LinkFrame& f) {
    if (f.payload.size() > kLinkPayloadMax) {
        throw Error(Errc::oversized_payload, std::to_string(f.payload.size()) + " bytes");
    }
    Bytes out;
    out.reserve(kLinkHeaderSize + f.payload.size());
    put_u16(out, f.dst_short);
    put_u16(out, f.src_short);
    put_u8(out, f.seq);
    put_u8(out, static_cast<std::uint8_t>(f.frame_type));
    put_bytes(out, f.payload);
    return out;
}

inline LinkFrame decode_link_frame(ByteView b) {
    if (b.size() < kLinkHeaderSize) throw Error(Errc::truncated);
    if (b.size() > kLinkMtu) throw Error(Errc::oversized);
    LinkFrame f;
    f.dst_short = get_u16(b, 0);
    f.src_short = get_u16(b, 2);
    f.seq = b[4];
    if (b[5] > static_cast<std::uint8_t>(FrameType::ack)) throw Error(Errc::malformed_dispatch, "frame type");
    f.frame_type = static_cast<FrameType>(b[5]);
    f.payload.assign(b.begin() + kLinkHeaderSize, b.end());
    return f;
}

struct Ipv6Packet {
    Ipv6Address src;
    Ipv6Address dst;
    std::uint8_t next_header = 0;
    std::uint8_t hop_limit = 64;
    Bytes payload;

    std::size_t encoded_size() const { return kIpv6HeaderSize + payload.size(); }
    bool operator==(const Ipv6Packet&) const = default;
};

inline Bytes encode_ipv6(const Ipv6Packet& p) {
    if (p.encoded_size() > kIpv6Mtu) throw Error(Errc::datagram_too_large);
    Bytes out;
    out.reserve(p.encoded_size());
    put_u32(out, 0x60000000u);  // version 6, traffic class 0, flow label 0
    put_u16(out, static_cast<std::uint16_t>(p.payload.size()));
    put_u8(out, p.next_header);
    put_u8(out, p.hop_limit);
    put_bytes(out, p.src.bytes);
    put_bytes(out, p.dst.bytes);
    put_bytes(out, p.payload);
    return out;
}

inline Ipv6Packet decode_ipv6(ByteView b) {
    if (b.size() < kIpv6HeaderSize) throw Error(Errc::truncated);
    if (b.size() > kIpv6Mtu) throw Error(Errc::oversized);
    if ((b[0] >> 4) != 6) throw Error(Errc::bad_version);
    const std::uint16_t payload_len = get_u16(b, 4);
    if (kIpv6HeaderSize + payload_len != b.size()) throw Error(Errc::length_mismatch);
    Ipv6Packet p;
    p.next_header = b[6];
    p.hop_limit = b[7];
    std::copy_n(b.begin() + 8, 16, p.src.bytes.begin());
    std::copy_n(b.begin() + 24, 16, p.dst.bytes.begin());
    p.payload.assign(b.begin() + kIpv6HeaderSize, b.end());
    return p;
}

struct Ipv4Packet {
    Ipv4Address src;
    Ipv4Address dst;
    std::uint8_t protocol = 0;
    std::uint8_t ttl = 64;
    /// Filled by encode/decode; ignored on input to encode.
    std::uint16_t header_checksum = 0;
    Bytes payload;

    bool operator==(const Ipv4Packet&) const = default;
};

/// Ones-complement checksum of a 20-byte header whose checksum field is taken as-is.
inline std::uint16_t ipv4_header_checksum(ByteView header) {
    InternetChecksum c;
    c.add(header.first(kIpv4HeaderSize));
    return c.checksum();
}

inline Bytes encode_ipv4(const Ipv4Packet& p) {
    const std::size_t total = kIpv4HeaderSize + p.payload.size();
    if (total > 0xFFFF) throw Error(Errc::oversized);
    Bytes out;
    out.reserve(total);
    put_u8(out, 0x45);
    put_u8(out, 0);
    put_u16(out, static_cast<std::uint16_t>(total));
    put_u16(out, 0);  // identification
    put_u16(out, 0);  // flags, fragment offset
    put_u8(out, p.ttl);
    put_u8(out, p.protocol);
    put_u16(out, 0);
    put_u32(out, p.src.value);
    put_u32(out, p.dst.value);
    const std::uint16_t csum = ipv4_header_checksum(out);
    out[10] = static_cast<std::uint8_t>(csum >> 8);
    out[11] = static_cast<std::uint8_t>(csum);
    put_bytes(out, p.payload);
    return out;
}

inline Ipv4Packet decode_ipv4(ByteView b) {
    if (b.size() < kIpv4HeaderSize) throw Error(Errc::truncated);
    // Checksum first: any corrupted header bit must surface as a checksum failure.
    InternetChecksum c;
    c.add(b.first(kIpv4HeaderSize));
    if (c.sum() != 0xFFFF) throw Error(Errc::checksum_mismatch);
    if (b[0] != 0x45) throw Error(Errc::bad_version);
    if (get_u16(b, 2) != b.size()) throw Error(Errc::length_mismatch);
    Ipv4Packet p;
    p.ttl = b[8];
    p.protocol = b[9];
    p.header_checksum = get_u16(b, 10);
    p.src.value = get_u32(b, 12);
    p.dst.value = get_u32(b, 16);
    p.payload.assign(b.begin() + kIpv4HeaderSize, b.end());
    return p;
}

// Serial tunnel framing.

inline constexpr std::uint8_t kSerialFlag = 0x7E;
inline constexpr std::uint8_t kSerialEscape = 0x7D;
inline constexpr std::uint8_t kSerialXor = 0x20;

/// CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection, no final xor.
inline std::uint16_t crc16_ccitt(ByteView data, std::uint16_t crc = 0xFFFF) {
    for (std::uint8_t byte : data) {
        crc ^= static_cast<std::uint16_t>(byte) << 8;
        for (int i = 0; i < 8; ++i) {
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                                 : static_cast<std::uint16_t>(crc << 1);
        }
    }
    return crc;
}

inline void stuff_byte(Bytes& out, std::uint8_t b) {
    if (b == kSerialFlag || b == kSerialEscape) {
        out.push_back(kSerialEscape);
        out.push_back(b ^ kSerialXor);
    } else {
        out.push_back(b);
    }
}

inline Bytes encode_serial_frame(ByteView payload) {
    const std::uint16_t crc = crc16_ccitt(payload);
    Bytes out;
    out.reserve(payload.size() + payload.size() / 8 + 6);
    out.push_back(kSerialFlag);
    for (auto b : payload) stuff_byte(out, b);
    stuff_byte(out, static_cast<std::uint8_t>(crc >> 8));
    stuff_byte(out, static_cast<std::uint8_t>(crc));
    out.push_back(kSerialFlag);
    return out;
}

/// Validates escapes and CRC of the bytes between two flags; returns the payload.
inline Bytes unstuff_and_check(ByteView body) {
    Bytes raw;
    raw.reserve(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] == kSerialFlag) throw Error(Errc::framing_error, "flag inside frame");
        if (body[i] == kSerialEscape) {
            if (i + 1 >= body.size()) throw Error(Errc::framing_error, "dangling escape");
            const std::uint8_t v = body[++i] ^ kSerialXor;
            if (v != kSerialFlag && v != kSerialEscape) throw Error(Errc::framing_error, "bad escape");
            raw.push_back(v);
        } else {
            raw.push_back(body[i]);
        }
    }
    if (raw.size() < 2) throw Error(Errc::truncated);
    const std::uint16_t want = get_u16(raw, raw.size() - 2);
    raw.resize(raw.size() - 2);
    if (crc16_ccitt(raw) != want) throw Error(Errc::crc_error);
    return raw;
}

/// Decodes exactly one complete frame (leading and trailing flag included).
inline Bytes decode_serial_frame(ByteView frame) {
    if (frame.size() < 4) throw Error(Errc::truncated);
    if (frame.front() != kSerialFlag || frame.back() != kSerialFlag) {
        throw Error(Errc::framing_error, "missing delimiter");
    }
    return unstuff_and_check(frame.subspan(1, frame.size() - 2));
}

/// Incremental deframer for a byte stream carrying back-to-back serial frames.
class SerialDeframer {
public:
    /// Feeds bytes; every completed body is passed to `on_frame` (payload) or
    /// counted as an error when its CRC or escaping is invalid.
    template <typename OnFrame>
    void feed(ByteView bytes, OnFrame&& on_frame) {
        for (auto b : bytes) {
            if (b != kSerialFlag) {
                if (synced_) body_.push_back(b);
                continue;
            }
            // Every flag closes the current body; empty bodies are inter-frame fill.
            if (synced_ && !body_.empty()) {
                try {
                    on_frame(unstuff_and_check(body_));
                } catch (const Error&) {
                    ++errors_;
                }
            }
            body_.clear();
            synced_ = true;
        }
    }

    std::size_t errors() const { return errors_; }

private:
    Bytes body_;
    bool synced_ = false;
    std::size_t errors_ = 0;
};

}  // namespace meshgate
