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

/// @file addrmap.hpp
/// @brief Stateless bijective IPv4 <-> IPv6 address mapping.
///
/// Two independent bijections, both pure functions of (address, config):
///
///   mote side:  mesh_prefix6 (/112) || id16   <->  pool_prefix4 (/16) || id16
///   host side:  gw_prefix6 (/96) || host32    <->  host32
///
/// Nothing is remembered between calls, so a reply can always be mapped back
/// without tracking the request that caused it.

#include "meshgate/common.hpp"

namespace meshgate::addrmap {

inline constexpr unsigned kMeshPrefixBits = 112;
inline constexpr unsigned kPoolPrefixBits = 16;
inline constexpr unsigned kGatewayPrefixBits = 96;

struct AddressMapConfig {
    Ipv6Address mesh_prefix6 = Ipv6Address::parse("fd00:6c70::");
    Ipv4Address pool_prefix4 = Ipv4Address::parse("10.77.0.0");
    Ipv6Address gw_prefix6 = Ipv6Address::parse("fd00:4664::");
    /// The gateway's own IPv4 address; hosts its telemetry server.
    Ipv4Address gateway_ipv4 = Ipv4Address::parse("10.0.0.1");

    /// Throws ConfigError when the prefixes overlap or the gateway sits inside the pool.
    void validate() const {
        // A /112 and a /96 are disjoint iff they differ within the first 96 bits.
        if (mesh_prefix6.has_prefix(gw_prefix6, kGatewayPrefixBits)) {
            throw Error(Errc::config_error, "mesh_prefix6 and gw_prefix6 overlap");
        }
        if (in_pool(gateway_ipv4)) throw Error(Errc::config_error, "gateway_ipv4 lies inside pool_prefix4");
        if ((pool_prefix4.value & 0xFFFF) != 0) throw Error(Errc::config_error, "pool_prefix4 has host bits set");
    }

    bool in_pool(Ipv4Address a) const { return (a.value >> 16) == (pool_prefix4.value >> 16); }
    bool on_mesh(const Ipv6Address& a) const { return a.has_prefix(mesh_prefix6, kMeshPrefixBits); }
    bool on_gateway(const Ipv6Address& a) const { return a.has_prefix(gw_prefix6, kGatewayPrefixBits); }
};

inline Ipv4Address mote6_to_virtual4(const Ipv6Address& a, const AddressMapConfig& cfg) {
    if (!cfg.on_mesh(a)) throw Error(Errc::not_mesh_address, a.to_string());
    return Ipv4Address{(cfg.pool_prefix4.value & 0xFFFF0000u) | a.low16()};
}

inline Ipv6Address virtual4_to_mote6(Ipv4Address v, const AddressMapConfig& cfg) {
    if (!cfg.in_pool(v)) throw Error(Errc::not_pool_address, v.to_string());
    Ipv6Address out = cfg.mesh_prefix6;
    out.bytes[14] = static_cast<std::uint8_t>(v.value >> 8);
    out.bytes[15] = static_cast<std::uint8_t>(v.value);
    return out;
}

inline Ipv6Address host4_to_virtual6(Ipv4Address h, const AddressMapConfig& cfg) {
    Ipv6Address out = cfg.gw_prefix6;
    out.bytes[12] = static_cast<std::uint8_t>(h.value >> 24);
    out.bytes[13] = static_cast<std::uint8_t>(h.value >> 16);
    out.bytes[14] = static_cast<std::uint8_t>(h.value >> 8);
    out.bytes[15] = static_cast<std::uint8_t>(h.value);
    return out;
}

inline Ipv4Address virtual6_to_host4(const Ipv6Address& a, const AddressMapConfig& cfg) {
    if (!cfg.on_gateway(a)) throw Error(Errc::not_gateway_prefix, a.to_string());
    return Ipv4Address{a.low32()};
}

/// Mote id carried by a mesh address (its low 16 bits).
inline std::uint16_t mote_id_of(const Ipv6Address& a) { return a.low16(); }

inline Ipv6Address mote_address(std::uint16_t mote_id, const AddressMapConfig& cfg) {
    Ipv6Address out = cfg.mesh_prefix6;
    out.bytes[14] = static_cast<std::uint8_t>(mote_id >> 8);
    out.bytes[15] = static_cast<std::uint8_t>(mote_id);
    return out;
}

inline Ipv4Address mote_virtual4(std::uint16_t mote_id, const AddressMapConfig& cfg) {
    return Ipv4Address{(cfg.pool_prefix4.value & 0xFFFF0000u) | mote_id};
}

}  // namespace meshgate::addrmap
