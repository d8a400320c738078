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

/// @file translate.hpp
/// @brief Stateless IPv4 <-> IPv6 packet rewriting with transport checksum repair.

#include "meshgate/addrmap.hpp"
#include "meshgate/net_model.hpp"
#include "meshgate/transport.hpp"

namespace meshgate::gateway {

/// Client -> mote direction. The hop limit copies the TTL (the translator is not a router hop).
inline Ipv6Packet translate_4to6(const Ipv4Packet& p, const addrmap::AddressMapConfig& cfg) {
    if (!cfg.in_pool(p.dst)) throw Error(Errc::not_pool_address, p.dst.to_string());
    if (p.protocol != transport::kProtocol) throw Error(Errc::unsupported_protocol, std::to_string(p.protocol));
    if (p.payload.size() < transport::kHeaderSize) throw Error(Errc::truncated, "transport header");
    Ipv6Packet out;
    out.src = addrmap::host4_to_virtual6(p.src, cfg);
    out.dst = addrmap::virtual4_to_mote6(p.dst, cfg);
    out.next_header = p.protocol;
    out.hop_limit = p.ttl;
    out.payload = p.payload;
    transport::recompute_checksum(out.payload, transport::PseudoHeader::v6(out.src, out.dst));
    return out;
}

/// Mote -> client direction; exact mirror of translate_4to6.
inline Ipv4Packet translate_6to4(const Ipv6Packet& p, const addrmap::AddressMapConfig& cfg) {
    if (!cfg.on_gateway(p.dst)) throw Error(Errc::not_gateway_prefix, p.dst.to_string());
    if (!cfg.on_mesh(p.src)) throw Error(Errc::not_mesh_address, p.src.to_string());
    if (p.next_header != transport::kProtocol) {
        throw Error(Errc::unsupported_protocol, std::to_string(p.next_header));
    }
    if (p.payload.size() < transport::kHeaderSize) throw Error(Errc::truncated, "transport header");
    Ipv4Packet out;
    out.src = addrmap::mote6_to_virtual4(p.src, cfg);
    out.dst = addrmap::virtual6_to_host4(p.dst, cfg);
    out.protocol = p.next_header;
    out.ttl = p.hop_limit;
    out.payload = p.payload;
    transport::recompute_checksum(out.payload, transport::PseudoHeader::v4(out.src, out.dst));
    return out;
}

}  // namespace meshgate::gateway
