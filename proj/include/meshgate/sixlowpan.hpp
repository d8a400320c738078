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

/// @file sixlowpan.hpp
/// @brief IPv6-over-link adaptation: fragmentation, reassembly and mesh-prefix elision.
///
/// Dispatch bytes:
///   0x41                 uncompressed IPv6 follows
///   0x42 | flags << 2    prefix-compressed header (flag 1: src elided, flag 2: dst elided)
///   0xC0 | size[10:8]    FRAG1: size8, tag16, then the first slice of the datagram
///   0xE0 | size[10:8]    FRAGN: size8, tag16, offset8 (8-byte units), then a slice

#include "meshgate/net_model.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

namespace meshgate::sixlowpan {

inline constexpr std::uint8_t kDispatchIpv6 = 0x41;
inline constexpr std::uint8_t kDispatchCompressed = 0x42;
inline constexpr std::uint8_t kDispatchFrag1 = 0xC0;
inline constexpr std::uint8_t kDispatchFragN = 0xE0;
inline constexpr std::size_t kFrag1HeaderSize = 4;
inline constexpr std::size_t kFragNHeaderSize = 5;
inline constexpr std::uint8_t kSrcElided = 0x01;
inline constexpr std::uint8_t kDstElided = 0x02;
inline constexpr unsigned kMeshPrefixBits = 112;
inline constexpr Micros kReassemblyTimeout = std::chrono::seconds(10);

struct FragmentHeader {
    enum class Kind { first, subsequent };
    Kind kind = Kind::first;
    std::uint16_t datagram_size = 0;  // 11 bits
    std::uint16_t datagram_tag = 0;
    std::uint8_t datagram_offset = 0;  // 8-byte units, subsequent only

    std::size_t size() const { return kind == Kind::first ? kFrag1HeaderSize : kFragNHeaderSize; }

    void encode(Bytes& out) const {
        const std::uint8_t base = kind == Kind::first ? kDispatchFrag1 : kDispatchFragN;
        put_u8(out, static_cast<std::uint8_t>(base | ((datagram_size >> 8) & 0x07)));
        put_u8(out, static_cast<std::uint8_t>(datagram_size));
        put_u16(out, datagram_tag);
        if (kind == Kind::subsequent) put_u8(out, datagram_offset);
    }

    static FragmentHeader decode(Reader& r) {
        FragmentHeader h;
        const std::uint8_t d = r.u8();
        if ((d & 0xF8) == kDispatchFrag1) {
            h.kind = Kind::first;
        } else if ((d & 0xF8) == kDispatchFragN) {
            h.kind = Kind::subsequent;
        } else {
            throw Error(Errc::malformed_dispatch);
        }
        h.datagram_size = static_cast<std::uint16_t>(((d & 0x07) << 8) | r.u8());
        h.datagram_tag = r.u16();
        if (h.kind == Kind::subsequent) h.datagram_offset = r.u8();
        return h;
    }
};

inline bool is_fragment_dispatch(std::uint8_t d) {
    return (d & 0xF8) == kDispatchFrag1 || (d & 0xF8) == kDispatchFragN;
}

inline bool is_compressed_dispatch(std::uint8_t d) {
    return (d & 0xF3) == kDispatchCompressed && (d & 0x0C) != 0;
}

/// Elides whichever of src/dst begins with `mesh_prefix` down to its low 16 bits.
/// Falls back to the 0x41 form when neither address is on-mesh.
inline Bytes compress(const Ipv6Packet& p, const Ipv6Address& mesh_prefix) {
    std::uint8_t flags = 0;
    if (p.src.has_prefix(mesh_prefix, kMeshPrefixBits)) flags |= kSrcElided;
    if (p.dst.has_prefix(mesh_prefix, kMeshPrefixBits)) flags |= kDstElided;
    if (flags == 0) {
        Bytes out{kDispatchIpv6};
        put_bytes(out, encode_ipv6(p));
        return out;
    }
    if (p.encoded_size() > kIpv6Mtu) throw Error(Errc::datagram_too_large);
    Bytes out;
    out.reserve(p.encoded_size() + 1);
    put_u8(out, static_cast<std::uint8_t>(kDispatchCompressed | (flags << 2)));
    put_u32(out, 0x60000000u);
    put_u16(out, static_cast<std::uint16_t>(p.payload.size()));
    put_u8(out, p.next_header);
    put_u8(out, p.hop_limit);
    if (flags & kSrcElided) put_u16(out, p.src.low16()); else put_bytes(out, p.src.bytes);
    if (flags & kDstElided) put_u16(out, p.dst.low16()); else put_bytes(out, p.dst.bytes);
    put_bytes(out, p.payload);
    return out;
}

inline Ipv6Address mesh_address(const Ipv6Address& mesh_prefix, std::uint16_t suffix) {
    Ipv6Address a = mesh_prefix;
    a.bytes[14] = static_cast<std::uint8_t>(suffix >> 8);
    a.bytes[15] = static_cast<std::uint8_t>(suffix);
    return a;
}

inline Ipv6Packet decompress(ByteView b, const Ipv6Address& mesh_prefix) {
    if (b.empty()) throw Error(Errc::truncated);
    if (b[0] == kDispatchIpv6) return decode_ipv6(b.subspan(1));
    if (!is_compressed_dispatch(b[0])) throw Error(Errc::malformed_dispatch);
    const std::uint8_t flags = (b[0] >> 2) & 0x03;
    Reader r(b.subspan(1));
    if ((r.u32() >> 28) != 6) throw Error(Errc::bad_version);
    const std::uint16_t payload_len = r.u16();
    Ipv6Packet p;
    p.next_header = r.u8();
    p.hop_limit = r.u8();
    auto read_addr = [&](bool elided) {
        if (elided) return mesh_address(mesh_prefix, r.u16());
        Ipv6Address a;
        auto v = r.take(16);
        std::copy(v.begin(), v.end(), a.bytes.begin());
        return a;
    };
    p.src = read_addr(flags & kSrcElided);
    p.dst = read_addr(flags & kDstElided);
    if (r.remaining() != payload_len) throw Error(Errc::length_mismatch);
    auto rest = r.rest();
    p.payload.assign(rest.begin(), rest.end());
    return p;
}

/// 16-bit datagram tag source; wraps at 2^16.
class TagAllocator {
public:
    explicit TagAllocator(std::uint16_t start = 0) : next_(start) {}
    std::uint16_t next() { return next_++; }
    std::uint16_t peek() const { return next_; }

private:
    std::uint16_t next_;
};

/// Splits an already-encoded datagram into FRAG1/FRAGN payloads of at most `budget` bytes.
inline std::vector<Bytes> fragment_bytes(ByteView datagram, std::size_t budget, std::uint16_t tag) {
    if (datagram.size() > kIpv6Mtu) throw Error(Errc::datagram_too_large);
    const std::size_t first_body = ((budget - kFrag1HeaderSize) / 8) * 8;
    const std::size_t next_body = ((budget - kFragNHeaderSize) / 8) * 8;
    std::vector<Bytes> out;
    std::size_t offset = 0;
    while (offset < datagram.size()) {
        FragmentHeader h;
        h.kind = offset == 0 ? FragmentHeader::Kind::first : FragmentHeader::Kind::subsequent;
        h.datagram_size = static_cast<std::uint16_t>(datagram.size());
        h.datagram_tag = tag;
        h.datagram_offset = static_cast<std::uint8_t>(offset / 8);
        const std::size_t remaining = datagram.size() - offset;
        // The final fragment needs no 8-byte alignment, so it may use the whole budget.
        const std::size_t take = remaining + h.size() <= budget ? remaining
                                                                : (offset == 0 ? first_body : next_body);
        Bytes frag;
        frag.reserve(h.size() + take);
        h.encode(frag);
        put_bytes(frag, datagram.subspan(offset, take));
        out.push_back(std::move(frag));
        offset += take;
    }
    return out;
}

/// Uncompressed adaptation: a single 0x41 payload when it fits, FRAG1/FRAGN otherwise.
inline std::vector<Bytes> fragment(const Ipv6Packet& p, std::size_t budget, TagAllocator& tags) {
    if (p.encoded_size() > kIpv6Mtu) throw Error(Errc::datagram_too_large);
    const Bytes encoded = encode_ipv6(p);
    if (encoded.size() + 1 <= budget) {
        Bytes single{kDispatchIpv6};
        put_bytes(single, encoded);
        return {std::move(single)};
    }
    return fragment_bytes(encoded, budget, tags.next());
}

/// Mesh transmit path: prefix-compressed single payload when it fits, else `fragment`.
inline std::vector<Bytes> adapt(const Ipv6Packet& p, const Ipv6Address& mesh_prefix, std::size_t budget,
                                TagAllocator& tags) {
    Bytes c = compress(p, mesh_prefix);
    if (c.size() <= budget) return {std::move(c)};
    return fragment(p, budget, tags);
}

/// Per-receiver reassembly state keyed by (link source, datagram tag).
class ReassemblyBuffer {
public:
    explicit ReassemblyBuffer(std::optional<Ipv6Address> mesh_prefix = std::nullopt,
                              Micros timeout = kReassemblyTimeout)
        : mesh_prefix_(mesh_prefix), timeout_(timeout) {}

    /// Accepts one link payload. Returns the datagram exactly once, when complete.
    /// Throws StaleFragment for a fragment of an already completed or expired
    /// datagram, MalformedDispatch for unknown dispatch bytes and
    /// ConflictingFragment when overlapping bytes disagree (the entry is dropped).
    std::optional<Ipv6Packet> reassemble(std::uint16_t src, ByteView payload, SimTime now) {
        expire(now);
        if (payload.empty()) throw Error(Errc::malformed_dispatch, "empty payload");
        const std::uint8_t d = payload[0];
        if (d == kDispatchIpv6 || is_compressed_dispatch(d)) {
            if (d != kDispatchIpv6 && !mesh_prefix_) throw Error(Errc::malformed_dispatch, "no mesh prefix");
            return decompress(payload, mesh_prefix_.value_or(Ipv6Address{}));
        }
        if (!is_fragment_dispatch(d)) throw Error(Errc::malformed_dispatch);

        Reader r(payload);
        const FragmentHeader h = FragmentHeader::decode(r);
        const ByteView body = r.rest();
        const Key key{src, h.datagram_tag};
        if (retired_.contains(key)) throw Error(Errc::stale_fragment);

        const std::size_t offset = static_cast<std::size_t>(h.datagram_offset) * 8;
        if (h.datagram_size > kIpv6Mtu || offset + body.size() > h.datagram_size) {
            throw Error(Errc::malformed_dispatch, "fragment exceeds datagram");
        }

        auto [it, inserted] = entries_.try_emplace(key);
        Entry& e = it->second;
        if (inserted) {
            e.size = h.datagram_size;
            e.data.assign(h.datagram_size, 0);
            e.have.assign(h.datagram_size, false);
            e.deadline = now + timeout_;
        } else if (e.size != h.datagram_size) {
            entries_.erase(it);
            throw Error(Errc::conflicting_fragment, "size changed");
        }

        for (std::size_t i = 0; i < body.size(); ++i) {
            const std::size_t at = offset + i;
            if (e.have[at]) {
                if (e.data[at] != body[i]) {
                    entries_.erase(it);
                    throw Error(Errc::conflicting_fragment);
                }
                continue;
            }
            e.have[at] = true;
            e.data[at] = body[i];
            ++e.received;
        }
        if (e.received < e.size) return std::nullopt;

        Bytes datagram = std::move(e.data);
        const SimTime deadline = e.deadline;
        entries_.erase(it);
        retired_.emplace(key, deadline);
        return decode_ipv6(datagram);
    }

    /// Evicts incomplete entries and forgets completed tags whose deadline passed.
    /// Returns the number of incomplete datagrams dropped.
    std::size_t expire(SimTime now) {
        std::size_t dropped = 0;
        for (auto it = entries_.begin(); it != entries_.end();) {
            if (it->second.deadline <= now) {
                it = entries_.erase(it);
                ++dropped;
            } else {
                ++it;
            }
        }
        for (auto it = retired_.begin(); it != retired_.end();) {
            it = it->second <= now ? retired_.erase(it) : std::next(it);
        }
        evicted_ += dropped;
        return dropped;
    }

    std::size_t live_entries() const { return entries_.size(); }
    std::size_t evicted() const { return evicted_; }

    std::optional<SimTime> next_deadline() const {
        std::optional<SimTime> best;
        for (const auto& [k, e] : entries_) {
            if (!best || e.deadline < *best) best = e.deadline;
        }
        return best;
    }

private:
    using Key = std::pair<std::uint16_t, std::uint16_t>;

    struct Entry {
        std::uint16_t size = 0;
        std::size_t received = 0;
        Bytes data;
        std::vector<bool> have;
        SimTime deadline{};
    };

    std::optional<Ipv6Address> mesh_prefix_;
    Micros timeout_;
    std::map<Key, Entry> entries_;
    std::map<Key, SimTime> retired_;
    std::size_t evicted_ = 0;
};

}  // namespace meshgate::sixlowpan
