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

// Test-only reference computations. Nothing here calls into the code under
// test beyond plain value types.

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <vector>

#include "meshgate/common.hpp"

namespace oracle {

/// Copies `prefix_bytes` bytes of `prefix`, then writes `value` big-endian into the next `value_bytes`.
inline meshgate::Ipv6Address concat_prefix(const meshgate::Ipv6Address& prefix, std::size_t prefix_bytes,
                                           std::uint64_t value, std::size_t value_bytes) {
    meshgate::Ipv6Address out{};
    for (std::size_t i = 0; i < prefix_bytes; ++i) out.bytes[i] = prefix.bytes[i];
    for (std::size_t i = 0; i < value_bytes; ++i) {
        out.bytes[prefix_bytes + i] = static_cast<std::uint8_t>(value >> (8 * (value_bytes - 1 - i)));
    }
    return out;
}

/// Plain word-by-word ones-complement sum over a byte vector (odd tail padded with zero).
inline std::uint16_t ones_sum(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t sum = 0;
    for (std::size_t i = 0; i < bytes.size(); i += 2) {
        std::uint32_t hi = bytes[i];
        std::uint32_t lo = i + 1 < bytes.size() ? bytes[i + 1] : 0;
        sum += (hi << 8) | lo;
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<std::uint16_t>(sum);
}

inline bool transport_checksum_ok_v6(const meshgate::Ipv6Address& src, const meshgate::Ipv6Address& dst,
                                     const std::vector<std::uint8_t>& segment) {
    std::vector<std::uint8_t> buf(src.bytes.begin(), src.bytes.end());
    buf.insert(buf.end(), dst.bytes.begin(), dst.bytes.end());
    const std::uint32_t len = static_cast<std::uint32_t>(segment.size());
    for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<std::uint8_t>(len >> s));
    buf.insert(buf.end(), {0, 0, 0, 6});
    buf.insert(buf.end(), segment.begin(), segment.end());
    return ones_sum(buf) == 0xFFFF;
}

inline bool transport_checksum_ok_v4(meshgate::Ipv4Address src, meshgate::Ipv4Address dst,
                                     const std::vector<std::uint8_t>& segment) {
    std::vector<std::uint8_t> buf;
    for (auto v : {src.value, dst.value}) {
        for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<std::uint8_t>(v >> s));
    }
    buf.insert(buf.end(), {0, 6, static_cast<std::uint8_t>(segment.size() >> 8),
                           static_cast<std::uint8_t>(segment.size())});
    buf.insert(buf.end(), segment.begin(), segment.end());
    return ones_sum(buf) == 0xFFFF;
}

/// Breadth-first hop distances from `src`; unreachable nodes are absent.
inline std::map<int, int> bfs(const std::map<int, std::set<int>>& adj, int src) {
    std::map<int, int> dist{{src, 0}};
    std::queue<int> q;
    q.push(src);
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        auto it = adj.find(u);
        if (it == adj.end()) continue;
        for (int v : it->second) {
            if (!dist.count(v)) {
                dist[v] = dist[u] + 1;
                q.push(v);
            }
        }
    }
    return dist;
}

inline double mean(const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Population standard deviation, two-pass.
inline double stddev(const std::vector<double>& xs) {
    const double m = mean(xs);
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace oracle
