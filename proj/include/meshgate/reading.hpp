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

/// @file reading.hpp
/// @brief Consumption sample and its 19-byte wire form.
///
///   mote_id u16 | appliance_id u8 | seq u32 | timestamp_ms u64 | watts_milliwatts u32

#include "meshgate/common.hpp"

namespace meshgate {

inline constexpr std::size_t kReadingSize = 19;
inline constexpr std::uint8_t kAckOk = 0x06;
inline constexpr std::uint8_t kAckFail = 0x15;

struct SensorReading {
    std::uint16_t mote_id = 0;
    std::uint8_t appliance_id = 0;
    std::uint32_t seq = 0;
    std::uint64_t timestamp_ms = 0;
    std::uint32_t watts_mw = 0;

    double watts() const { return watts_mw / 1000.0; }

    bool operator==(const SensorReading&) const = default;
};

inline void encode_reading(const SensorReading& r, Bytes& out) {
    put_u16(out, r.mote_id);
    put_u8(out, r.appliance_id);
    put_u32(out, r.seq);
    put_u64(out, r.timestamp_ms);
    put_u32(out, r.watts_mw);
}

inline Bytes encode_reading(const SensorReading& r) {
    Bytes out;
    encode_reading(r, out);
    return out;
}

/// Throws Truncated when fewer than 19 bytes remain.
inline SensorReading decode_reading(Reader& rd) {
    SensorReading r;
    r.mote_id = rd.u16();
    r.appliance_id = rd.u8();
    r.seq = rd.u32();
    r.timestamp_ms = rd.u64();
    r.watts_mw = rd.u32();
    return r;
}

inline SensorReading decode_reading(ByteView b) {
    if (b.size() != kReadingSize) throw Error(Errc::length_mismatch, "reading must be 19 bytes");
    Reader rd(b);
    return decode_reading(rd);
}

/// Splits a byte stream into whole readings, keeping any partial tail for later.
class ReadingStream {
public:
    std::vector<SensorReading> feed(ByteView b) {
        buf_.insert(buf_.end(), b.begin(), b.end());
        std::vector<SensorReading> out;
        std::size_t off = 0;
        while (buf_.size() - off >= kReadingSize) {
            out.push_back(decode_reading(ByteView(buf_).subspan(off, kReadingSize)));
            off += kReadingSize;
        }
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(off));
        return out;
    }

    std::size_t buffered() const { return buf_.size(); }

private:
    Bytes buf_;
};

}  // namespace meshgate
