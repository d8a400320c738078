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

#include <gtest/gtest.h>

#include <random>

#include "meshgate/net_model.hpp"
#include "test_util.hpp"

using namespace meshgate;

namespace {

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return Errc::io_error;
}

}  // namespace

TEST(LinkFrame, EmptyPayloadIsHeaderOnly) {
    LinkFrame f{0x0002, 0x0001, 0, FrameType::data, {}};
    auto b = encode_link_frame(f);
    ASSERT_EQ(b.size(), 6u);
    EXPECT_EQ(b, (Bytes{0x00, 0x02, 0x00, 0x01, 0x00, 0x00}));
}

TEST(LinkFrame, PayloadBoundary) {
    LinkFrame f{1, 2, 3, FrameType::data, Bytes(121, 0xAB)};
    EXPECT_EQ(encode_link_frame(f).size(), 127u);
    f.payload.push_back(0);
    EXPECT_EQ(code_of([&] { encode_link_frame(f); }), Errc::oversized_payload);
}

TEST(LinkFrame, DecodeRejectsShortAndLong) {
    EXPECT_EQ(code_of([] { decode_link_frame(Bytes(5, 0)); }), Errc::truncated);
    EXPECT_EQ(code_of([] { decode_link_frame(Bytes(128, 0)); }), Errc::oversized);
}

TEST(LinkFrame, RoundTripRandom) {
    std::mt19937 rng(7);
    for (int i = 0; i < 1000; ++i) {
        LinkFrame f;
        f.dst_short = static_cast<std::uint16_t>(rng());
        f.src_short = static_cast<std::uint16_t>(rng());
        f.seq = static_cast<std::uint8_t>(rng());
        f.frame_type = static_cast<FrameType>(rng() % 3);
        f.payload = testutil::random_bytes(rng, rng() % 122);
        auto enc = encode_link_frame(f);
        ASSERT_LE(enc.size(), kLinkMtu);
        ASSERT_EQ(decode_link_frame(enc), f);
    }
}

TEST(Ipv4, ChecksumOfBareVersionWord) {
    // Oracle: the only non-zero 16-bit word is 0x4500, so the folded sum is
    // 0x4500 and the checksum is its ones-complement.
    std::array<std::uint8_t, 20> header{};
    header[0] = 0x45;
    const std::uint16_t oracle = static_cast<std::uint16_t>(~0x4500);
    EXPECT_EQ(ipv4_header_checksum(header), oracle);
    EXPECT_EQ(oracle, 0xBAFF);
}

TEST(Ipv4, ChecksumMatchesHandSum) {
    Ipv4Packet p;
    p.src = Ipv4Address::parse("192.0.2.1");
    p.dst = Ipv4Address::parse("10.77.0.3");
    p.protocol = 6;
    p.ttl = 64;
    p.payload = {1, 2, 3};
    auto enc = encode_ipv4(p);
    // Hand sum of the header words with checksum zeroed.
    std::uint32_t sum = 0x4500 + 23 + 0 + 0 + 0x4006 + 0xC000 + 0x0201 + 0x0A4D + 0x0003;
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    EXPECT_EQ(get_u16(enc, 10), static_cast<std::uint16_t>(~sum));
}

TEST(Ipv4, RoundTripAndSingleBitFlips) {
    std::mt19937 rng(11);
    for (int i = 0; i < 200; ++i) {
        Ipv4Packet p;
        p.src.value = static_cast<std::uint32_t>(rng());
        p.dst.value = static_cast<std::uint32_t>(rng());
        p.protocol = static_cast<std::uint8_t>(rng());
        p.ttl = static_cast<std::uint8_t>(rng());
        p.payload = testutil::random_bytes(rng, rng() % 100);
        auto enc = encode_ipv4(p);
        auto dec = decode_ipv4(enc);
        p.header_checksum = dec.header_checksum;
        ASSERT_EQ(dec, p);
        for (std::size_t bit = 0; bit < 160; ++bit) {
            Bytes bad = enc;
            bad[bit / 8] ^= static_cast<std::uint8_t>(0x80 >> (bit % 8));
            ASSERT_EQ(code_of([&] { decode_ipv4(bad); }), Errc::checksum_mismatch) << "bit " << bit;
        }
    }
    EXPECT_EQ(code_of([] { decode_ipv4(Bytes(19, 0)); }), Errc::truncated);
}

TEST(Ipv6, EmptyPayloadIsFortyBytes) {
    Ipv6Packet p;
    EXPECT_EQ(encode_ipv6(p).size(), 40u);
}

TEST(Ipv6, RoundTripRandom) {
    std::mt19937 rng(13);
    for (int i = 0; i < 500; ++i) {
        auto p = testutil::random_ipv6(rng, rng() % 1241);
        auto enc = encode_ipv6(p);
        ASSERT_LE(enc.size(), kIpv6Mtu);
        ASSERT_EQ(decode_ipv6(enc), p);
    }
}

TEST(Ipv6, RejectsOversizeAndTruncated) {
    Ipv6Packet p;
    p.payload.resize(1241);
    EXPECT_EQ(code_of([&] { encode_ipv6(p); }), Errc::datagram_too_large);
    EXPECT_EQ(code_of([] { decode_ipv6(Bytes(39, 0x60)); }), Errc::truncated);
    EXPECT_EQ(code_of([] { decode_ipv6(Bytes(1281, 0x60)); }), Errc::oversized);
}

TEST(SerialFrame, Crc16KnownVector) {
    // CRC-16/CCITT-FALSE check value for "123456789".
    const std::string s = "123456789";
    EXPECT_EQ(crc16_ccitt(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())), 0x29B1);
}

TEST(SerialFrame, RoundTripAndStuffing) {
    std::mt19937 rng(17);
    for (int i = 0; i < 300; ++i) {
        auto p = testutil::random_ipv6(rng, rng() % 200);
        p.payload.push_back(kSerialFlag);
        p.payload.push_back(kSerialEscape);
        auto frame = encode_serial_frame(encode_ipv6(p));
        ASSERT_EQ(std::count(frame.begin(), frame.end(), kSerialFlag), 2);
        ASSERT_EQ(decode_ipv6(decode_serial_frame(frame)), p);
    }
}

TEST(SerialFrame, EverySingleBitFlipIsRejected) {
    std::mt19937 rng(19);
    for (int i = 0; i < 40; ++i) {
        auto p = testutil::random_ipv6(rng, rng() % 64);
        auto frame = encode_serial_frame(encode_ipv6(p));
        for (std::size_t bit = 8; bit < (frame.size() - 1) * 8; ++bit) {
            Bytes bad = frame;
            bad[bit / 8] ^= static_cast<std::uint8_t>(0x80 >> (bit % 8));
            bool rejected = false;
            try {
                decode_serial_frame(bad);
            } catch (const Error&) {
                rejected = true;
            }
            ASSERT_TRUE(rejected) << "bit " << bit;
        }
    }
}

TEST(SerialFrame, DeframerResyncsAfterGarbage) {
    Bytes a{1, 2, 3}, b{0x7E, 0x7D, 9};
    Bytes stream{0x55, 0x66};
    put_bytes(stream, encode_serial_frame(a));
    Bytes corrupt = encode_serial_frame(Bytes{4, 5, 6});
    corrupt[2] ^= 0x01;
    put_bytes(stream, corrupt);
    put_bytes(stream, encode_serial_frame(b));

    SerialDeframer d;
    std::vector<Bytes> got;
    // Feed one byte at a time to exercise partial input.
    for (auto byte : stream) d.feed(ByteView(&byte, 1), [&](Bytes f) { got.push_back(std::move(f)); });
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0], a);
    EXPECT_EQ(got[1], b);
    EXPECT_EQ(d.errors(), 1u);
}
