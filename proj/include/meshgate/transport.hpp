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

/// @file transport.hpp
/// @brief Mini-TCP: stop-and-wait reliable byte stream with a three-way handshake.
///
/// Segment layout (16-byte header, big-endian):
///   src_port16 | dst_port16 | seq32 | ack32 | flags8 | reserved8 | checksum16 | payload
///
/// The checksum covers the standard IPv4 or IPv6 pseudo-header followed by the
/// segment with its checksum field zeroed.

#include "meshgate/net_model.hpp"

#include <deque>
#include <optional>

namespace meshgate::transport {

inline constexpr std::uint8_t kProtocol = 6;
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kMaxPayload = 64;
inline constexpr std::uint16_t kCommandPort = 7000;
inline constexpr std::uint16_t kTelemetryPort = 7001;

enum Flags : std::uint8_t { kSyn = 0x01, kAck = 0x02, kFin = 0x04, kRst = 0x08 };

struct Segment {
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint8_t flags = 0;
    Bytes payload;

    bool has(Flags f) const { return (flags & f) != 0; }
    /// Sequence space consumed: payload plus one each for SYN and FIN.
    std::uint32_t seq_len() const {
        return static_cast<std::uint32_t>(payload.size()) + (has(kSyn) ? 1 : 0) + (has(kFin) ? 1 : 0);
    }
    bool operator==(const Segment&) const = default;
};

struct PseudoHeader {
    enum class Family { v4, v6 };
    Family family = Family::v6;
    Ipv4Address src4, dst4;
    Ipv6Address src6, dst6;

    static PseudoHeader v4(Ipv4Address src, Ipv4Address dst) {
        PseudoHeader h;
        h.family = Family::v4;
        h.src4 = src;
        h.dst4 = dst;
        return h;
    }
    static PseudoHeader v6(const Ipv6Address& src, const Ipv6Address& dst) {
        PseudoHeader h;
        h.src6 = src;
        h.dst6 = dst;
        return h;
    }

    void add_to(InternetChecksum& c, std::size_t length) const {
        if (family == Family::v4) {
            c.add_u32(src4.value);
            c.add_u32(dst4.value);
            c.add_u16(kProtocol);
            c.add_u16(static_cast<std::uint16_t>(length));
        } else {
            c.add(src6.bytes);
            c.add(dst6.bytes);
            c.add_u32(static_cast<std::uint32_t>(length));
            c.add_u32(kProtocol);
        }
    }
};

/// Checksum of an encoded segment (checksum field included as it stands).
inline std::uint16_t segment_sum(ByteView encoded, const PseudoHeader& ph) {
    InternetChecksum c;
    ph.add_to(c, encoded.size());
    c.add(encoded);
    return c.sum();
}

inline bool verify_segment(ByteView encoded, const PseudoHeader& ph) {
    return encoded.size() >= kHeaderSize && segment_sum(encoded, ph) == 0xFFFF;
}

/// Rewrites the checksum field of an encoded segment for a new pseudo-header.
inline void recompute_checksum(Bytes& encoded, const PseudoHeader& ph) {
    encoded[14] = 0;
    encoded[15] = 0;
    const std::uint16_t csum = static_cast<std::uint16_t>(~segment_sum(encoded, ph));
    encoded[14] = static_cast<std::uint8_t>(csum >> 8);
    encoded[15] = static_cast<std::uint8_t>(csum);
}

inline Bytes encode_segment(const Segment& s, const PseudoHeader& ph) {
    Bytes out;
    out.reserve(kHeaderSize + s.payload.size());
    put_u16(out, s.src_port);
    put_u16(out, s.dst_port);
    put_u32(out, s.seq);
    put_u32(out, s.ack);
    put_u8(out, s.flags);
    put_u8(out, 0);
    put_u16(out, 0);
    put_bytes(out, s.payload);
    recompute_checksum(out, ph);
    return out;
}

inline Segment decode_segment(ByteView b, const PseudoHeader& ph) {
    if (b.size() < kHeaderSize) throw Error(Errc::truncated);
    if (!verify_segment(b, ph)) throw Error(Errc::checksum_mismatch);
    Segment s;
    s.src_port = get_u16(b, 0);
    s.dst_port = get_u16(b, 2);
    s.seq = get_u32(b, 4);
    s.ack = get_u32(b, 8);
    s.flags = b[12];
    s.payload.assign(b.begin() + kHeaderSize, b.end());
    return s;
}

struct Timing {
    Micros initial_rto = std::chrono::seconds(1);
    Micros max_rto = std::chrono::seconds(8);
    int max_syn_retries = 5;
    int max_data_retries = 8;
};

enum class State { closed, syn_sent, syn_rcvd, established, fin_wait, closed_final };

constexpr std::string_view to_string(State s) {
    switch (s) {
        case State::closed: return "closed";
        case State::syn_sent: return "syn_sent";
        case State::syn_rcvd: return "syn_rcvd";
        case State::established: return "established";
        case State::fin_wait: return "fin_wait";
        case State::closed_final: return "closed_final";
    }
    return "?";
}

/// One end of a stop-and-wait connection. Sans-IO: inputs are segments and
/// timer ticks, outputs are segments to transmit. The owner moves segments
/// between peers and calls `on_timer` at or after `next_deadline()`.
class Connection {
public:
    using Out = std::vector<Segment>;

    static Connection client(std::uint16_t local_port, std::uint16_t remote_port, std::uint32_t iss,
                             Timing timing = {}) {
        return Connection(local_port, remote_port, iss, timing);
    }

    /// Passive open: builds the server side from a received SYN and returns the SYN+ACK.
    static Connection accept(const Segment& syn, std::uint32_t iss, SimTime now, Out& out, Timing timing = {}) {
        Connection c(syn.dst_port, syn.src_port, iss, timing);
        c.state_ = State::syn_rcvd;
        c.recv_next_ = syn.seq + 1;
        c.send_next_ = iss + 1;
        c.transmit(c.make(kSyn | kAck, iss, {}), now, out);
        return c;
    }

    /// Active open: emits the SYN.
    Out open(SimTime now) {
        Out out;
        state_ = State::syn_sent;
        send_next_ = iss_ + 1;
        transmit(make(kSyn, iss_, {}), now, out);
        return out;
    }

    /// Queues bytes for delivery. Empty input emits nothing.
    void send(ByteView data) {
        if (state_ == State::closed || state_ == State::closed_final) throw Error(Errc::connection_reset);
        send_buffer_.insert(send_buffer_.end(), data.begin(), data.end());
    }

    /// Emits the next data segment when nothing is in flight.
    Out poll(SimTime now) {
        Out out;
        if ((state_ != State::established && state_ != State::fin_wait) || in_flight_) return out;
        if (!send_buffer_.empty()) {
            const std::size_t n = std::min(send_buffer_.size(), kMaxPayload);
            Bytes chunk(send_buffer_.begin(), send_buffer_.begin() + static_cast<std::ptrdiff_t>(n));
            auto s = make(kAck, send_next_, std::move(chunk));
            send_next_ += static_cast<std::uint32_t>(n);
            transmit(std::move(s), now, out);
        } else if (close_requested_ && !fin_sent_) {
            auto s = make(kFin | kAck, send_next_, {});
            send_next_ += 1;
            fin_sent_ = true;
            state_ = State::fin_wait;
            transmit(std::move(s), now, out);
        }
        return out;
    }

    /// Requests teardown once queued data is acknowledged.
    Out close(SimTime now) {
        close_requested_ = true;
        return poll(now);
    }

    Out on_segment(const Segment& s, SimTime now) {
        Out out;
        if (s.has(kRst)) {
            if (state_ != State::closed_final) {
                reset_ = true;
                state_ = State::closed;
                in_flight_.reset();
            }
            return out;
        }

        switch (state_) {
            case State::closed:
            case State::closed_final:
                return out;

            case State::syn_sent:
                if (s.has(kSyn) && s.has(kAck) && s.ack == send_next_) {
                    recv_next_ = s.seq + 1;
                    in_flight_.reset();
                    state_ = State::established;
                    out.push_back(make(kAck, send_next_, {}));
                    append(out, poll(now));
                }
                return out;

            case State::syn_rcvd:
                if (s.has(kSyn) && !s.has(kAck)) {
                    // Our SYN+ACK was lost; answer the retransmitted SYN.
                    if (in_flight_) out.push_back(in_flight_->segment);
                    return out;
                }
                if (s.has(kAck) && s.ack == send_next_) {
                    in_flight_.reset();
                    state_ = State::established;
                    // Fall through to data handling with the same segment.
                    break;
                }
                return out;

            case State::established:
            case State::fin_wait:
                break;
        }

        if (s.has(kSyn)) {
            // Retransmitted SYN+ACK after our ACK was lost.
            out.push_back(make(kAck, send_next_, {}));
            return out;
        }

        if (s.has(kAck) && in_flight_ && s.ack == in_flight_->end_seq) {
            const bool was_fin = in_flight_->segment.has(kFin);
            if (!in_flight_->segment.payload.empty()) {
                send_buffer_.erase(send_buffer_.begin(),
                                   send_buffer_.begin() + static_cast<std::ptrdiff_t>(in_flight_->segment.payload.size()));
            }
            in_flight_.reset();
            if (was_fin) fin_acked_ = true;
        }

        const std::uint32_t len = static_cast<std::uint32_t>(s.payload.size()) + (s.has(kFin) ? 1 : 0);
        if (len > 0) {
            if (s.seq == recv_next_) {
                delivered_.insert(delivered_.end(), s.payload.begin(), s.payload.end());
                recv_next_ += len;
                if (s.has(kFin)) {
                    fin_received_ = true;
                    if (state_ == State::established) state_ = State::fin_wait;
                }
                out.push_back(make(kAck, send_next_, {}));
            } else {
                // Duplicate or out of window: re-acknowledge what we have.
                ++out_of_window_;
                out.push_back(make(kAck, send_next_, {}));
            }
        }

        if (fin_received_ && fin_acked_) state_ = State::closed_final;
        append(out, poll(now));
        return out;
    }

    /// Retransmits the in-flight segment if its deadline passed.
    Out on_timer(SimTime now) {
        Out out;
        if (!in_flight_ || now < in_flight_->deadline) return out;
        const int limit = in_flight_->segment.has(kSyn) ? timing_.max_syn_retries : timing_.max_data_retries;
        if (in_flight_->retries >= limit) {
            timed_out_ = true;
            reset_ = state_ != State::syn_sent;
            state_ = State::closed;
            in_flight_.reset();
            return out;
        }
        ++in_flight_->retries;
        ++retransmissions_;
        rto_ = std::min(rto_ * 2, timing_.max_rto);
        in_flight_->deadline = now + rto_;
        out.push_back(in_flight_->segment);
        return out;
    }

    std::optional<SimTime> next_deadline() const {
        if (!in_flight_) return std::nullopt;
        return in_flight_->deadline;
    }

    /// Moves out bytes delivered in order since the previous call.
    Bytes take_delivered() { return std::exchange(delivered_, {}); }

    State state() const { return state_; }
    bool established() const { return state_ == State::established; }
    /// Handshake gave up after max_syn_retries (Timeout).
    bool timed_out() const { return timed_out_ && !reset_; }
    /// Peer reset or data retransmissions exhausted (ConnectionReset).
    bool was_reset() const { return reset_; }
    bool idle() const { return !in_flight_ && send_buffer_.empty(); }
    /// Bytes queued but not yet acknowledged (including the in-flight segment).
    std::size_t unacked_bytes() const { return send_buffer_.size(); }
    Bytes unacked() const { return Bytes(send_buffer_.begin(), send_buffer_.end()); }
    std::uint32_t send_next() const { return send_next_; }
    std::uint32_t recv_next() const { return recv_next_; }
    Micros rto() const { return rto_; }
    std::size_t retransmissions() const { return retransmissions_; }
    std::size_t out_of_window() const { return out_of_window_; }
    std::uint16_t local_port() const { return local_port_; }
    std::uint16_t remote_port() const { return remote_port_; }

private:
    struct InFlight {
        Segment segment;
        std::uint32_t end_seq = 0;
        SimTime deadline{};
        int retries = 0;
    };

    Connection(std::uint16_t local_port, std::uint16_t remote_port, std::uint32_t iss, Timing timing)
        : local_port_(local_port), remote_port_(remote_port), iss_(iss), timing_(timing), rto_(timing.initial_rto) {}

    Segment make(std::uint8_t flags, std::uint32_t seq, Bytes payload) const {
        Segment s;
        s.src_port = local_port_;
        s.dst_port = remote_port_;
        s.seq = seq;
        s.ack = state_ == State::syn_sent && !(flags & kAck) ? 0 : recv_next_;
        s.flags = flags;
        s.payload = std::move(payload);
        return s;
    }

    void transmit(Segment s, SimTime now, Out& out) {
        rto_ = timing_.initial_rto;
        in_flight_ = InFlight{s, s.seq + s.seq_len(), now + rto_, 0};
        out.push_back(std::move(s));
    }

    static void append(Out& a, Out b) {
        for (auto& s : b) a.push_back(std::move(s));
    }

    std::uint16_t local_port_;
    std::uint16_t remote_port_;
    std::uint32_t iss_;
    Timing timing_;
    Micros rto_;
    State state_ = State::closed;
    std::uint32_t send_next_ = 0;
    std::uint32_t recv_next_ = 0;
    std::deque<std::uint8_t> send_buffer_;
    std::optional<InFlight> in_flight_;
    Bytes delivered_;
    bool close_requested_ = false;
    bool fin_sent_ = false;
    bool fin_acked_ = false;
    bool fin_received_ = false;
    bool reset_ = false;
    bool timed_out_ = false;
    std::size_t retransmissions_ = 0;
    std::size_t out_of_window_ = 0;
};

/// Segment that answers a segment addressed to no connection.
inline Segment make_reset(const Segment& s) {
    Segment r;
    r.src_port = s.dst_port;
    r.dst_port = s.src_port;
    r.seq = s.ack;
    r.ack = s.seq + s.seq_len();
    r.flags = kRst | kAck;
    return r;
}

}  // namespace meshgate::transport
