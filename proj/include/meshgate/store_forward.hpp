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

/// @file store_forward.hpp
/// @brief Durable FIFO of readings with per-mote dedup, for the gateway's
/// store-and-forward path.
///
/// On disk: `<dir>/buffer.log`, an append-only sequence of records
///
///   type u8 | len u16 | payload | crc16(type, len, payload)
///
/// type 1 = reading (19 bytes), type 2 = high-water mark (mote u16, seq u32).
/// `<dir>/buffer.cursor` holds the byte offset of the first undelivered
/// record; it is replaced atomically (write temp, fsync, rename). The dedup
/// index is rebuilt from the whole log on open. A torn tail record is cut off.

#include "meshgate/net_model.hpp"
#include "meshgate/reading.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

namespace meshgate::gateway {

class DurableBuffer {
public:
    static constexpr std::uint8_t kReadingRecord = 1;
    static constexpr std::uint8_t kHwmRecord = 2;
    /// Compaction runs when the buffer drains and the log exceeds this size.
    static constexpr std::size_t kCompactThreshold = 64 * 1024;

    /// In-memory only (nothing survives the object).
    DurableBuffer() = default;

    /// Backed by files in `dir` (created if missing).
    explicit DurableBuffer(const std::filesystem::path& dir) : dir_(dir) {
        std::filesystem::create_directories(dir);
        load();
        fd_ = ::open(log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error(Errc::io_error, "open " + log_path().string());
    }

    DurableBuffer(const DurableBuffer&) = delete;
    DurableBuffer& operator=(const DurableBuffer&) = delete;
    ~DurableBuffer() {
        if (fd_ >= 0) ::close(fd_);
    }

    bool durable() const { return dir_.has_value(); }

    /// Appends unless (mote_id, seq) is at or below that mote's high-water mark.
    /// Returns false for duplicates.
    bool append(const SensorReading& r) {
        auto it = hwm_.find(r.mote_id);
        if (it != hwm_.end() && r.seq <= it->second) {
            ++duplicates_;
            return false;
        }
        hwm_[r.mote_id] = r.seq;
        const std::size_t at = log_size_;
        write_record(kReadingRecord, encode_reading(r));
        pending_.push_back({r, at});
        return true;
    }

    bool empty() const { return pending_.empty(); }
    std::size_t size() const { return pending_.size(); }
    const SensorReading& front() const { return pending_.front().reading; }
    std::vector<SensorReading> pending() const {
        std::vector<SensorReading> out;
        for (const auto& p : pending_) out.push_back(p.reading);
        return out;
    }

    /// Marks the first `n` pending readings delivered and persists the cursor.
    void pop(std::size_t n) {
        n = std::min(n, pending_.size());
        if (n == 0) return;
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
        delivered_ += n;
        cursor_ = pending_.empty() ? log_size_ : pending_.front().offset;
        write_cursor();
        if (pending_.empty() && log_size_ > kCompactThreshold) compact();
    }

    std::optional<std::uint32_t> hwm(std::uint16_t mote) const {
        auto it = hwm_.find(mote);
        if (it == hwm_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t duplicates() const { return duplicates_; }
    std::size_t delivered() const { return delivered_; }
    std::size_t log_bytes() const { return log_size_; }
    std::size_t torn_bytes_dropped() const { return torn_; }

    /// Rewrites the log as hwm records only. Requires an empty buffer.
    void compact() {
        if (!pending_.empty()) throw std::logic_error("compact with pending readings");
        if (!dir_) {
            log_size_ = 0;
            cursor_ = 0;
            return;
        }
        Bytes log;
        for (auto [mote, seq] : hwm_) {
            Bytes p;
            put_u16(p, mote);
            put_u32(p, seq);
            append_record(log, kHwmRecord, p);
        }
        const auto tmp = dir_->string() + "/buffer.log.tmp";
        write_file_synced(tmp, log);
        ::close(fd_);
        std::filesystem::rename(tmp, log_path());
        sync_dir();
        fd_ = ::open(log_path().c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
        if (fd_ < 0) throw Error(Errc::io_error, "reopen log");
        log_size_ = log.size();
        cursor_ = log_size_;
        write_cursor();
        ++compactions_;
    }

    std::size_t compactions() const { return compactions_; }

private:
    struct Pending {
        SensorReading reading;
        std::size_t offset;
    };

    std::filesystem::path log_path() const { return *dir_ / "buffer.log"; }
    std::filesystem::path cursor_path() const { return *dir_ / "buffer.cursor"; }

    static void append_record(Bytes& out, std::uint8_t type, ByteView payload) {
        const std::size_t start = out.size();
        put_u8(out, type);
        put_u16(out, static_cast<std::uint16_t>(payload.size()));
        put_bytes(out, payload);
        put_u16(out, crc16_ccitt(ByteView(out).subspan(start)));
    }

    void write_record(std::uint8_t type, ByteView payload) {
        Bytes rec;
        append_record(rec, type, payload);
        if (dir_) {
            write_all(fd_, rec);
            if (::fdatasync(fd_) != 0) throw Error(Errc::io_error, "fdatasync log");
        }
        log_size_ += rec.size();
    }

    static void write_all(int fd, ByteView b) {
        std::size_t off = 0;
        while (off < b.size()) {
            const auto n = ::write(fd, b.data() + off, b.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error(Errc::io_error, "write");
            }
            off += static_cast<std::size_t>(n);
        }
    }

    static void write_file_synced(const std::string& path, ByteView b) {
        const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
        if (fd < 0) throw Error(Errc::io_error, "open " + path);
        write_all(fd, b);
        const int rc = ::fsync(fd);
        ::close(fd);
        if (rc != 0) throw Error(Errc::io_error, "fsync " + path);
    }

    void sync_dir() const {
        const int fd = ::open(dir_->c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
        if (fd >= 0) {
            ::fsync(fd);
            ::close(fd);
        }
    }

    void write_cursor() {
        if (!dir_) return;
        Bytes b;
        put_u64(b, cursor_);
        const auto tmp = dir_->string() + "/buffer.cursor.tmp";
        write_file_synced(tmp, b);
        std::filesystem::rename(tmp, cursor_path());
        sync_dir();
    }

    void load() {
        Bytes log;
        if (std::ifstream in(log_path(), std::ios::binary); in) {
            log.assign(std::istreambuf_iterator<char>(in), {});
        }
        std::uint64_t cursor = 0;
        if (std::ifstream in(cursor_path(), std::ios::binary); in) {
            Bytes c(std::istreambuf_iterator<char>(in), {});
            if (c.size() == 8) cursor = get_u64(c, 0);
        }
        std::size_t off = 0;
        while (off + 5 <= log.size()) {
            const std::uint8_t type = log[off];
            const std::uint16_t len = get_u16(log, off + 1);
            const std::size_t end = off + 3 + len + 2;
            if (end > log.size()) break;
            const ByteView rec = ByteView(log).subspan(off, 3 + len);
            if (crc16_ccitt(rec) != get_u16(log, off + 3 + len)) break;
            const ByteView payload = rec.subspan(3);
            if (type == kReadingRecord && len == kReadingSize) {
                const auto r = decode_reading(payload);
                auto& h = hwm_[r.mote_id];
                h = std::max(h, r.seq);
                if (off >= cursor) pending_.push_back({r, off});
            } else if (type == kHwmRecord && len == 6) {
                auto& h = hwm_[get_u16(payload, 0)];
                h = std::max(h, get_u32(payload, 2));
            }
            off = end;
        }
        if (off < log.size()) {
            torn_ = log.size() - off;
            std::filesystem::resize_file(log_path(), off);
        }
        log_size_ = off;
        cursor_ = std::min<std::uint64_t>(cursor, off);
    }

    std::optional<std::filesystem::path> dir_;
    int fd_ = -1;
    std::deque<Pending> pending_;
    std::map<std::uint16_t, std::uint32_t> hwm_;
    std::size_t log_size_ = 0;
    std::uint64_t cursor_ = 0;
    std::size_t duplicates_ = 0;
    std::size_t delivered_ = 0;
    std::size_t torn_ = 0;
    std::size_t compactions_ = 0;
};

}  // namespace meshgate::gateway
