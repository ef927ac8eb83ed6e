#pragma once

// Thin real-socket adapter. Carries the same fragment frames as the
// simulated segments over a TCP stream with a u32 length prefix. Received
// frames land in a locked queue; pump() drains them on the caller's
// thread, which is how bytes enter a node's event loop without the
// adapter ever touching node state. Loopback integration only; all bench
// scenarios run on simulated transports.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "embchord/bytes.hpp"

namespace embchord {

class TcpLink {
public:
    using frame_handler = std::function<void(byte_buffer)>;

    TcpLink(const TcpLink&) = delete;
    TcpLink& operator=(const TcpLink&) = delete;

    TcpLink(TcpLink&&) = delete;
    TcpLink& operator=(TcpLink&&) = delete;

    ~TcpLink() { close(); }

    /// Binds 127.0.0.1:`port` (0 picks an ephemeral port) and accepts a
    /// single peer in the background.
    static std::unique_ptr<TcpLink> listen(std::uint16_t port) {
        auto link = std::unique_ptr<TcpLink>(new TcpLink());
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw config_error("tcp: socket() failed");
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
            ::listen(fd, 1) != 0) {
            ::close(fd);
            throw config_error("tcp: bind/listen failed");
        }
        socklen_t len = sizeof(addr);
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        link->port_ = ntohs(addr.sin_port);
        link->listen_fd_ = fd;
        link->worker_ = std::thread([self = link.get()]() {
            int conn = ::accept(self->listen_fd_, nullptr, nullptr);
            {
                std::lock_guard lock(self->mutex_);
                self->fd_ = conn;
            }
            self->ready_.notify_all();
            if (conn >= 0) self->read_loop(conn);
        });
        return link;
    }

    static std::unique_ptr<TcpLink> connect(const std::string& host, std::uint16_t port) {
        auto link = std::unique_ptr<TcpLink>(new TcpLink());
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw config_error("tcp: socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw config_error("tcp: bad address " + host);
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            throw config_error("tcp: connect failed");
        }
        link->fd_ = fd;
        link->port_ = port;
        link->worker_ = std::thread([self = link.get(), fd]() { self->read_loop(fd); });
        return link;
    }

    std::uint16_t port() const noexcept { return port_; }

    /// Blocks briefly until the connection exists, then writes one
    /// length-prefixed frame.
    void send_frame(byte_view frame) {
        int fd = wait_connected();
        byte_writer w;
        w.u32(static_cast<std::uint32_t>(frame.size()));
        w.bytes(frame);
        const byte_buffer& out = w.data();
        std::size_t sent = 0;
        std::lock_guard lock(write_mutex_);
        while (sent < out.size()) {
            ssize_t n = ::send(fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
            if (n <= 0) throw config_error("tcp: send failed");
            sent += std::size_t(n);
        }
    }

    /// Drains every queued inbound frame into `fn`; returns the count.
    std::size_t pump(const frame_handler& fn) {
        std::deque<byte_buffer> batch;
        {
            std::lock_guard lock(mutex_);
            batch.swap(inbox_);
        }
        for (auto& frame : batch) fn(std::move(frame));
        return batch.size();
    }

    /// Spins the caller until `count` frames have been pumped or the
    /// deadline passes; test convenience.
    std::size_t pump_until(const frame_handler& fn, std::size_t count, int timeout_ms) {
        std::size_t total = 0;
        for (int waited = 0; total < count && waited < timeout_ms; ++waited) {
            total += pump(fn);
            if (total >= count) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
        return total;
    }

    void close() {
        int fd, lfd;
        {
            std::lock_guard lock(mutex_);
            fd = fd_;
            lfd = listen_fd_;
            fd_ = -1;
            listen_fd_ = -1;
        }
        if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
        if (lfd >= 0) ::shutdown(lfd, SHUT_RDWR);
        if (worker_.joinable()) worker_.join();
        if (fd >= 0) ::close(fd);
        if (lfd >= 0) ::close(lfd);
    }

private:
    TcpLink() = default;

    int wait_connected() {
        std::unique_lock lock(mutex_);
        if (!ready_.wait_for(lock, std::chrono::seconds(5), [this]() { return fd_ >= 0; }))
            throw config_error("tcp: no peer connected");
        return fd_;
    }

    void read_loop(int fd) {
        auto read_exact = [fd](std::uint8_t* out, std::size_t n) {
            std::size_t got = 0;
            while (got < n) {
                ssize_t r = ::recv(fd, out + got, n - got, 0);
                if (r <= 0) return false;
                got += std::size_t(r);
            }
            return true;
        };
        while (true) {
            std::uint8_t len_be[4];
            if (!read_exact(len_be, 4)) break;
            std::uint32_t len = (std::uint32_t(len_be[0]) << 24) | (std::uint32_t(len_be[1]) << 16) |
                                (std::uint32_t(len_be[2]) << 8) | len_be[3];
            if (len > (1u << 20)) break; // refuse absurd frames
            byte_buffer frame(len);
            if (len && !read_exact(frame.data(), len)) break;
            {
                std::lock_guard lock(mutex_);
                inbox_.push_back(std::move(frame));
            }
        }
    }

    std::mutex mutex_;
    std::mutex write_mutex_;
    std::condition_variable ready_;
    std::deque<byte_buffer> inbox_;
    std::thread worker_;
    int fd_ = -1;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
};

} // namespace embchord
