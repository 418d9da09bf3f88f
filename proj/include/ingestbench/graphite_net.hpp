#pragma once

// TCP transport for the Graphite plaintext protocol (POSIX sockets).

#include "ingestbench/core.hpp"
#include "ingestbench/metrics.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <list>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>

namespace ingestbench {

inline constexpr std::uint16_t kCarbonPort = 2003;

/// Accepts connections on a listening socket, one thread per connection,
/// and feeds each stream through its own CarbonIngest into a shared store.
class CarbonServer {
public:
    explicit CarbonServer(SeriesStore& store, std::uint16_t port = kCarbonPort, const char* bind_addr = "127.0.0.1")
        : store_(&store)
    {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) {
            throw Error(ErrorCode::IoError, std::string("socket: ") + std::strerror(errno));
        }
        const int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, bind_addr, &addr.sin_addr) != 1) {
            ::close(fd_);
            throw Error(ErrorCode::IoError, std::string("bad bind address ") + bind_addr);
        }
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 16) < 0) {
            const auto err = errno;
            ::close(fd_);
            throw Error(ErrorCode::IoError, "bind/listen on port " + std::to_string(port) + ": " + std::strerror(err));
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    CarbonServer(const CarbonServer&) = delete;
    CarbonServer& operator=(const CarbonServer&) = delete;

    ~CarbonServer() { stop(); }

    [[nodiscard]] std::uint16_t port() const noexcept { return port_; }
    [[nodiscard]] std::uint64_t accepted() const noexcept { return accepted_.load(); }
    [[nodiscard]] std::uint64_t malformed() const noexcept { return malformed_.load(); }

    void stop()
    {
        if (stopping_.exchange(true)) {
            return;
        }
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        if (acceptor_.joinable()) {
            acceptor_.join();
        }
        std::list<Connection> conns;
        {
            std::lock_guard lock(mutex_);
            for (auto& c : connections_) {
                ::shutdown(c.fd, SHUT_RDWR);
            }
            conns.splice(conns.end(), connections_);
        }
        for (auto& c : conns) {
            if (c.thread.joinable()) {
                c.thread.join();
            }
            ::close(c.fd);
        }
    }

private:
    struct Connection {
        int fd;
        std::thread thread;
    };

    void accept_loop()
    {
        while (!stopping_) {
            const int cfd = ::accept(fd_, nullptr, nullptr);
            if (cfd < 0) {
                if (errno == EINTR) {
                    continue;
                }
                return;
            }
            std::lock_guard lock(mutex_);
            if (stopping_) {
                ::close(cfd);
                return;
            }
            auto& conn = connections_.emplace_back(Connection{cfd, {}});
            conn.thread = std::thread([this, cfd] { serve(cfd); });
        }
    }

    void serve(int cfd)
    {
        CarbonIngest ingest(*store_);
        char buf[8192];
        std::uint64_t seen_ok = 0;
        std::uint64_t seen_bad = 0;
        auto publish = [&] {
            accepted_ += ingest.accepted() - seen_ok;
            malformed_ += ingest.malformed() - seen_bad;
            seen_ok = ingest.accepted();
            seen_bad = ingest.malformed();
        };
        while (true) {
            const auto n = ::recv(cfd, buf, sizeof buf, 0);
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n <= 0) {
                break;
            }
            ingest.feed(std::string_view(buf, static_cast<std::size_t>(n)));
            publish();
        }
        ingest.close();
        publish();
    }

    SeriesStore* store_;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> accepted_{0};
    std::atomic<std::uint64_t> malformed_{0};
    std::thread acceptor_;
    std::mutex mutex_;
    std::list<Connection> connections_;
};

/// Blocking plaintext-protocol sender.
class CarbonClient {
public:
    CarbonClient(const std::string& host, std::uint16_t port)
    {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const auto service = std::to_string(port);
        if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
            throw Error(ErrorCode::IoError, "resolve " + host + ": " + ::gai_strerror(rc));
        }
        fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) < 0) {
            const auto err = errno;
            ::freeaddrinfo(res);
            if (fd_ >= 0) {
                ::close(fd_);
            }
            throw Error(ErrorCode::IoError, "connect " + host + ":" + service + ": " + std::strerror(err));
        }
        ::freeaddrinfo(res);
    }

    CarbonClient(const CarbonClient&) = delete;
    CarbonClient& operator=(const CarbonClient&) = delete;

    ~CarbonClient()
    {
        if (fd_ >= 0) {
            ::close(fd_);
        }
    }

    void send(const MetricPoint& point) { send_raw(encode_line(point)); }

    /// Writes bytes verbatim (used to exercise the listener with bad input).
    void send_raw(std::string_view data)
    {
        while (!data.empty()) {
            const auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) {
                    continue;
                }
                throw Error(ErrorCode::IoError, std::string("send: ") + std::strerror(errno));
            }
            data.remove_prefix(static_cast<std::size_t>(n));
        }
    }

    void close()
    {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_WR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

} // namespace ingestbench
