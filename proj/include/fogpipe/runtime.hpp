/**
 * Copyright 2026 The fogpipe Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FOGPIPE_RUNTIME_HPP_
#define FOGPIPE_RUNTIME_HPP_

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fogpipe/cluster.hpp"
#include "fogpipe/common.hpp"
#include "fogpipe/order_ga.hpp"
#include "fogpipe/timing.hpp"
#include "fogpipe/workload.hpp"

namespace fogpipe {

// ---------------------------------------------------------------------------
// Wire protocol: length-prefixed frames, all integers big-endian.
//   frame := length:u32 | type:u8 | payload, length = payload size + 1
// ---------------------------------------------------------------------------

enum class MessageType : std::uint8_t {
  kRegister = 0x01,
  kProfileReq = 0x02,
  kProfileResp = 0x03,
  kAssign = 0x04,
  kTensor = 0x05,
  kDone = 0x06,
  kMetrics = 0x07,
};

constexpr std::uint32_t kMaxFrameBytes = 256u * 1024 * 1024;

struct WireMessage {
  MessageType type = MessageType::kDone;
  std::vector<std::uint8_t> payload;
};

namespace wire {

inline void put_u8(std::vector<std::uint8_t> &out, std::uint8_t v) {
  out.push_back(v);
}
inline void put_u16(std::vector<std::uint8_t> &out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
inline void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put_u64(std::vector<std::uint8_t> &out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t> &buf) : buf_(buf) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    const std::uint8_t *p = take(2);
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
  }
  std::uint32_t u32() {
    const std::uint8_t *p = take(4);
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
  }
  std::uint64_t u64() {
    std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  std::string str(std::size_t len) {
    const std::uint8_t *p = take(len);
    return std::string(reinterpret_cast<const char *>(p), len);
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::uint8_t *take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw ProtocolError("truncated payload");
    const std::uint8_t *p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  const std::vector<std::uint8_t> &buf_;
  std::size_t pos_ = 0;
};

}  // namespace wire

inline std::vector<std::uint8_t> encode_frame(const WireMessage &msg) {
  if (msg.payload.size() + 1 > kMaxFrameBytes) throw ProtocolError("frame too large");
  std::vector<std::uint8_t> out;
  out.reserve(msg.payload.size() + 5);
  wire::put_u32(out, static_cast<std::uint32_t>(msg.payload.size() + 1));
  wire::put_u8(out, static_cast<std::uint8_t>(msg.type));
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

/// Parses one complete frame from the front of `bytes`. Returns the message
/// and the number of bytes consumed.
inline std::pair<WireMessage, std::size_t> decode_frame(
    const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() < 5) throw ProtocolError("short frame header");
  std::uint32_t length = (static_cast<std::uint32_t>(bytes[0]) << 24) |
                         (static_cast<std::uint32_t>(bytes[1]) << 16) |
                         (static_cast<std::uint32_t>(bytes[2]) << 8) | bytes[3];
  if (length == 0 || length > kMaxFrameBytes) throw ProtocolError("bad frame length");
  if (bytes.size() < 4u + length) throw ProtocolError("truncated frame");
  std::uint8_t type = bytes[4];
  if (type < 0x01 || type > 0x07) throw ProtocolError("unknown message type");
  WireMessage msg;
  msg.type = static_cast<MessageType>(type);
  msg.payload.assign(bytes.begin() + 5, bytes.begin() + 4 + length);
  return {std::move(msg), 4u + length};
}

// Typed payloads.

struct RegisterMsg {
  std::uint32_t device_id = 0;
  std::string name;
};

struct ProfiledLayer {
  std::uint32_t layer_id = 0;
  std::uint64_t duration_ns = 0;
};

struct ProfileReqMsg {
  std::uint16_t reps = 1;
  std::vector<ProfiledLayer> layers;
};

struct ProfileRespMsg {
  std::vector<ProfiledLayer> layers;  // duration_ns carries the measured mean
};

struct AssignMsg {
  std::vector<ProfiledLayer> layers;  // stage layers with emulated durations
  std::uint32_t b_mu = 1;
  std::uint64_t cut_output_bytes = 0;  // per-sample output of the stage's last layer
  std::string downstream;              // host:port, empty for the sink
  bool logical_transfer = false;
};

struct TensorMsg {
  std::uint32_t batch_index = 0;
  std::uint64_t logical_bytes = 0;
  std::uint64_t physical_bytes = 0;  // filler actually carried in the frame
};

struct MetricsMsg {
  std::uint64_t batches = 0;
  std::uint64_t busy_ns = 0;
  std::uint64_t wall_ns = 0;  // first to last batch completion
};

inline WireMessage encode_register(const RegisterMsg &m) {
  WireMessage msg;
  msg.type = MessageType::kRegister;
  wire::put_u32(msg.payload, m.device_id);
  msg.payload.insert(msg.payload.end(), m.name.begin(), m.name.end());
  return msg;
}

inline RegisterMsg decode_register(const WireMessage &msg) {
  wire::Reader r(msg.payload);
  RegisterMsg m;
  m.device_id = r.u32();
  m.name = r.str(r.remaining());
  return m;
}

inline WireMessage encode_profile_req(const ProfileReqMsg &m) {
  WireMessage msg;
  msg.type = MessageType::kProfileReq;
  wire::put_u16(msg.payload, m.reps);
  wire::put_u16(msg.payload, static_cast<std::uint16_t>(m.layers.size()));
  for (const auto &l : m.layers) {
    wire::put_u32(msg.payload, l.layer_id);
    wire::put_u64(msg.payload, l.duration_ns);
  }
  return msg;
}

inline ProfileReqMsg decode_profile_req(const WireMessage &msg) {
  wire::Reader r(msg.payload);
  ProfileReqMsg m;
  m.reps = r.u16();
  std::uint16_t count = r.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    ProfiledLayer l;
    l.layer_id = r.u32();
    l.duration_ns = r.u64();
    m.layers.push_back(l);
  }
  return m;
}

inline WireMessage encode_profile_resp(const ProfileRespMsg &m) {
  WireMessage msg;
  msg.type = MessageType::kProfileResp;
  wire::put_u16(msg.payload, static_cast<std::uint16_t>(m.layers.size()));
  for (const auto &l : m.layers) {
    wire::put_u32(msg.payload, l.layer_id);
    wire::put_u64(msg.payload, l.duration_ns);
  }
  return msg;
}

inline ProfileRespMsg decode_profile_resp(const WireMessage &msg) {
  wire::Reader r(msg.payload);
  ProfileRespMsg m;
  std::uint16_t count = r.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    ProfiledLayer l;
    l.layer_id = r.u32();
    l.duration_ns = r.u64();
    m.layers.push_back(l);
  }
  return m;
}

inline WireMessage encode_assign(const AssignMsg &m) {
  WireMessage msg;
  msg.type = MessageType::kAssign;
  wire::put_u16(msg.payload, static_cast<std::uint16_t>(m.layers.size()));
  for (const auto &l : m.layers) {
    wire::put_u32(msg.payload, l.layer_id);
    wire::put_u64(msg.payload, l.duration_ns);
  }
  wire::put_u32(msg.payload, m.b_mu);
  wire::put_u64(msg.payload, m.cut_output_bytes);
  wire::put_u16(msg.payload, static_cast<std::uint16_t>(m.downstream.size()));
  msg.payload.insert(msg.payload.end(), m.downstream.begin(), m.downstream.end());
  wire::put_u8(msg.payload, m.logical_transfer ? 1 : 0);
  return msg;
}

inline AssignMsg decode_assign(const WireMessage &msg) {
  wire::Reader r(msg.payload);
  AssignMsg m;
  std::uint16_t count = r.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    ProfiledLayer l;
    l.layer_id = r.u32();
    l.duration_ns = r.u64();
    m.layers.push_back(l);
  }
  m.b_mu = r.u32();
  m.cut_output_bytes = r.u64();
  std::uint16_t ep_len = r.u16();
  m.downstream = r.str(ep_len);
  m.logical_transfer = r.u8() != 0;
  return m;
}

inline WireMessage encode_tensor(const TensorMsg &m) {
  WireMessage msg;
  msg.type = MessageType::kTensor;
  wire::put_u32(msg.payload, m.batch_index);
  wire::put_u64(msg.payload, m.logical_bytes);
  msg.payload.resize(msg.payload.size() + m.physical_bytes, 0);
  return msg;
}

inline TensorMsg decode_tensor(const WireMessage &msg) {
  wire::Reader r(msg.payload);
  TensorMsg m;
  m.batch_index = r.u32();
  m.logical_bytes = r.u64();
  m.physical_bytes = r.remaining();
  return m;
}

inline WireMessage encode_metrics(const MetricsMsg &m) {
  WireMessage msg;
  msg.type = MessageType::kMetrics;
  wire::put_u64(msg.payload, m.batches);
  wire::put_u64(msg.payload, m.busy_ns);
  wire::put_u64(msg.payload, m.wall_ns);
  return msg;
}

inline MetricsMsg decode_metrics(const WireMessage &msg) {
  wire::Reader r(msg.payload);
  MetricsMsg m;
  m.batches = r.u64();
  m.busy_ns = r.u64();
  m.wall_ns = r.u64();
  return m;
}

// ---------------------------------------------------------------------------
// Sockets
// ---------------------------------------------------------------------------

namespace net {

inline std::pair<std::string, std::uint16_t> split_endpoint(const std::string &ep) {
  auto colon = ep.rfind(':');
  if (colon == std::string::npos || colon + 1 >= ep.size()) {
    throw Error("bad endpoint (want host:port): " + ep);
  }
  return {ep.substr(0, colon),
          static_cast<std::uint16_t>(std::stoi(ep.substr(colon + 1)))};
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket &&other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket &operator=(Socket &&other) noexcept {
    if (this != &other) {
      close_fd();
      fd_ = other.fd_;
      other.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket &) = delete;
  Socket &operator=(const Socket &) = delete;
  ~Socket() { close_fd(); }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  static Socket connect_to(const std::string &host, std::uint16_t port,
                           double timeout_s) {
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration<double>(timeout_s);
    std::string port_str = std::to_string(port);
    while (true) {
      addrinfo hints{};
      hints.ai_family = AF_INET;
      hints.ai_socktype = SOCK_STREAM;
      addrinfo *res = nullptr;
      if (getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) == 0) {
        for (addrinfo *ai = res; ai; ai = ai->ai_next) {
          int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
          if (fd < 0) continue;
          if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
            freeaddrinfo(res);
            Socket sock(fd);
            sock.set_nodelay();
            return sock;
          }
          ::close(fd);
        }
        freeaddrinfo(res);
      }
      if (std::chrono::steady_clock::now() >= deadline) {
        throw ProtocolError("cannot connect to " + host + ":" + port_str);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }

  void send_all(const std::uint8_t *data, std::size_t n) {
    std::size_t sent = 0;
    while (sent < n) {
      ssize_t r = ::send(fd_, data + sent, n - sent, MSG_NOSIGNAL);
      if (r <= 0) throw ProtocolError("send failed");
      sent += static_cast<std::size_t>(r);
    }
  }

  /// Reads exactly n bytes. Returns false on a clean EOF before the first
  /// byte; throws on timeout, error, or mid-buffer EOF.
  bool recv_exact(std::uint8_t *data, std::size_t n, double timeout_s,
                  const std::string &who) {
    std::size_t got = 0;
    while (got < n) {
      pollfd pfd{fd_, POLLIN, 0};
      int pr = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000));
      if (pr == 0) throw ProtocolError("timeout waiting for " + who);
      if (pr < 0) throw ProtocolError("poll failed for " + who);
      ssize_t r = ::recv(fd_, data + got, n - got, 0);
      if (r == 0) {
        if (got == 0) return false;
        throw ProtocolError("connection reset mid-frame from " + who);
      }
      if (r < 0) throw ProtocolError("recv failed from " + who);
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

 private:
  void set_nodelay() {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

class Listener {
 public:
  Listener(const std::string &host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ProtocolError("cannot create listen socket");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd_);
      throw Error("bad listen address: " + host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) != 0 ||
        ::listen(fd_, 16) != 0) {
      ::close(fd_);
      throw ProtocolError("cannot bind/listen on " + host + ":" +
                          std::to_string(port));
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr *>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }
  ~Listener() { close(); }
  Listener(const Listener &) = delete;
  Listener &operator=(const Listener &) = delete;

  std::uint16_t port() const { return port_; }

  std::optional<Socket> accept_within(int timeout_ms) {
    pollfd pfd{fd_, POLLIN, 0};
    int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr <= 0) return std::nullopt;
    int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) return std::nullopt;
    return Socket(cfd);
  }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

inline void write_frame(Socket &sock, const WireMessage &msg) {
  auto bytes = encode_frame(msg);
  sock.send_all(bytes.data(), bytes.size());
}

inline std::optional<WireMessage> read_frame(Socket &sock, double timeout_s,
                                             const std::string &who) {
  std::uint8_t header[4];
  if (!sock.recv_exact(header, 4, timeout_s, who)) return std::nullopt;
  std::uint32_t length = (static_cast<std::uint32_t>(header[0]) << 24) |
                         (static_cast<std::uint32_t>(header[1]) << 16) |
                         (static_cast<std::uint32_t>(header[2]) << 8) | header[3];
  if (length == 0 || length > kMaxFrameBytes) {
    throw ProtocolError("bad frame length from " + who);
  }
  std::vector<std::uint8_t> body(length);
  if (!sock.recv_exact(body.data(), length, timeout_s, who)) {
    throw ProtocolError("connection reset mid-frame from " + who);
  }
  if (body[0] < 0x01 || body[0] > 0x07) {
    throw ProtocolError("unknown message type from " + who);
  }
  WireMessage msg;
  msg.type = static_cast<MessageType>(body[0]);
  msg.payload.assign(body.begin() + 1, body.end());
  return msg;
}

}  // namespace net

// ---------------------------------------------------------------------------
// Compute emulation
// ---------------------------------------------------------------------------

/// Calibrated spin-wait standing in for CPU-bound layer compute. Spinning on
/// the monotonic clock holds the requested duration far better than sleeping,
/// which undershoots under timer coarsening.
class ComputeEmulator {
 public:
  ComputeEmulator() {
    // Warmup: page in the clock path and give the scheduler a settled start.
    auto t0 = std::chrono::steady_clock::now();
    while (std::chrono::steady_clock::now() - t0 <
           std::chrono::milliseconds(2)) {
    }
  }

  /// Busy-waits for the requested duration; returns the measured duration.
  std::uint64_t run_ns(std::uint64_t duration_ns) const {
    auto start = std::chrono::steady_clock::now();
    auto end = start + std::chrono::nanoseconds(duration_ns);
    while (std::chrono::steady_clock::now() < end) {
    }
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::steady_clock::now() - start)
            .count());
  }
};

// ---------------------------------------------------------------------------
// Worker
// ---------------------------------------------------------------------------

struct WorkerOptions {
  std::string listen_host = "127.0.0.1";
  std::uint16_t listen_port = 0;  // 0 picks an ephemeral port
  std::uint32_t device_id = 0;
  std::string name = "worker";
  double timeout_s = 120.0;
  /// Called with the bound port once the worker is accepting connections.
  std::function<void(std::uint16_t)> on_listening;
  bool verbose = false;
};

namespace detail {

struct BatchQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::optional<TensorMsg>> items;  // nullopt = end of stream

  void push(std::optional<TensorMsg> item) {
    {
      std::lock_guard<std::mutex> lock(mu);
      items.push_back(std::move(item));
    }
    cv.notify_one();
  }
  std::optional<TensorMsg> pop() {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return !items.empty(); });
    auto item = std::move(items.front());
    items.pop_front();
    return item;
  }
};

}  // namespace detail

/// Serves one scheduling run: registers with whoever connects, answers the
/// profiling request by executing calibrated spin-waits, and on assignment
/// relays micro-batches -- receiving batch m+1 while computing batch m --
/// until the DONE marker drains through. Returns after reporting METRICS.
inline void worker_run(const WorkerOptions &options) {
  net::Listener listener(options.listen_host, options.listen_port);
  if (options.on_listening) options.on_listening(listener.port());
  ComputeEmulator emulator;

  std::atomic<bool> serving_done{false};
  detail::BatchQueue queue;

  struct StageState {
    AssignMsg assign;
    std::optional<net::Socket> downstream;
    MetricsMsg metrics;
  };
  StageState stage;
  std::mutex done_mu;
  std::condition_variable done_cv;
  bool compute_finished = false;

  auto compute_loop = [&] {
    std::uint64_t first_ns = 0, last_ns = 0, busy_ns = 0, batches = 0;
    auto origin = std::chrono::steady_clock::now();
    auto now_ns = [&] {
      return static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(
              std::chrono::steady_clock::now() - origin)
              .count());
    };
    while (true) {
      auto item = queue.pop();
      if (!item) break;
      for (const auto &layer : stage.assign.layers) {
        busy_ns += emulator.run_ns(layer.duration_ns);
      }
      ++batches;
      if (batches == 1) first_ns = now_ns();
      last_ns = now_ns();
      if (stage.downstream) {
        TensorMsg out;
        out.batch_index = item->batch_index;
        out.logical_bytes =
            stage.assign.cut_output_bytes * stage.assign.b_mu;
        out.physical_bytes = stage.assign.logical_transfer ? 0 : out.logical_bytes;
        net::write_frame(*stage.downstream, encode_tensor(out));
      }
    }
    if (stage.downstream) {
      net::write_frame(*stage.downstream, WireMessage{MessageType::kDone, {}});
    }
    stage.metrics.batches = batches;
    stage.metrics.busy_ns = busy_ns;
    stage.metrics.wall_ns = batches > 0 ? last_ns - first_ns : 0;
    {
      std::lock_guard<std::mutex> lock(done_mu);
      compute_finished = true;
    }
    done_cv.notify_all();
  };

  std::thread compute_thread;

  auto control_session = [&](net::Socket sock) {
    struct DoneGuard {
      std::atomic<bool> &flag;
      ~DoneGuard() { flag.store(true); }
    } guard{serving_done};
    try {
      while (true) {
        auto msg = net::read_frame(sock, options.timeout_s, "manager");
        if (!msg) break;  // manager went away; stop serving
        switch (msg->type) {
          case MessageType::kProfileReq: {
            ProfileReqMsg req = decode_profile_req(*msg);
            ProfileRespMsg resp;
            for (const auto &layer : req.layers) {
              std::uint64_t total = 0;
              for (std::uint16_t r = 0; r < req.reps; ++r) {
                total += emulator.run_ns(layer.duration_ns);
              }
              resp.layers.push_back(
                  {layer.layer_id, total / std::max<std::uint16_t>(req.reps, 1)});
            }
            net::write_frame(sock, encode_profile_resp(resp));
            break;
          }
          case MessageType::kAssign: {
            stage.assign = decode_assign(*msg);
            if (!stage.assign.downstream.empty()) {
              auto [host, port] = net::split_endpoint(stage.assign.downstream);
              stage.downstream =
                  net::Socket::connect_to(host, port, options.timeout_s);
              // The peer registers on every accepted connection; drain it.
              net::read_frame(*stage.downstream, options.timeout_s, "downstream");
            }
            compute_thread = std::thread(compute_loop);
            net::write_frame(sock, WireMessage{MessageType::kAssign, {}});  // ack
            {
              std::unique_lock<std::mutex> lock(done_mu);
              done_cv.wait(lock, [&] { return compute_finished; });
            }
            net::write_frame(sock, encode_metrics(stage.metrics));
            return;
          }
          case MessageType::kDone: {
            // Not part of the pipeline this run; report empty metrics.
            net::write_frame(sock, encode_metrics(MetricsMsg{}));
            return;
          }
          default:
            throw ProtocolError("unexpected control frame");
        }
      }
    } catch (const std::exception &e) {
      std::cerr << "[worker " << options.name << "] control fault: " << e.what()
                << "\n";
      queue.push(std::nullopt);
    }
  };

  auto data_session = [&](net::Socket sock) {
    try {
      while (true) {
        auto msg = net::read_frame(sock, options.timeout_s, "upstream");
        if (!msg || msg->type == MessageType::kDone) {
          queue.push(std::nullopt);
          return;
        }
        if (msg->type != MessageType::kTensor) {
          throw ProtocolError("unexpected data frame");
        }
        queue.push(decode_tensor(*msg));
      }
    } catch (const std::exception &e) {
      std::cerr << "[worker " << options.name << "] data fault: " << e.what()
                << "\n";
      queue.push(std::nullopt);
    }
  };

  std::thread control_thread;
  std::vector<std::thread> data_threads;
  int sessions = 0;
  RegisterMsg reg{options.device_id, options.name};

  // First accepted connection is the manager's control channel; any later
  // one is upstream data. Registration goes out on every accepted socket.
  while (!serving_done.load()) {
    auto sock = listener.accept_within(100);
    if (!sock) continue;
    net::write_frame(*sock, encode_register(reg));
    if (sessions == 0) {
      control_thread = std::thread(control_session, std::move(*sock));
    } else {
      data_threads.emplace_back(data_session, std::move(*sock));
    }
    ++sessions;
  }

  if (control_thread.joinable()) control_thread.join();
  for (auto &t : data_threads) t.join();
  if (compute_thread.joinable()) compute_thread.join();
  listener.close();
}

// ---------------------------------------------------------------------------
// Manager
// ---------------------------------------------------------------------------

struct ManagerOptions {
  std::vector<std::string> worker_endpoints;
  int b_mu = 1;
  int n_microbatches = 20;
  int profile_reps = 3;
  double timeout_s = 10.0;
  GaParams ga;
  bool logical_transfer = false;
  bool verbose = false;
};

struct WorkerReport {
  std::uint32_t device_id = 0;
  std::string endpoint;
  MetricsMsg metrics;
};

struct ManagerReport {
  ExecutionOrder order;
  Schedule schedule;
  ProfileMatrix measured_profiles;
  double predicted_samples_per_s = 0.0;
  double measured_samples_per_s = 0.0;
  std::uint64_t batches_injected = 0;
  std::uint64_t batches_at_sink = 0;
  std::vector<WorkerReport> workers;
};

/// The four phases in order: collect registrations, profile every worker to
/// build the measured time matrix, schedule on the measured profiles, then
/// assign stages and stream micro-batches, collecting metrics at the end.
/// Reports measured and predicted throughput side by side.
inline ManagerReport manager_run(const WorkloadInstance &instance,
                                 const ClusterSpec &cluster,
                                 const ManagerOptions &options) {
  if (options.worker_endpoints.empty()) throw Error("no devices registered");

  struct Peer {
    net::Socket control;
    std::string endpoint;
    std::uint32_t device_id = 0;
  };

  // Phase 1: registration.
  std::vector<Peer> peers;
  for (const auto &ep : options.worker_endpoints) {
    auto [host, port] = net::split_endpoint(ep);
    Peer peer;
    peer.endpoint = ep;
    peer.control = net::Socket::connect_to(host, port, options.timeout_s);
    auto msg = net::read_frame(peer.control, options.timeout_s, ep);
    if (!msg || msg->type != MessageType::kRegister) {
      throw ProtocolError("registration failed for worker " + ep);
    }
    peer.device_id = decode_register(*msg).device_id;
    if (!cluster.has_device(static_cast<DeviceId>(peer.device_id))) {
      throw ProtocolError("worker " + ep + " registered unknown device " +
                          std::to_string(peer.device_id));
    }
    for (const auto &existing : peers) {
      if (existing.device_id == peer.device_id) {
        throw ProtocolError("duplicate registration for device " +
                            std::to_string(peer.device_id));
      }
    }
    peers.push_back(std::move(peer));
  }
  if (peers.empty()) throw Error("no devices registered");

  // Phase 2: profiling. Requested durations come from the instance profile;
  // the measured means become the matrix the scheduler consumes.
  ExecutionOrder canonical = canonical_topo_order(instance.graph);
  ProfileMatrix measured;
  for (auto &peer : peers) {
    ProfileReqMsg req;
    req.reps = static_cast<std::uint16_t>(options.profile_reps);
    for (LayerId layer : canonical.ids) {
      double seconds =
          instance.profiles.at(layer, static_cast<DeviceId>(peer.device_id));
      req.layers.push_back({static_cast<std::uint32_t>(layer),
                            static_cast<std::uint64_t>(seconds * 1e9)});
    }
    net::write_frame(peer.control, encode_profile_req(req));
    auto msg = net::read_frame(peer.control, options.timeout_s, peer.endpoint);
    if (!msg || msg->type != MessageType::kProfileResp) {
      throw ProtocolError("profiling failed for worker " + peer.endpoint);
    }
    for (const auto &l : decode_profile_resp(*msg).layers) {
      measured.set(static_cast<LayerId>(l.layer_id),
                   static_cast<DeviceId>(peer.device_id),
                   static_cast<double>(l.duration_ns) * 1e-9);
    }
  }

  WorkloadInstance measured_instance;
  measured_instance.graph = instance.graph;
  measured_instance.profiles = measured;
  measured_instance.cluster_ref = instance.cluster_ref;

  // Phase 3: scheduling over the registered devices only.
  ClusterSpec effective = cluster;
  effective.pipeline_sequence.clear();
  for (DeviceId id : cluster.pipeline_sequence) {
    for (const auto &peer : peers) {
      if (static_cast<DeviceId>(peer.device_id) == id) {
        effective.pipeline_sequence.push_back(id);
      }
    }
  }
  if (effective.pipeline_sequence.empty()) {
    throw Error("no registered device appears in the pipeline sequence");
  }
  GaResult search = run_ga_dphds(measured_instance, effective, options.b_mu,
                                 options.ga);

  ManagerReport report;
  report.order = search.best.order;
  report.schedule = search.best.schedule;
  report.measured_profiles = measured;
  report.predicted_samples_per_s = search.best_eval.throughput_samples_per_s;

  // Phase 4: assignment, streaming, metrics.
  auto peer_of = [&](DeviceId id) -> Peer & {
    for (auto &peer : peers) {
      if (static_cast<DeviceId>(peer.device_id) == id) return peer;
    }
    throw Error("device " + std::to_string(id) + " has no worker");
  };

  const auto &stages = report.schedule.stages;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    AssignMsg assign;
    for (int pos = stages[k].start_idx; pos <= stages[k].end_idx; ++pos) {
      LayerId layer = report.order.ids[static_cast<std::size_t>(pos)];
      double seconds = measured.at(layer, stages[k].device_id);
      assign.layers.push_back({static_cast<std::uint32_t>(layer),
                               static_cast<std::uint64_t>(seconds * 1e9)});
    }
    assign.b_mu = static_cast<std::uint32_t>(options.b_mu);
    assign.cut_output_bytes = static_cast<std::uint64_t>(
        instance.graph.layer(report.order.ids[static_cast<std::size_t>(stages[k].end_idx)])
            .output_bytes);
    assign.downstream =
        k + 1 < stages.size() ? peer_of(stages[k + 1].device_id).endpoint : "";
    assign.logical_transfer = options.logical_transfer;
    net::write_frame(peer_of(stages[k].device_id).control, encode_assign(assign));
  }
  // All acks before any tensor flows.
  for (const auto &st : stages) {
    auto &peer = peer_of(st.device_id);
    auto ack = net::read_frame(peer.control, options.timeout_s, peer.endpoint);
    if (!ack || ack->type != MessageType::kAssign) {
      throw ProtocolError("assignment not acknowledged by " + peer.endpoint);
    }
  }
  // Release unused workers.
  for (auto &peer : peers) {
    bool used = false;
    for (const auto &st : stages) {
      if (st.device_id == static_cast<DeviceId>(peer.device_id)) used = true;
    }
    if (!used) net::write_frame(peer.control, WireMessage{MessageType::kDone, {}});
  }

  {
    auto &head = peer_of(stages.front().device_id);
    auto [host, port] = net::split_endpoint(head.endpoint);
    net::Socket data = net::Socket::connect_to(host, port, options.timeout_s);
    net::read_frame(data, options.timeout_s, head.endpoint);  // its REGISTER
    const LayerNode &entry =
        instance.graph.layer(report.order.ids.front());
    for (int m = 0; m < options.n_microbatches; ++m) {
      TensorMsg tensor;
      tensor.batch_index = static_cast<std::uint32_t>(m);
      tensor.logical_bytes = static_cast<std::uint64_t>(entry.input_bytes) *
                             static_cast<std::uint64_t>(options.b_mu);
      tensor.physical_bytes =
          options.logical_transfer ? 0 : tensor.logical_bytes;
      net::write_frame(data, encode_tensor(tensor));
    }
    net::write_frame(data, WireMessage{MessageType::kDone, {}});
    report.batches_injected = static_cast<std::uint64_t>(options.n_microbatches);
  }

  // Metrics arrive once each stage drains; allow for the whole pipeline
  // makespan on top of the base timeout.
  double expected_makespan =
      search.best_eval.t_overall *
      static_cast<double>(options.n_microbatches + static_cast<int>(stages.size()));
  double drain_timeout = options.timeout_s + 3.0 * expected_makespan;
  for (auto &peer : peers) {
    auto msg = net::read_frame(peer.control, drain_timeout, peer.endpoint);
    if (!msg || msg->type != MessageType::kMetrics) {
      throw ProtocolError("metrics missing from " + peer.endpoint);
    }
    report.workers.push_back({peer.device_id, peer.endpoint, decode_metrics(*msg)});
  }

  DeviceId sink = stages.back().device_id;
  for (const auto &w : report.workers) {
    if (static_cast<DeviceId>(w.device_id) == sink) {
      report.batches_at_sink = w.metrics.batches;
      if (w.metrics.batches >= 2 && w.metrics.wall_ns > 0) {
        report.measured_samples_per_s =
            static_cast<double>(w.metrics.batches - 1) *
            static_cast<double>(options.b_mu) /
            (static_cast<double>(w.metrics.wall_ns) * 1e-9);
      }
    }
  }
  return report;
}

}  // namespace fogpipe

#endif  // FOGPIPE_RUNTIME_HPP_
