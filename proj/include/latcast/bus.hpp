#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

// Minimal persistent pub/sub log: producers append to topics, consumers poll
// by offset and commit cursors (at-least-once). One append-only file per
// topic; replay is a re-read. The TCP front end speaks frames of a 4-byte
// big-endian length prefix followed by a UTF-8 JSON body, one frame per
// request and per response:
//   {"op":"publish","topic":t,"payload":s}        -> {"ok":true,"offset":n}
//   {"op":"poll","topic":t,"from":n,"max":m}      -> {"ok":true,"entries":[...]}
//   {"op":"commit","topic":t,"group":g,"offset":n} -> {"ok":true}
//   {"op":"committed","topic":t,"group":g}        -> {"ok":true,"offset":n}
// Errors come back as {"ok":false,"error":reason}.

namespace latcast {

inline constexpr std::size_t kMaxPayloadBytes = 64 * 1024;
inline constexpr std::uint16_t kDefaultBusPort = 9701;

struct BusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Entry {
  std::uint64_t offset = 0;
  std::string payload;
};

// Append-only log of one topic, backed by a file with the same framing as
// the wire. Offsets are contiguous from 0 and entries immutable.
class TopicLog {
 public:
  explicit TopicLog(std::filesystem::path file);
  ~TopicLog();
  TopicLog(const TopicLog&) = delete;
  TopicLog& operator=(const TopicLog&) = delete;

  // Durable (flushed) before returning the assigned offset.
  std::uint64_t append(std::string_view payload);
  std::vector<Entry> read(std::uint64_t from, std::size_t max) const;
  std::uint64_t size() const;

 private:
  std::filesystem::path file_;
  std::FILE* out_ = nullptr;
  std::vector<std::string> entries_;
  mutable std::shared_mutex mutex_;
};

class Broker {
 public:
  // Creates `dir` if needed and reopens every existing topic log in it.
  explicit Broker(std::filesystem::path dir);

  // Creates the topic on first use. Rejects empty payloads, payloads over
  // kMaxPayloadBytes and payloads that are not valid UTF-8 (the wire protocol
  // is JSON, so the bus carries UTF-8 text).
  std::uint64_t publish(const std::string& topic, std::string_view payload);

  // In-order entries with offset >= from, at most max; empty when caught up.
  // Unknown topics are an error.
  std::vector<Entry> poll(const std::string& topic, std::uint64_t from,
                          std::size_t max) const;

  // Persists the consumer-group cursor (write-temp + rename). offset beyond
  // the log is an error. Restarted consumers resume from committed().
  void commit(const std::string& topic, const std::string& group,
              std::uint64_t offset);
  std::uint64_t committed(const std::string& topic,
                          const std::string& group) const;

  std::uint64_t topic_size(const std::string& topic) const;

 private:
  TopicLog& topic_or_throw(const std::string& topic) const;
  std::filesystem::path cursor_path(const std::string& topic,
                                    const std::string& group) const;

  std::filesystem::path dir_;
  mutable std::mutex topics_mutex_;
  std::map<std::string, std::unique_ptr<TopicLog>> topics_;
  mutable std::mutex cursor_mutex_;
};

// Blocking TCP front end; one thread per connection.
class BusServer {
 public:
  // Binds immediately; port 0 asks the kernel for a free port. Throws
  // BusError when the port is taken.
  BusServer(Broker& broker, std::uint16_t port);
  ~BusServer();

  void start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void accept_loop();
  void serve_connection(int fd);

  Broker& broker_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
  bool stopping_ = false;
};

class BusClient {
 public:
  // One connection attempt; see connect_with_backoff for the retrying form.
  static BusClient connect(const std::string& host, std::uint16_t port);

  // Capped exponential backoff (0.1s doubling to 3.2s) across `attempts`
  // tries, then throws BusError.
  static BusClient connect_with_backoff(const std::string& host,
                                        std::uint16_t port, int attempts);

  BusClient(BusClient&& other) noexcept;
  BusClient& operator=(BusClient&& other) noexcept;
  BusClient(const BusClient&) = delete;
  BusClient& operator=(const BusClient&) = delete;
  ~BusClient();

  std::uint64_t publish(const std::string& topic, std::string_view payload);
  std::vector<Entry> poll(const std::string& topic, std::uint64_t from,
                          std::size_t max);
  void commit(const std::string& topic, const std::string& group,
              std::uint64_t offset);
  std::uint64_t committed(const std::string& topic, const std::string& group);

 private:
  explicit BusClient(int fd) : fd_(fd) {}
  std::string request(const std::string& body);

  int fd_ = -1;
};

// Frame I/O over sockets, shared by server and client.
bool send_frame(int fd, std::string_view payload);
std::optional<std::string> recv_frame(int fd);

bool is_valid_utf8(std::string_view s);

}  // namespace latcast
