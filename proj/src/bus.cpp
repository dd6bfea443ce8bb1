#include "latcast/bus.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace latcast {

namespace {

// A request frame carries at most one payload; a poll response may batch
// many entries, so the recv cap is far above the per-payload limit.
constexpr std::size_t kMaxFrameBytes = 64 * 1024 * 1024;

bool read_exact(int fd, void* buf, std::size_t n) {
  auto* p = static_cast<char*>(buf);
  while (n > 0) {
    ssize_t got = ::read(fd, p, n);
    if (got == 0) return false;  // EOF
    if (got < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += got;
    n -= static_cast<std::size_t>(got);
  }
  return true;
}

bool write_all(int fd, const void* buf, std::size_t n) {
  const auto* p = static_cast<const char*>(buf);
  while (n > 0) {
    ssize_t put = ::write(fd, p, n);
    if (put < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += put;
    n -= static_cast<std::size_t>(put);
  }
  return true;
}

void encode_len(std::uint32_t len, unsigned char out[4]) {
  out[0] = static_cast<unsigned char>(len >> 24);
  out[1] = static_cast<unsigned char>(len >> 16);
  out[2] = static_cast<unsigned char>(len >> 8);
  out[3] = static_cast<unsigned char>(len);
}

std::uint32_t decode_len(const unsigned char in[4]) {
  return (static_cast<std::uint32_t>(in[0]) << 24) |
         (static_cast<std::uint32_t>(in[1]) << 16) |
         (static_cast<std::uint32_t>(in[2]) << 8) |
         static_cast<std::uint32_t>(in[3]);
}

void validate_name(const char* what, const std::string& name) {
  if (name.empty()) throw BusError(std::string(what) + " must not be empty");
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    if (!ok) {
      throw BusError(std::string(what) + " '" + name +
                     "' has characters outside [A-Za-z0-9._-]");
    }
  }
}

}  // namespace

bool send_frame(int fd, std::string_view payload) {
  unsigned char hdr[4];
  encode_len(static_cast<std::uint32_t>(payload.size()), hdr);
  if (!write_all(fd, hdr, 4)) return false;
  return write_all(fd, payload.data(), payload.size());
}

std::optional<std::string> recv_frame(int fd) {
  unsigned char hdr[4];
  if (!read_exact(fd, hdr, 4)) return std::nullopt;
  const std::uint32_t len = decode_len(hdr);
  if (len > kMaxFrameBytes) return std::nullopt;
  std::string body(len, '\0');
  if (len > 0 && !read_exact(fd, body.data(), len)) return std::nullopt;
  return body;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t need;
    std::uint32_t cp;
    if (b0 < 0x80) {
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      need = 1;
      cp = b0 & 0x1Fu;
    } else if ((b0 & 0xF0) == 0xE0) {
      need = 2;
      cp = b0 & 0x0Fu;
    } else if ((b0 & 0xF8) == 0xF0) {
      need = 3;
      cp = b0 & 0x07u;
    } else {
      return false;
    }
    if (i + need + 1 > s.size()) return false;
    for (std::size_t k = 1; k <= need; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (b & 0x3Fu);
    }
    if (need == 1 && cp < 0x80) return false;          // overlong
    if (need == 2 && cp < 0x800) return false;         // overlong
    if (need == 3 && cp < 0x10000) return false;       // overlong
    if (cp > 0x10FFFF) return false;
    if (cp >= 0xD800 && cp <= 0xDFFF) return false;    // surrogate
    i += need + 1;
  }
  return true;
}

// --- TopicLog ----------------------------------------------------------------

TopicLog::TopicLog(std::filesystem::path file) : file_(std::move(file)) {
  // Replay whatever is already on disk, then keep the handle open to append.
  if (std::filesystem::exists(file_)) {
    std::ifstream is(file_, std::ios::binary);
    while (is) {
      unsigned char hdr[4];
      is.read(reinterpret_cast<char*>(hdr), 4);
      if (is.gcount() != 4) break;
      const std::uint32_t len = decode_len(hdr);
      if (len == 0 || len > kMaxPayloadBytes) {
        throw BusError("corrupt topic log: " + file_.string());
      }
      std::string payload(len, '\0');
      is.read(payload.data(), len);
      if (static_cast<std::uint32_t>(is.gcount()) != len) {
        throw BusError("truncated topic log: " + file_.string());
      }
      entries_.push_back(std::move(payload));
    }
  }
  out_ = std::fopen(file_.c_str(), "ab");
  if (out_ == nullptr) {
    throw BusError("cannot open topic log for append: " + file_.string());
  }
}

TopicLog::~TopicLog() {
  if (out_ != nullptr) std::fclose(out_);
}

std::uint64_t TopicLog::append(std::string_view payload) {
  std::unique_lock lock(mutex_);
  unsigned char hdr[4];
  encode_len(static_cast<std::uint32_t>(payload.size()), hdr);
  if (std::fwrite(hdr, 1, 4, out_) != 4 ||
      std::fwrite(payload.data(), 1, payload.size(), out_) != payload.size() ||
      std::fflush(out_) != 0) {
    throw BusError("storage failure appending to " + file_.string());
  }
  entries_.emplace_back(payload);
  return entries_.size() - 1;
}

std::vector<Entry> TopicLog::read(std::uint64_t from, std::size_t max) const {
  std::shared_lock lock(mutex_);
  std::vector<Entry> out;
  if (from >= entries_.size()) return out;
  const std::uint64_t end =
      std::min<std::uint64_t>(entries_.size(), from + max);
  out.reserve(end - from);
  for (std::uint64_t off = from; off < end; ++off) {
    out.push_back({off, entries_[off]});
  }
  return out;
}

std::uint64_t TopicLog::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

// --- Broker ------------------------------------------------------------------

Broker::Broker(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  for (const auto& e : std::filesystem::directory_iterator(dir_)) {
    if (e.path().extension() == ".log") {
      topics_.emplace(e.path().stem().string(),
                      std::make_unique<TopicLog>(e.path()));
    }
  }
}

TopicLog& Broker::topic_or_throw(const std::string& topic) const {
  std::lock_guard lock(topics_mutex_);
  auto it = topics_.find(topic);
  if (it == topics_.end()) throw BusError("unknown topic '" + topic + "'");
  return *it->second;
}

std::uint64_t Broker::publish(const std::string& topic,
                              std::string_view payload) {
  validate_name("topic", topic);
  if (payload.empty()) throw BusError("payload must not be empty");
  if (payload.size() > kMaxPayloadBytes) {
    throw BusError("payload too large: " + std::to_string(payload.size()) +
                   " bytes > " + std::to_string(kMaxPayloadBytes));
  }
  if (!is_valid_utf8(payload)) {
    throw BusError("payload must be valid UTF-8");
  }
  TopicLog* log;
  {
    std::lock_guard lock(topics_mutex_);
    auto it = topics_.find(topic);
    if (it == topics_.end()) {
      it = topics_.emplace(topic, std::make_unique<TopicLog>(
                                      dir_ / (topic + ".log"))).first;
    }
    log = it->second.get();
  }
  return log->append(payload);
}

std::vector<Entry> Broker::poll(const std::string& topic, std::uint64_t from,
                                std::size_t max) const {
  return topic_or_throw(topic).read(from, max);
}

std::filesystem::path Broker::cursor_path(const std::string& topic,
                                          const std::string& group) const {
  return dir_ / (topic + "@" + group + ".cursor");
}

void Broker::commit(const std::string& topic, const std::string& group,
                    std::uint64_t offset) {
  validate_name("group", group);
  const std::uint64_t len = topic_or_throw(topic).size();
  if (offset > len) {
    throw BusError("commit offset " + std::to_string(offset) +
                   " beyond log length " + std::to_string(len));
  }
  nlohmann::json j{{"topic", topic}, {"group", group}, {"committed_offset", offset}};
  std::lock_guard lock(cursor_mutex_);
  const auto path = cursor_path(topic, group);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os << j.dump();
    os.flush();
    if (!os) throw BusError("storage failure writing cursor " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::uint64_t Broker::committed(const std::string& topic,
                                const std::string& group) const {
  validate_name("topic", topic);
  validate_name("group", group);
  std::lock_guard lock(cursor_mutex_);
  std::ifstream is(cursor_path(topic, group), std::ios::binary);
  if (!is) return 0;
  try {
    nlohmann::json j = nlohmann::json::parse(is);
    return j.at("committed_offset").get<std::uint64_t>();
  } catch (const nlohmann::json::exception&) {
    throw BusError("corrupt cursor file for " + topic + "@" + group);
  }
}

std::uint64_t Broker::topic_size(const std::string& topic) const {
  return topic_or_throw(topic).size();
}

// --- BusServer ---------------------------------------------------------------

BusServer::BusServer(Broker& broker, std::uint16_t port) : broker_(broker) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw BusError("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw BusError("cannot bind bus port " + std::to_string(port) + ": " +
                   std::strerror(err));
  }
  if (::listen(listen_fd_, 64) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw BusError("listen() failed");
  }
  socklen_t alen = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &alen);
  port_ = ntohs(addr.sin_port);
}

BusServer::~BusServer() { stop(); }

void BusServer::start() {
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void BusServer::accept_loop() {
  while (true) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;  // listener closed
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(conn_mutex_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void BusServer::serve_connection(int fd) {
  while (true) {
    auto req = recv_frame(fd);
    if (!req) break;
    nlohmann::json resp;
    try {
      nlohmann::json j = nlohmann::json::parse(*req);
      const std::string op = j.at("op").get<std::string>();
      if (op == "publish") {
        const std::uint64_t off = broker_.publish(
            j.at("topic").get<std::string>(),
            j.at("payload").get<std::string>());
        resp = {{"ok", true}, {"offset", off}};
      } else if (op == "poll") {
        const auto entries = broker_.poll(j.at("topic").get<std::string>(),
                                          j.at("from").get<std::uint64_t>(),
                                          j.at("max").get<std::size_t>());
        nlohmann::json arr = nlohmann::json::array();
        std::size_t bytes = 0;
        for (const Entry& e : entries) {
          // Keep the response frame bounded; callers resume from offset+1.
          if (!arr.empty() && bytes + e.payload.size() > 16 * 1024 * 1024) break;
          bytes += e.payload.size();
          arr.push_back({{"offset", e.offset}, {"payload", e.payload}});
        }
        resp = {{"ok", true}, {"entries", std::move(arr)}};
      } else if (op == "commit") {
        broker_.commit(j.at("topic").get<std::string>(),
                       j.at("group").get<std::string>(),
                       j.at("offset").get<std::uint64_t>());
        resp = {{"ok", true}};
      } else if (op == "committed") {
        resp = {{"ok", true},
                {"offset", broker_.committed(j.at("topic").get<std::string>(),
                                             j.at("group").get<std::string>())}};
      } else {
        resp = {{"ok", false}, {"error", "unknown op '" + op + "'"}};
      }
    } catch (const std::exception& e) {
      resp = {{"ok", false}, {"error", e.what()}};
    }
    if (!send_frame(fd, resp.dump())) break;
  }
  ::close(fd);
}

void BusServer::stop() {
  {
    std::lock_guard lock(conn_mutex_);
    if (stopping_) return;
    stopping_ = true;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  {
    std::lock_guard lock(conn_mutex_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& t : conn_threads_) {
    if (t.joinable()) t.join();
  }
}

// --- BusClient ---------------------------------------------------------------

BusClient BusClient::connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0) {
    throw BusError("cannot resolve bus host '" + host + "'");
  }
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) {
    throw BusError("cannot connect to bus at " + host + ":" + service);
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return BusClient(fd);
}

BusClient BusClient::connect_with_backoff(const std::string& host,
                                          std::uint16_t port, int attempts) {
  auto delay = std::chrono::milliseconds(100);
  for (int i = 1;; ++i) {
    try {
      return connect(host, port);
    } catch (const BusError&) {
      if (i >= attempts) throw;
      std::this_thread::sleep_for(delay);
      delay = std::min(delay * 2, std::chrono::milliseconds(3200));
    }
  }
}

BusClient::BusClient(BusClient&& other) noexcept : fd_(other.fd_) {
  other.fd_ = -1;
}

BusClient& BusClient::operator=(BusClient&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

BusClient::~BusClient() {
  if (fd_ >= 0) ::close(fd_);
}

std::string BusClient::request(const std::string& body) {
  if (fd_ < 0) throw BusError("client not connected");
  if (!send_frame(fd_, body)) throw BusError("bus connection lost (send)");
  auto resp = recv_frame(fd_);
  if (!resp) throw BusError("bus connection lost (recv)");
  return *resp;
}

namespace {

nlohmann::json parse_response(const std::string& raw) {
  nlohmann::json j = nlohmann::json::parse(raw);
  if (!j.at("ok").get<bool>()) {
    throw BusError(j.value("error", std::string("unknown bus error")));
  }
  return j;
}

}  // namespace

std::uint64_t BusClient::publish(const std::string& topic,
                                 std::string_view payload) {
  nlohmann::json req{{"op", "publish"},
                     {"topic", topic},
                     {"payload", std::string(payload)}};
  return parse_response(request(req.dump())).at("offset").get<std::uint64_t>();
}

std::vector<Entry> BusClient::poll(const std::string& topic,
                                   std::uint64_t from, std::size_t max) {
  nlohmann::json req{{"op", "poll"}, {"topic", topic}, {"from", from},
                     {"max", max}};
  nlohmann::json j = parse_response(request(req.dump()));
  std::vector<Entry> out;
  for (const auto& e : j.at("entries")) {
    out.push_back({e.at("offset").get<std::uint64_t>(),
                   e.at("payload").get<std::string>()});
  }
  return out;
}

void BusClient::commit(const std::string& topic, const std::string& group,
                       std::uint64_t offset) {
  nlohmann::json req{{"op", "commit"}, {"topic", topic}, {"group", group},
                     {"offset", offset}};
  parse_response(request(req.dump()));
}

std::uint64_t BusClient::committed(const std::string& topic,
                                   const std::string& group) {
  nlohmann::json req{{"op", "committed"}, {"topic", topic}, {"group", group}};
  return parse_response(request(req.dump())).at("offset").get<std::uint64_t>();
}

}  // namespace latcast
