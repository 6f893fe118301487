#include "bmschain/exchange.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <deque>
#include <map>
#include <set>

namespace bmschain::exchange {

namespace {

constexpr std::size_t kPrefixSize = 4;

std::string errno_text() { return std::strerror(errno); }

void send_all(int fd, const char *data, std::size_t size) {
  while (size > 0) {
    ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ExchangeError(Errc::ConnectionLost, "send failed: " + errno_text());
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

// Returns bytes read before EOF (less than `size` only on EOF).
std::size_t recv_all(int fd, char *data, std::size_t size) {
  std::size_t got = 0;
  while (got < size) {
    ssize_t n = ::recv(fd, data + got, size - got, 0);
    if (n == 0) break;
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ExchangeError(Errc::ConnectionLost, "recv failed: " + errno_text());
    }
    got += static_cast<std::size_t>(n);
  }
  return got;
}

std::string_view type_name(MessageType type) {
  switch (type) {
    case MessageType::Get: return "get";
    case MessageType::Node: return "node";
    case MessageType::Missing: return "missing";
  }
  return "";
}

}  // namespace

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::HashMismatch: return "HashMismatch";
    case Errc::RemoteMissing: return "RemoteMissing";
    case Errc::ConnectionLost: return "ConnectionLost";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::FrameTooLarge: return "FrameTooLarge";
    case Errc::BindFailed: return "BindFailed";
    case Errc::ConnectFailed: return "ConnectFailed";
  }
  return "Unknown";
}

PeerEndpoint PeerEndpoint::parse(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ExchangeError(Errc::ConnectFailed, "expected host:port, got '" + std::string(text) + "'");
  }
  auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535) {
    throw ExchangeError(Errc::ConnectFailed, "invalid port in '" + std::string(text) + "'");
  }
  return PeerEndpoint{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

std::string PeerEndpoint::to_string() const { return host + ":" + std::to_string(port); }

std::string encode_message(const WireMessage &message) {
  Json j = {{"hash", message.hash.to_string()}, {"type", type_name(message.type)}};
  if (message.type == MessageType::Node) {
    if (!message.node) throw ExchangeError(Errc::ProtocolError, "node message without a node");
    j["node"] = cas::to_json(*message.node);
  }
  return canonical_dump(j);
}

WireMessage decode_message(std::string_view payload) {
  Json j;
  WireMessage m;
  try {
    j = parse_canonical(payload);
    const auto &type = string_field(j, "type");
    m.hash = cas::ObjectHash::parse(string_field(j, "hash"));
    if (type == "get") {
      m.type = MessageType::Get;
    } else if (type == "missing") {
      m.type = MessageType::Missing;
    } else if (type == "node") {
      m.type = MessageType::Node;
    } else {
      throw DecodeError("unknown message type '" + type + "'");
    }
    std::size_t expected_keys = m.type == MessageType::Node ? 3 : 2;
    if (j.size() != expected_keys) throw DecodeError("unexpected message fields");
  } catch (const DecodeError &e) {
    throw ExchangeError(Errc::ProtocolError, e.what());
  }
  if (m.type == MessageType::Node) {
    try {
      m.node = cas::node_from_json(field(j, "node"));
      cas::validate_node(*m.node);
    } catch (const Error &e) {
      throw NodeFetchError(Errc::HashMismatch, m.hash, std::string("undecodable node: ") + e.what());
    }
  }
  return m;
}

Socket &Socket::operator=(Socket &&other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

Socket::~Socket() {
  if (fd_ >= 0) ::close(fd_);
}

void Socket::shutdown() const {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket Socket::connect(const PeerEndpoint &endpoint) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo *result = nullptr;
  auto port = std::to_string(endpoint.port);
  int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &result);
  if (rc != 0) {
    throw ExchangeError(Errc::ConnectFailed, endpoint.to_string() + ": " + gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (auto *ai = result; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(result);
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return s;
    }
    last_error = errno_text();
  }
  ::freeaddrinfo(result);
  throw ExchangeError(Errc::ConnectFailed, endpoint.to_string() + ": " + last_error);
}

void write_frame(const Socket &socket, std::string_view payload) {
  if (payload.size() + kPrefixSize > kMaxFrameSize) {
    throw ExchangeError(Errc::FrameTooLarge, "payload of " + std::to_string(payload.size()) + " bytes");
  }
  std::string frame(kPrefixSize, '\0');
  auto n = static_cast<std::uint32_t>(payload.size());
  frame[0] = static_cast<char>((n >> 24) & 0xff);
  frame[1] = static_cast<char>((n >> 16) & 0xff);
  frame[2] = static_cast<char>((n >> 8) & 0xff);
  frame[3] = static_cast<char>(n & 0xff);
  frame.append(payload);
  send_all(socket.fd(), frame.data(), frame.size());
}

std::optional<std::string> read_frame(const Socket &socket) {
  unsigned char prefix[kPrefixSize];
  std::size_t got = recv_all(socket.fd(), reinterpret_cast<char *>(prefix), kPrefixSize);
  if (got == 0) return std::nullopt;
  if (got < kPrefixSize) throw ExchangeError(Errc::ConnectionLost, "connection closed inside a frame header");
  std::uint32_t n = (std::uint32_t{prefix[0]} << 24) | (std::uint32_t{prefix[1]} << 16) |
                    (std::uint32_t{prefix[2]} << 8) | std::uint32_t{prefix[3]};
  if (std::size_t{n} + kPrefixSize > kMaxFrameSize) {
    throw ExchangeError(Errc::FrameTooLarge, "peer announced a " + std::to_string(n) + "-byte frame");
  }
  std::string payload(n, '\0');
  if (recv_all(socket.fd(), payload.data(), n) < n) {
    throw ExchangeError(Errc::ConnectionLost, "connection closed inside a frame");
  }
  return payload;
}

std::optional<cas::DagNode> StoreSource::find(const cas::ObjectHash &hash) const {
  try {
    return store_.find(hash);
  } catch (const cas::CasError &) {
    return std::nullopt;
  }
}

Server::Server(std::shared_ptr<const NodeSource> source, const PeerEndpoint &bind)
    : source_(std::move(source)) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo *result = nullptr;
  auto port = std::to_string(bind.port);
  const char *host = bind.host.empty() ? nullptr : bind.host.c_str();
  int rc = ::getaddrinfo(host, port.c_str(), &hints, &result);
  if (rc != 0) throw ExchangeError(Errc::BindFailed, bind.to_string() + ": " + gai_strerror(rc));
  std::string last_error = "no addresses";
  for (auto *ai = result; ai != nullptr && !listener_.valid(); ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.fd(), 64) == 0) {
      listener_ = std::move(s);
    } else {
      last_error = errno_text();
    }
  }
  ::freeaddrinfo(result);
  if (!listener_.valid()) throw ExchangeError(Errc::BindFailed, bind.to_string() + ": " + last_error);

  sockaddr_storage addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(listener_.fd(), reinterpret_cast<sockaddr *>(&addr), &len);
  port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6 *>(&addr)->sin6_port)
                                     : ntohs(reinterpret_cast<sockaddr_in *>(&addr)->sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

Server::~Server() { stop(); }

void Server::stop() {
  std::call_once(stop_once_, [this] {
    stopping_.store(true);
    listener_.shutdown();
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<Connection> connections;
    {
      std::lock_guard lock(mu_);
      connections.swap(connections_);
    }
    for (auto &c : connections) c.socket->shutdown();
    for (auto &c : connections) {
      if (c.thread.joinable()) c.thread.join();
    }
  });
}

void Server::wait() {
  while (!stopping_.load()) {
    pollfd p{listener_.fd(), 0, 0};
    ::poll(&p, 1, 200);
  }
}

void Server::reap_finished() {
  std::lock_guard lock(mu_);
  for (auto it = connections_.begin(); it != connections_.end();) {
    if (it->done->load()) {
      if (it->thread.joinable()) it->thread.join();
      it = connections_.erase(it);
    } else {
      ++it;
    }
  }
}

void Server::accept_loop() {
  while (!stopping_.load()) {
    int fd = ::accept(listener_.fd(), nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;  // listener shut down
    }
    reap_finished();
    auto socket = std::make_shared<Socket>(fd);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(mu_);
    if (stopping_.load()) break;
    connections_.push_back(Connection{socket, std::thread([this, socket, done] {
                                        try {
                                          handle(*socket);
                                        } catch (const std::exception &) {
                                          // a broken connection only ends itself
                                        }
                                        done->store(true);
                                      }),
                                      done});
  }
}

void Server::handle(const Socket &socket) const {
  while (auto payload = read_frame(socket)) {
    WireMessage request = decode_message(*payload);
    if (request.type != MessageType::Get) {
      throw ExchangeError(Errc::ProtocolError, "server only accepts get requests");
    }
    auto node = source_->find(request.hash);
    WireMessage response =
        node ? WireMessage::with_node(request.hash, std::move(*node)) : WireMessage::missing(request.hash);
    write_frame(socket, encode_message(response));
  }
}

std::unique_ptr<Server> serve(const cas::ObjectStore &store, const PeerEndpoint &bind) {
  return std::make_unique<Server>(std::make_shared<StoreSource>(store), bind);
}

std::size_t fetch_dag(const PeerEndpoint &peer, const cas::ObjectHash &root, cas::ObjectStore &local,
                      const FetchOptions &options) {
  const std::size_t window = std::max<std::size_t>(1, options.window);
  std::optional<Socket> socket;
  std::map<cas::ObjectHash, cas::DagNode> staged;
  std::vector<cas::ObjectHash> staged_order;
  std::set<cas::ObjectHash> visited;

  auto request_all = [&](const std::vector<cas::ObjectHash> &wanted) {
    if (wanted.empty()) return;
    if (!socket) socket = Socket::connect(peer);
    std::deque<cas::ObjectHash> in_flight;
    std::size_t next = 0;
    while (next < wanted.size() || !in_flight.empty()) {
      while (next < wanted.size() && in_flight.size() < window) {
        write_frame(*socket, encode_message(WireMessage::get(wanted[next])));
        in_flight.push_back(wanted[next++]);
      }
      auto payload = read_frame(*socket);
      const cas::ObjectHash expected = in_flight.front();
      in_flight.pop_front();
      if (!payload) {
        throw ExchangeError(Errc::ConnectionLost,
                            "peer closed the connection while " + expected.to_string() + " was pending");
      }
      WireMessage response;
      try {
        response = decode_message(*payload);
      } catch (const NodeFetchError &e) {
        throw NodeFetchError(Errc::HashMismatch, expected, e.what());
      }
      if (response.hash != expected) {
        throw ExchangeError(Errc::ProtocolError, "response for " + response.hash.to_string() +
                                                     " while expecting " + expected.to_string());
      }
      if (response.type == MessageType::Missing) {
        throw NodeFetchError(Errc::RemoteMissing, expected, "peer does not have this node");
      }
      if (response.type != MessageType::Node) {
        throw ExchangeError(Errc::ProtocolError, "unexpected message type from peer");
      }
      if (cas::hash_node(*response.node) != expected) {
        throw NodeFetchError(Errc::HashMismatch, expected, "peer served a node with a different hash");
      }
      staged.emplace(expected, std::move(*response.node));
      staged_order.push_back(expected);
    }
  };

  std::vector<cas::ObjectHash> level{root};
  while (!level.empty()) {
    std::vector<cas::ObjectHash> wanted;
    std::vector<cas::ObjectHash> present;
    for (const auto &h : level) {
      if (!visited.insert(h).second) continue;
      if (local.contains(h)) {
        present.push_back(h);
      } else {
        wanted.push_back(h);
      }
    }
    request_all(wanted);
    std::vector<cas::ObjectHash> next_level;
    auto descend = [&](const cas::DagNode &node) {
      for (const auto &link : node.links) next_level.push_back(link.hash);
    };
    for (const auto &h : present) descend(local.get(h));
    for (const auto &h : wanted) descend(staged.at(h));
    level = std::move(next_level);
  }

  // Children before parents, so a visible root always has its chunks.
  for (auto it = staged_order.rbegin(); it != staged_order.rend(); ++it) {
    local.put(staged.at(*it));
  }
  return staged_order.size();
}

}  // namespace bmschain::exchange
