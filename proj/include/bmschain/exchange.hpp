#pragma once

// Pull-only object exchange between two stores over TCP.
//
// Every message is a frame: 4-byte big-endian payload length, then the
// canonical JSON payload. A frame (prefix included) never exceeds 1 MiB.
//
//   {"hash":"<64 hex>","type":"get"}
//   {"hash":"<64 hex>","node":{<canonical node>},"type":"node"}
//   {"hash":"<64 hex>","type":"missing"}
//
// A connection carries any number of requests; responses come back in
// request order, so clients may pipeline.

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bmschain/cas.hpp"

namespace bmschain::exchange {

inline constexpr std::size_t kMaxFrameSize = std::size_t{1} << 20;
inline constexpr std::uint16_t kDefaultPort = 4737;

enum class Errc {
  HashMismatch,
  RemoteMissing,
  ConnectionLost,
  ProtocolError,
  FrameTooLarge,
  BindFailed,
  ConnectFailed,
};

std::string_view to_string(Errc code);

class ExchangeError : public Error {
 public:
  ExchangeError(Errc code, const std::string &message)
      : Error(std::string(to_string(code)), message), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// HashMismatch / RemoteMissing name the node involved.
class NodeFetchError : public ExchangeError {
 public:
  NodeFetchError(Errc code, const cas::ObjectHash &hash, const std::string &message)
      : ExchangeError(code, hash.to_string() + ": " + message), hash_(hash) {}
  const cas::ObjectHash &hash() const noexcept { return hash_; }

 private:
  cas::ObjectHash hash_;
};

struct PeerEndpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;

  // "host:port"
  static PeerEndpoint parse(std::string_view text);
  std::string to_string() const;
};

enum class MessageType { Get, Node, Missing };

struct WireMessage {
  MessageType type = MessageType::Get;
  cas::ObjectHash hash;
  std::optional<cas::DagNode> node;  // Node messages only

  static WireMessage get(const cas::ObjectHash &hash) { return {MessageType::Get, hash, std::nullopt}; }
  static WireMessage missing(const cas::ObjectHash &hash) {
    return {MessageType::Missing, hash, std::nullopt};
  }
  static WireMessage with_node(const cas::ObjectHash &hash, cas::DagNode node) {
    return {MessageType::Node, hash, std::move(node)};
  }
};

std::string encode_message(const WireMessage &message);
// ProtocolError for a bad envelope; a node payload that does not decode is
// reported as HashMismatch against the message's hash.
WireMessage decode_message(std::string_view payload);

// Owning TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket &&other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket &operator=(Socket &&other) noexcept;
  Socket(const Socket &) = delete;
  Socket &operator=(const Socket &) = delete;
  ~Socket();

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void shutdown() const;

  static Socket connect(const PeerEndpoint &endpoint);

 private:
  int fd_ = -1;
};

void write_frame(const Socket &socket, std::string_view payload);
// nullopt on a clean close between frames; ConnectionLost mid-frame;
// FrameTooLarge for an oversized length prefix.
std::optional<std::string> read_frame(const Socket &socket);

// What the server answers from.
class NodeSource {
 public:
  virtual ~NodeSource() = default;
  virtual std::optional<cas::DagNode> find(const cas::ObjectHash &hash) const = 0;
};

// Serves an ObjectStore; corrupt objects are answered as missing.
class StoreSource final : public NodeSource {
 public:
  explicit StoreSource(cas::ObjectStore store) : store_(std::move(store)) {}
  std::optional<cas::DagNode> find(const cas::ObjectHash &hash) const override;

 private:
  cas::ObjectStore store_;
};

class Server {
 public:
  // Port 0 binds an ephemeral port; see port().
  Server(std::shared_ptr<const NodeSource> source, const PeerEndpoint &bind);
  ~Server();
  Server(const Server &) = delete;
  Server &operator=(const Server &) = delete;

  std::uint16_t port() const { return port_; }
  void stop();
  // Blocks until stop() is called from elsewhere.
  void wait();

 private:
  struct Connection {
    std::shared_ptr<Socket> socket;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void accept_loop();
  void handle(const Socket &socket) const;
  void reap_finished();

  std::shared_ptr<const NodeSource> source_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::once_flag stop_once_;
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<Connection> connections_;
};

std::unique_ptr<Server> serve(const cas::ObjectStore &store, const PeerEndpoint &bind);

struct FetchOptions {
  // Outstanding requests per connection.
  std::size_t window = 16;
};

// Walks the DAG from `root`, requesting only nodes missing locally and
// verifying each against its requested hash. Nodes are committed to `local`
// only after the whole DAG verified. Returns the number of nodes transferred.
std::size_t fetch_dag(const PeerEndpoint &peer, const cas::ObjectHash &root, cas::ObjectStore &local,
                      const FetchOptions &options = {});

}  // namespace bmschain::exchange
