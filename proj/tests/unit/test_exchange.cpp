#include <arpa/inet.h>
#include <doctest.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <functional>
#include <thread>

#include "bmschain/envelope.hpp"
#include "bmschain/exchange.hpp"
#include "support.hpp"

using namespace bmschain;
using namespace bmschain::exchange;
using cas::ObjectHash;
using cas::ObjectStore;

namespace {

PeerEndpoint loopback(std::uint16_t port = 0) { return PeerEndpoint{"127.0.0.1", port}; }

// Serves `inner`, but `fault` may rewrite any node on the way out.
class FaultySource : public NodeSource {
 public:
  FaultySource(ObjectStore store, std::function<void(const ObjectHash &, cas::DagNode &)> fault)
      : inner_(std::move(store)), fault_(std::move(fault)) {}
  std::optional<cas::DagNode> find(const ObjectHash &hash) const override {
    auto node = inner_.find(hash);
    if (node) fault_(hash, *node);
    return node;
  }

 private:
  StoreSource inner_;
  std::function<void(const ObjectHash &, cas::DagNode &)> fault_;
};

// Accepts one connection and answers each request frame with `reply(request)`
// written verbatim, bypassing message encoding.
class RawServer {
 public:
  explicit RawServer(std::function<std::string(const std::string &)> reply, bool hang_up = false)
      : reply_(std::move(reply)) {
    listener_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::bind(listener_.fd(), reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) == 0);
    REQUIRE(::listen(listener_.fd(), 4) == 0);
    socklen_t len = sizeof(addr);
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr *>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this, hang_up] {
      Socket client(::accept(listener_.fd(), nullptr, nullptr));
      if (!client.valid()) return;
      try {
        while (auto frame = read_frame(client)) {
          auto out = reply_(*frame);
          ::send(client.fd(), out.data(), out.size(), MSG_NOSIGNAL);
          if (hang_up) break;
        }
      } catch (const std::exception &) {
      }
    });
  }
  ~RawServer() {
    listener_.shutdown();
    thread_.join();
  }
  std::uint16_t port() const { return port_; }

 private:
  std::function<std::string(const std::string &)> reply_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::thread thread_;
};

std::string framed(std::string_view payload) {
  std::string out(4, '\0');
  auto n = static_cast<std::uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>(n >> (24 - 8 * i));
  return out + std::string(payload);
}

template <class F>
Errc code_of(F &&f) {
  try {
    f();
  } catch (const ExchangeError &e) {
    return e.code();
  }
  FAIL("no ExchangeError thrown");
  return Errc::ProtocolError;
}

}  // namespace

TEST_CASE("message encoding") {
  auto h = cas::hash_node({});
  auto get = encode_message(WireMessage::get(h));
  CHECK(get == R"({"hash":")" + h.to_string() + R"(","type":"get"})");
  auto node = cas::DagNode{Bytes{'a', 'b', 'c'}, {}};
  auto msg = decode_message(encode_message(WireMessage::with_node(cas::hash_node(node), node)));
  CHECK(msg.type == MessageType::Node);
  CHECK(msg.node == node);
  CHECK(code_of([] { decode_message(R"({"type":"get"})"); }) == Errc::ProtocolError);
  CHECK(code_of([&] { decode_message(R"({"hash":")" + h.to_string() + R"(","type":"put"})"); }) ==
        Errc::ProtocolError);
  CHECK(code_of([] { PeerEndpoint::parse("localhost"); }) == Errc::ConnectFailed);
  CHECK(PeerEndpoint::parse("[::1]:80").port == 80);
}

TEST_CASE("server answers gets in order, pipelined") {
  testing::TempDir dir("srv");
  ObjectStore store(dir / "store");
  auto root = cas::add_file(store, testing::random_content(600000, 4));
  auto server = serve(store, loopback());
  auto links = store.get(root).links;
  auto unknown = cas::hash_node(cas::DagNode{Bytes{'z'}, {}});

  auto sock = Socket::connect(loopback(server->port()));
  write_frame(sock, encode_message(WireMessage::get(links[2].hash)));
  write_frame(sock, encode_message(WireMessage::get(unknown)));
  write_frame(sock, encode_message(WireMessage::get(links[0].hash)));
  auto r1 = decode_message(*read_frame(sock));
  auto r2 = decode_message(*read_frame(sock));
  auto r3 = decode_message(*read_frame(sock));
  CHECK(r1.hash == links[2].hash);
  CHECK(cas::hash_node(*r1.node) == links[2].hash);
  CHECK(r2.type == MessageType::Missing);
  CHECK(r2.hash == unknown);
  CHECK(r3.hash == links[0].hash);
  sock.shutdown();
  server->stop();
}

TEST_CASE("oversized frames are refused") {
  RawServer raw([](const std::string &) {
    std::string prefix(4, '\0');
    prefix[0] = 0x7f;
    return prefix;
  });
  auto sock = Socket::connect(loopback(raw.port()));
  write_frame(sock, "x");
  CHECK(code_of([&] { read_frame(sock); }) == Errc::FrameTooLarge);
  CHECK(code_of([&] { write_frame(sock, std::string(kMaxFrameSize, 'a')); }) == Errc::FrameTooLarge);
}

TEST_CASE("fetch transfers only what is missing") {
  testing::TempDir dir("fetch");
  ObjectStore remote(dir / "remote");
  ObjectStore local(dir / "local");
  auto content = testing::random_content(1000000, 5);
  auto root = cas::add_file(remote, content);
  auto server = serve(remote, loopback());
  CHECK(fetch_dag(loopback(server->port()), root, local) == 5);
  CHECK(cas::cat_file(local, root) == content);
  CHECK(fetch_dag(loopback(server->port()), root, local) == 0);

  // Local copy of one chunk already present: four nodes travel.
  ObjectStore partial(dir / "partial");
  partial.put(remote.get(remote.get(root).links[1].hash));
  CHECK(fetch_dag(loopback(server->port()), root, partial, FetchOptions{1}) == 4);
  CHECK(cas::cat_file(partial, root) == content);
  server->stop();
}

TEST_CASE("a lying peer leaves the local store untouched") {
  testing::TempDir dir("lie");
  ObjectStore remote(dir / "remote");
  ObjectStore local(dir / "local");
  auto root = cas::add_file(remote, testing::random_content(900000, 6));
  auto victim = remote.get(root).links[2].hash;
  auto source = std::make_shared<FaultySource>(remote, [victim](const ObjectHash &h, cas::DagNode &n) {
    if (h == victim) n.data[100] ^= 0xff;
  });
  Server server(source, loopback());
  try {
    fetch_dag(loopback(server.port()), root, local);
    FAIL("accepted a corrupted chunk");
  } catch (const NodeFetchError &e) {
    CHECK(e.code() == Errc::HashMismatch);
    CHECK(e.hash() == victim);
  }
  CHECK(local.size() == 0);
  server.stop();
}

TEST_CASE("remote missing nodes are named") {
  testing::TempDir dir("gone");
  ObjectStore remote(dir / "remote");
  ObjectStore local(dir / "local");
  auto root = cas::add_file(remote, testing::random_content(600000, 8));
  auto gone = remote.get(root).links[0].hash;
  remote.remove(gone);
  auto server = serve(remote, loopback());
  try {
    fetch_dag(loopback(server->port()), root, local);
    FAIL("fetched an incomplete DAG");
  } catch (const NodeFetchError &e) {
    CHECK(e.code() == Errc::RemoteMissing);
    CHECK(e.hash() == gone);
  }
  CHECK(local.size() == 0);
  server->stop();
}

TEST_CASE("malformed responses from a raw peer") {
  testing::TempDir dir("raw");
  ObjectStore local(dir / "local");
  auto node = cas::DagNode{Bytes{'o', 'k'}, {}};
  auto h = cas::hash_node(node);
  auto good = encode_message(WireMessage::with_node(h, node));

  SUBCASE("payload byte flipped") {
    auto bad = good;
    bad[bad.find("b2s=")] = 'c';  // base64 of "ok" becomes "c2s="
    RawServer raw([&](const std::string &) { return framed(bad); });
    CHECK(code_of([&] { fetch_dag(loopback(raw.port()), h, local); }) == Errc::HashMismatch);
  }
  SUBCASE("non-canonical payload") {
    RawServer raw([&](const std::string &) { return framed(good + " "); });
    CHECK(code_of([&] { fetch_dag(loopback(raw.port()), h, local); }) == Errc::ProtocolError);
  }
  SUBCASE("connection dropped mid-frame") {
    RawServer raw([&](const std::string &) { return framed(good).substr(0, 10); }, true);
    CHECK(code_of([&] { fetch_dag(loopback(raw.port()), h, local); }) == Errc::ConnectionLost);
  }
  SUBCASE("well-formed") {
    RawServer raw([&](const std::string &) { return framed(good); });
    CHECK(fetch_dag(loopback(raw.port()), h, local) == 1);
    CHECK(local.get(h) == node);
  }
}

TEST_CASE("concurrent clients") {
  testing::TempDir dir("many");
  ObjectStore remote(dir / "remote");
  auto content = testing::random_content(1500000, 9);
  auto root = cas::add_file(remote, content);
  auto server = serve(remote, loopback());
  std::vector<std::thread> clients;
  std::atomic<int> ok{0};
  for (int i = 0; i < 6; ++i) {
    clients.emplace_back([&, i] {
      ObjectStore local(dir / ("client" + std::to_string(i)));
      if (fetch_dag(loopback(server->port()), root, local) == 7 && cas::cat_file(local, root) == content)
        ++ok;
    });
  }
  for (auto &t : clients) t.join();
  CHECK(ok == 6);
  server->stop();
  ObjectStore late(dir / "late");
  CHECK(code_of([&] { fetch_dag(loopback(server->port()), root, late); }) == Errc::ConnectFailed);
}

TEST_CASE("encrypt, publish, fetch, decrypt") {
  testing::TempDir dir("e2e");
  auto bob = envelope::Identity::generate();
  auto plain = testing::random_content(1 << 20, 10);
  ObjectStore alice_store(dir / "alice");
  auto root = cas::add_file(alice_store, envelope::encrypt_for(bob.public_key(), plain));
  auto server = serve(alice_store, loopback());
  ObjectStore bob_store(dir / "bob");
  fetch_dag(loopback(server->port()), root, bob_store);
  CHECK(envelope::decrypt(cas::cat_file(bob_store, root), bob) == plain);
  CHECK_THROWS_AS(envelope::decrypt(cas::cat_file(bob_store, root), envelope::Identity::generate()),
                  envelope::EnvelopeError);
  server->stop();
}
