#pragma once

// Content-addressed DAG object store.
//
// A file of at most kChunkSize bytes is stored as one leaf node. Larger files
// are split into kChunkSize chunks, one leaf each, under a single interior
// root whose links are in chunk order and carry each chunk's length. Node
// identity is the SHA-256 of the node's canonical encoding:
//
//   {"data":"<base64>","links":[{"hash":"<64 hex>","name":"","size":"<dec>"},...]}

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bmschain/encoding.hpp"

namespace bmschain::cas {

inline constexpr std::size_t kChunkSize = 262144;
inline constexpr std::size_t kMaxLinks = 1024;
inline constexpr std::uint64_t kMaxFileSize = std::uint64_t{kMaxLinks} * kChunkSize;

enum class Errc {
  ChunkTooLarge,
  InvalidNode,
  NotFound,
  CorruptObject,
  FileTooLarge,
};

std::string_view to_string(Errc code);

class CasError : public Error {
 public:
  CasError(Errc code, const std::string &message)
      : Error(std::string(to_string(code)), message), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Thrown for NotFound / CorruptObject; names the offending node.
class ObjectError : public CasError {
 public:
  ObjectError(Errc code, const std::string &hash, const std::string &message)
      : CasError(code, hash + ": " + message), hash_(hash) {}
  const std::string &hash() const noexcept { return hash_; }

 private:
  std::string hash_;
};

// Rendered as 64 lowercase hex characters, no prefix.
class ObjectHash {
 public:
  ObjectHash() = default;
  explicit ObjectHash(const Digest &digest) : digest_(digest) {}

  std::string to_string() const { return digest_.to_hex(); }
  static ObjectHash parse(std::string_view text);
  const Digest &digest() const { return digest_; }

  auto operator<=>(const ObjectHash &) const = default;

 private:
  Digest digest_;
};

struct Link {
  std::string name;
  ObjectHash hash;
  // Raw content bytes reachable through the link.
  std::uint64_t size = 0;

  bool operator==(const Link &) const = default;
};

struct DagNode {
  Bytes data;
  std::vector<Link> links;

  bool is_leaf() const { return links.empty(); }
  bool operator==(const DagNode &) const = default;
};

// Checks the leaf/interior shape and data length; throws ChunkTooLarge or InvalidNode.
void validate_node(const DagNode &node);

Json to_json(const DagNode &node);
DagNode node_from_json(const Json &j);
std::string encode_node(const DagNode &node);
// Strict: input must be the canonical encoding of a valid node.
DagNode decode_node(std::string_view text);

ObjectHash hash_node(const DagNode &node);

struct PutResult {
  ObjectHash hash;
  bool inserted = false;  // false: already present
};

// Filesystem store: objects/<first 2 hex>/<remaining 62 hex>.
// Writes are temp-file + rename, so concurrent puts of the same node are safe.
class ObjectStore {
 public:
  explicit ObjectStore(std::filesystem::path root);

  const std::filesystem::path &root() const { return root_; }
  std::filesystem::path object_path(const ObjectHash &hash) const;

  PutResult put(const DagNode &node);
  // Throws ObjectError NotFound / CorruptObject.
  DagNode get(const ObjectHash &hash) const;
  std::optional<DagNode> find(const ObjectHash &hash) const;
  bool contains(const ObjectHash &hash) const;
  bool remove(const ObjectHash &hash);

  std::vector<ObjectHash> list() const;
  std::size_t size() const;

 private:
  std::filesystem::path root_;
};

struct AuditReport {
  std::size_t checked = 0;
  std::vector<std::string> corrupt;  // file names whose contents do not hash to their name
  bool ok() const { return corrupt.empty(); }
};

// Recomputes every stored object's hash against its key.
AuditReport audit(const ObjectStore &store);

// Chunks `content` and stores every node. Throws FileTooLarge past kMaxFileSize.
ObjectHash add_file(ObjectStore &store, ByteView content);
// The nodes add_file would store, root last, without touching a store.
std::vector<DagNode> build_file_dag(ByteView content);
Bytes cat_file(const ObjectStore &store, const ObjectHash &root);

struct FileStat {
  std::uint64_t total_size = 0;
  std::uint64_t node_count = 0;
  std::uint32_t depth = 0;

  bool operator==(const FileStat &) const = default;
};

// From the root's links only; leaves are not read for a two-level DAG.
FileStat stat(const ObjectStore &store, const ObjectHash &root);
// Reads every reachable node and sums leaf data.
FileStat stat_by_traversal(const ObjectStore &store, const ObjectHash &root);

}  // namespace bmschain::cas
