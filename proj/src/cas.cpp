#include "bmschain/cas.hpp"

#include <algorithm>

#include "bmschain/crypto.hpp"

namespace bmschain::cas {

namespace fs = std::filesystem;

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::ChunkTooLarge: return "ChunkTooLarge";
    case Errc::InvalidNode: return "InvalidNode";
    case Errc::NotFound: return "NotFound";
    case Errc::CorruptObject: return "CorruptObject";
    case Errc::FileTooLarge: return "FileTooLarge";
  }
  return "Unknown";
}

ObjectHash ObjectHash::parse(std::string_view text) {
  if (text.size() != 2 * Digest::kSize) {
    throw DecodeError("object hash must be 64 hex characters");
  }
  return ObjectHash(Digest::from_hex(text));
}

void validate_node(const DagNode &node) {
  if (node.data.size() > kChunkSize) {
    throw CasError(Errc::ChunkTooLarge, "node data is " + std::to_string(node.data.size()) +
                                            " bytes, limit " + std::to_string(kChunkSize));
  }
  if (node.links.empty()) return;
  if (!node.data.empty()) throw CasError(Errc::InvalidNode, "node has both data and links");
  if (node.links.size() < 2) throw CasError(Errc::InvalidNode, "interior node needs at least 2 links");
  if (node.links.size() > kMaxLinks) throw CasError(Errc::InvalidNode, "too many links");
  for (const auto &link : node.links) {
    if (!link.name.empty()) throw CasError(Errc::InvalidNode, "chunk links must be unnamed");
  }
}

Json to_json(const DagNode &node) {
  Json links = Json::array();
  for (const auto &link : node.links) {
    links.push_back({{"hash", link.hash.to_string()}, {"name", link.name}, {"size", decimal(link.size)}});
  }
  return {{"data", to_base64(node.data)}, {"links", std::move(links)}};
}

DagNode node_from_json(const Json &j) {
  DagNode node;
  node.data = from_base64(string_field(j, "data"));
  const Json &links = field(j, "links");
  if (!links.is_array()) throw DecodeError("links must be an array");
  for (const auto &l : links) {
    node.links.push_back(Link{string_field(l, "name"), ObjectHash::parse(string_field(l, "hash")),
                              parse_u64(string_field(l, "size"))});
  }
  return node;
}

std::string encode_node(const DagNode &node) {
  validate_node(node);
  return canonical_dump(to_json(node));
}

DagNode decode_node(std::string_view text) {
  DagNode node = node_from_json(parse_canonical(text));
  if (encode_node(node) != text) throw DecodeError("node encoding is not canonical");
  return node;
}

ObjectHash hash_node(const DagNode &node) { return ObjectHash(sha256(encode_node(node))); }

ObjectStore::ObjectStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "objects");
}

fs::path ObjectStore::object_path(const ObjectHash &hash) const {
  auto hex = hash.to_string();
  return root_ / "objects" / hex.substr(0, 2) / hex.substr(2);
}

PutResult ObjectStore::put(const DagNode &node) {
  std::string encoded = encode_node(node);
  ObjectHash hash(sha256(encoded));
  auto path = object_path(hash);
  if (fs::exists(path)) return {hash, false};
  fs::create_directories(path.parent_path());
  write_file_atomic(path, encoded);
  return {hash, true};
}

std::optional<DagNode> ObjectStore::find(const ObjectHash &hash) const {
  auto path = object_path(hash);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  std::string encoded = read_file(path);
  if (ObjectHash(sha256(encoded)) != hash) {
    throw ObjectError(Errc::CorruptObject, hash.to_string(), "stored bytes do not match their hash");
  }
  try {
    return decode_node(encoded);
  } catch (const Error &e) {
    throw ObjectError(Errc::CorruptObject, hash.to_string(), e.what());
  }
}

DagNode ObjectStore::get(const ObjectHash &hash) const {
  auto node = find(hash);
  if (!node) throw ObjectError(Errc::NotFound, hash.to_string(), "object not in store");
  return std::move(*node);
}

bool ObjectStore::contains(const ObjectHash &hash) const { return fs::exists(object_path(hash)); }

bool ObjectStore::remove(const ObjectHash &hash) { return fs::remove(object_path(hash)); }

std::vector<ObjectHash> ObjectStore::list() const {
  std::vector<ObjectHash> out;
  for (const auto &shard : fs::directory_iterator(root_ / "objects")) {
    if (!shard.is_directory()) continue;
    auto prefix = shard.path().filename().string();
    for (const auto &entry : fs::directory_iterator(shard.path())) {
      auto name = entry.path().filename().string();
      if (name.find(".tmp.") != std::string::npos) continue;
      try {
        out.push_back(ObjectHash::parse(prefix + name));
      } catch (const DecodeError &) {
        // foreign file in the object tree; not an object
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t ObjectStore::size() const { return list().size(); }

AuditReport audit(const ObjectStore &store) {
  AuditReport report;
  for (const auto &hash : store.list()) {
    ++report.checked;
    try {
      (void)store.get(hash);
    } catch (const ObjectError &) {
      report.corrupt.push_back(hash.to_string());
    }
  }
  return report;
}

std::vector<DagNode> build_file_dag(ByteView content) {
  if (content.size() > kMaxFileSize) {
    throw CasError(Errc::FileTooLarge, std::to_string(content.size()) + " bytes exceeds the " +
                                           std::to_string(kMaxFileSize) + "-byte limit");
  }
  std::vector<DagNode> nodes;
  if (content.size() <= kChunkSize) {
    nodes.push_back(DagNode{Bytes(content.begin(), content.end()), {}});
    return nodes;
  }
  DagNode root;
  for (std::size_t offset = 0; offset < content.size(); offset += kChunkSize) {
    auto chunk = content.subspan(offset, std::min(kChunkSize, content.size() - offset));
    DagNode leaf{Bytes(chunk.begin(), chunk.end()), {}};
    root.links.push_back(Link{"", hash_node(leaf), chunk.size()});
    nodes.push_back(std::move(leaf));
  }
  nodes.push_back(std::move(root));
  return nodes;
}

ObjectHash add_file(ObjectStore &store, ByteView content) {
  auto nodes = build_file_dag(content);
  ObjectHash root;
  for (const auto &node : nodes) root = store.put(node).hash;
  return root;
}

Bytes cat_file(const ObjectStore &store, const ObjectHash &root) {
  DagNode node = store.get(root);
  if (node.is_leaf()) return std::move(node.data);
  Bytes out;
  std::uint64_t expected = 0;
  for (const auto &link : node.links) expected += link.size;
  out.reserve(expected);
  for (const auto &link : node.links) {
    DagNode leaf = store.get(link.hash);
    if (!leaf.is_leaf()) {
      throw ObjectError(Errc::CorruptObject, link.hash.to_string(), "expected a leaf chunk");
    }
    if (leaf.data.size() != link.size) {
      throw ObjectError(Errc::CorruptObject, link.hash.to_string(), "chunk length differs from link size");
    }
    out.insert(out.end(), leaf.data.begin(), leaf.data.end());
  }
  return out;
}

FileStat stat(const ObjectStore &store, const ObjectHash &root) {
  DagNode node = store.get(root);
  if (node.is_leaf()) return FileStat{node.data.size(), 1, 1};
  FileStat s{0, 1 + node.links.size(), 2};
  for (const auto &link : node.links) s.total_size += link.size;
  return s;
}

FileStat stat_by_traversal(const ObjectStore &store, const ObjectHash &root) {
  FileStat s{0, 0, 0};
  struct Frame {
    ObjectHash hash;
    std::uint32_t depth;
  };
  // Counts node references, so a chunk repeated within a file counts once per link.
  std::vector<Frame> stack{{root, 1}};
  while (!stack.empty()) {
    auto [hash, depth] = stack.back();
    stack.pop_back();
    DagNode node = store.get(hash);
    ++s.node_count;
    s.depth = std::max(s.depth, depth);
    s.total_size += node.data.size();
    for (auto it = node.links.rbegin(); it != node.links.rend(); ++it) {
      stack.push_back({it->hash, depth + 1});
    }
  }
  return s;
}

}  // namespace bmschain::cas
