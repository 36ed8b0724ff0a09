#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sidforge {

/// Semantic ID: one codebook index per quantization level.
struct SidSequence {
  std::vector<std::uint32_t> tokens;

  std::size_t levels() const noexcept { return tokens.size(); }
  auto operator<=>(const SidSequence&) const = default;
};

struct SidHash {
  std::size_t operator()(const SidSequence& s) const noexcept;
};

/// Renders level h as `<L_t>` with L the h-th lowercase letter, e.g.
/// (239, 112, 7) -> "<a_239><b_112><c_7>". At most 26 levels.
std::string render_sid(const SidSequence& sid);

/// Exact inverse of render_sid. Rejects unknown syntax, level letters out
/// of order, leading zeros and (when `level_sizes` is given) indices outside
/// a level's codebook or a level count that differs from the model's.
SidSequence parse_sid(std::string_view text);
SidSequence parse_sid(std::string_view text, std::span<const std::size_t> level_sizes);

/// Per-item SIDs, aligned with the embedding rows they were encoded from.
class SidAssignment {
 public:
  SidAssignment() = default;
  SidAssignment(std::string model_hash, std::vector<std::string> item_ids,
                std::vector<SidSequence> sids);

  const std::string& model_hash() const noexcept { return model_hash_; }
  std::size_t size() const noexcept { return item_ids_.size(); }
  bool empty() const noexcept { return item_ids_.empty(); }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }
  const std::vector<SidSequence>& sids() const noexcept { return sids_; }
  std::size_t levels() const noexcept { return sids_.empty() ? 0 : sids_.front().levels(); }

  const SidSequence* find(std::string_view item_id) const;

  bool operator==(const SidAssignment& other) const {
    return model_hash_ == other.model_hash_ && item_ids_ == other.item_ids_ &&
           sids_ == other.sids_;
  }

 private:
  std::string model_hash_;
  std::vector<std::string> item_ids_;
  std::vector<SidSequence> sids_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// TSV: a `#model\t<hash>` header, then `item_id\t<rendered sid>` per line.
std::string serialize_assignment(const SidAssignment& assignment);
SidAssignment parse_assignment(std::string_view text);
SidAssignment load_assignment(const std::filesystem::path& path);
void save_assignment(const std::filesystem::path& path, const SidAssignment& assignment);

/// Prefix tree over all catalog SIDs. Children are kept sorted by token;
/// leaves (depth == levels) hold the sorted ids of items sharing that SID.
class SidTrie {
 public:
  struct Node {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> children;  // (token, node)
    std::vector<std::string> items;
  };

  static constexpr std::uint32_t kRoot = 0;

  const Node& node(std::uint32_t index) const { return nodes_[index]; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t levels() const noexcept { return levels_; }
  std::size_t leaf_count() const noexcept { return leaf_count_; }

  /// Child of `index` labeled `token`, if any.
  std::optional<std::uint32_t> child(std::uint32_t index, std::uint32_t token) const;

  /// Leaf items for a full SID; empty when the SID is not in the catalog.
  std::span<const std::string> items_for(const SidSequence& sid) const;
  bool contains(const SidSequence& sid) const;

  /// All distinct SIDs in lexicographic order.
  std::vector<SidSequence> sids() const;

 private:
  friend SidTrie build_trie(const SidAssignment& assignment);

  std::vector<Node> nodes_;
  std::size_t levels_ = 0;
  std::size_t leaf_count_ = 0;
};

/// Throws Error on an empty assignment or mixed SID lengths.
SidTrie build_trie(const SidAssignment& assignment);

}  // namespace sidforge
