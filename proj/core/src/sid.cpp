#include "sidforge/sid.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_set>

#include "sidforge/checksum.hpp"
#include "sidforge/error.hpp"
#include "sidforge/rng.hpp"

namespace sidforge {

std::size_t SidHash::operator()(const SidSequence& s) const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ s.tokens.size();
  for (std::uint32_t t : s.tokens) h = splitmix64(h ^ t);
  return static_cast<std::size_t>(h);
}

std::string render_sid(const SidSequence& sid) {
  if (sid.tokens.size() > 26) throw Error("SIDs are limited to 26 levels");
  std::string out;
  for (std::size_t h = 0; h < sid.tokens.size(); ++h) {
    out += '<';
    out += static_cast<char>('a' + h);
    out += '_';
    out += std::to_string(sid.tokens[h]);
    out += '>';
  }
  return out;
}

SidSequence parse_sid(std::string_view text) {
  SidSequence sid;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t level = sid.tokens.size();
    if (level >= 26) throw ParseError(0, "SID has more than 26 levels");
    if (text.size() - pos < 5 || text[pos] != '<' || text[pos + 2] != '_') {
      throw ParseError(0, "malformed SID token at position " + std::to_string(pos));
    }
    const char letter = text[pos + 1];
    if (letter != static_cast<char>('a' + level)) {
      throw ParseError(0, std::string("expected level letter '") +
                              static_cast<char>('a' + level) + "' at position " +
                              std::to_string(pos + 1));
    }
    const std::size_t close = text.find('>', pos + 3);
    if (close == std::string_view::npos) throw ParseError(0, "unterminated SID token");
    const std::string_view digits = text.substr(pos + 3, close - pos - 3);
    if (digits.empty() || (digits.size() > 1 && digits.front() == '0')) {
      throw ParseError(0, "malformed token index '" + std::string(digits) + "'");
    }
    std::uint32_t value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
      throw ParseError(0, "malformed token index '" + std::string(digits) + "'");
    }
    sid.tokens.push_back(value);
    pos = close + 1;
  }
  if (sid.tokens.empty()) throw ParseError(0, "empty SID");
  return sid;
}

SidSequence parse_sid(std::string_view text, std::span<const std::size_t> level_sizes) {
  SidSequence sid = parse_sid(text);
  if (sid.tokens.size() != level_sizes.size()) {
    throw ParseError(0, "SID has " + std::to_string(sid.tokens.size()) +
                            " levels, model has " + std::to_string(level_sizes.size()));
  }
  for (std::size_t h = 0; h < sid.tokens.size(); ++h) {
    if (sid.tokens[h] >= level_sizes[h]) {
      throw ParseError(0, "token " + std::to_string(sid.tokens[h]) + " out of range for level " +
                              std::string(1, static_cast<char>('a' + h)) + " (size " +
                              std::to_string(level_sizes[h]) + ")");
    }
  }
  return sid;
}

SidAssignment::SidAssignment(std::string model_hash, std::vector<std::string> item_ids,
                             std::vector<SidSequence> sids)
    : model_hash_(std::move(model_hash)), item_ids_(std::move(item_ids)), sids_(std::move(sids)) {
  if (item_ids_.size() != sids_.size()) throw Error("assignment ids and SIDs differ in length");
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    if (!index_.emplace(item_ids_[i], i).second) {
      throw Error("duplicate item_id '" + item_ids_[i] + "' in assignment");
    }
    if (sids_[i].levels() != sids_.front().levels()) throw Error("mixed SID lengths");
  }
}

const SidSequence* SidAssignment::find(std::string_view item_id) const {
  auto it = index_.find(std::string(item_id));
  return it == index_.end() ? nullptr : &sids_[it->second];
}

std::string serialize_assignment(const SidAssignment& assignment) {
  std::string out = "#model\t" + assignment.model_hash() + "\n";
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out += assignment.item_ids()[i];
    out += '\t';
    out += render_sid(assignment.sids()[i]);
    out += '\n';
  }
  return out;
}

SidAssignment parse_assignment(std::string_view text) {
  std::string model_hash;
  std::vector<std::string> ids;
  std::vector<SidSequence> sids;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "expected item_id<TAB>sid");
    if (line_no == 1 && line.substr(0, tab) == "#model") {
      model_hash = std::string(line.substr(tab + 1));
      continue;
    }
    try {
      sids.push_back(parse_sid(line.substr(tab + 1)));
    } catch (const ParseError& e) {
      throw ParseError(line_no, e.what());
    }
    ids.emplace_back(line.substr(0, tab));
  }
  try {
    return SidAssignment(std::move(model_hash), std::move(ids), std::move(sids));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(0, e.what());
  }
}

SidAssignment load_assignment(const std::filesystem::path& path) {
  return parse_assignment(read_file(path));
}

void save_assignment(const std::filesystem::path& path, const SidAssignment& assignment) {
  write_file_atomic(path, serialize_assignment(assignment));
}

std::optional<std::uint32_t> SidTrie::child(std::uint32_t index, std::uint32_t token) const {
  const auto& children = nodes_[index].children;
  auto it = std::lower_bound(children.begin(), children.end(), token,
                             [](const auto& c, std::uint32_t t) { return c.first < t; });
  if (it == children.end() || it->first != token) return std::nullopt;
  return it->second;
}

std::span<const std::string> SidTrie::items_for(const SidSequence& sid) const {
  if (sid.levels() != levels_ || nodes_.empty()) return {};
  std::uint32_t at = kRoot;
  for (std::uint32_t t : sid.tokens) {
    auto next = child(at, t);
    if (!next) return {};
    at = *next;
  }
  return nodes_[at].items;
}

bool SidTrie::contains(const SidSequence& sid) const { return !items_for(sid).empty(); }

std::vector<SidSequence> SidTrie::sids() const {
  std::vector<SidSequence> out;
  if (nodes_.empty()) return out;
  SidSequence path;
  auto walk = [&](auto&& self, std::uint32_t at) -> void {
    if (path.levels() == levels_) {
      out.push_back(path);
      return;
    }
    for (const auto& [token, next] : nodes_[at].children) {
      path.tokens.push_back(token);
      self(self, next);
      path.tokens.pop_back();
    }
  };
  walk(walk, kRoot);
  return out;
}

SidTrie build_trie(const SidAssignment& assignment) {
  if (assignment.empty()) throw Error("cannot build a trie from an empty assignment");
  SidTrie trie;
  trie.levels_ = assignment.levels();
  trie.nodes_.emplace_back();
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    std::uint32_t at = SidTrie::kRoot;
    for (std::uint32_t token : assignment.sids()[i].tokens) {
      auto& children = trie.nodes_[at].children;
      auto it = std::lower_bound(children.begin(), children.end(), token,
                                 [](const auto& c, std::uint32_t t) { return c.first < t; });
      if (it != children.end() && it->first == token) {
        at = it->second;
        continue;
      }
      const auto fresh = static_cast<std::uint32_t>(trie.nodes_.size());
      children.insert(it, {token, fresh});
      trie.nodes_.emplace_back();
      at = fresh;
    }
    auto& leaf = trie.nodes_[at].items;
    if (leaf.empty()) ++trie.leaf_count_;
    leaf.push_back(assignment.item_ids()[i]);
  }
  for (auto& node : trie.nodes_) std::sort(node.items.begin(), node.items.end());
  return trie;
}

}  // namespace sidforge
