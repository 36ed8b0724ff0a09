#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sidforge {

/// One catalog item with its cached enrichment text.
struct ItemRecord {
  std::string item_id;
  std::string title;
  std::string description;
  std::string category;
  std::optional<std::string> visual_description;  // image caption
  std::vector<std::string> interests;              // mined interest tags

  /// Text fed to the embedding model: title, interest tags, description and
  /// visual description, each on its own labeled line. Absent optional
  /// fields are omitted.
  std::string unified_text() const;

  bool operator==(const ItemRecord&) const = default;
};

/// Insertion-ordered item collection with unique ids.
class ItemCatalog {
 public:
  ItemCatalog() = default;
  explicit ItemCatalog(std::vector<ItemRecord> items);

  /// Throws Error if the id is empty or already present.
  void add(ItemRecord item);

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const std::vector<ItemRecord>& items() const noexcept { return items_; }
  const ItemRecord& operator[](std::size_t i) const { return items_[i]; }

  std::optional<std::size_t> index_of(std::string_view item_id) const;
  const ItemRecord* find(std::string_view item_id) const;

  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

 private:
  std::vector<ItemRecord> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses line-delimited JSON items. Blank lines are skipped and unknown
/// fields ignored. Throws ParseError with the 1-based line number.
ItemCatalog parse_items(std::string_view text);
ItemCatalog load_items(const std::filesystem::path& path);

std::string serialize_items(const ItemCatalog& catalog);
void save_items(const std::filesystem::path& path, const ItemCatalog& catalog);

}  // namespace sidforge
