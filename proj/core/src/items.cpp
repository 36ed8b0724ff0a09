#include "sidforge/items.hpp"

#include <json.hpp>

#include "sidforge/checksum.hpp"
#include "sidforge/error.hpp"

namespace sidforge {

using nlohmann::json;
using nlohmann::ordered_json;

std::string ItemRecord::unified_text() const {
  std::string text = "Title: " + title;
  if (!interests.empty()) {
    text += "\n[INTERESTS] ";
    for (std::size_t i = 0; i < interests.size(); ++i) {
      if (i) text += "; ";
      text += interests[i];
    }
  }
  text += "\nDescription: " + description;
  if (visual_description) text += "\nVisual: " + *visual_description;
  return text;
}

ItemCatalog::ItemCatalog(std::vector<ItemRecord> items) {
  items_.reserve(items.size());
  for (auto& item : items) add(std::move(item));
}

void ItemCatalog::add(ItemRecord item) {
  if (item.item_id.empty()) throw Error("item_id must be non-empty");
  auto [it, inserted] = index_.emplace(item.item_id, items_.size());
  if (!inserted) throw Error("duplicate item_id '" + item.item_id + "'");
  items_.push_back(std::move(item));
}

std::optional<std::size_t> ItemCatalog::index_of(std::string_view item_id) const {
  auto it = index_.find(std::string(item_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const ItemRecord* ItemCatalog::find(std::string_view item_id) const {
  auto idx = index_of(item_id);
  return idx ? &items_[*idx] : nullptr;
}

namespace {

std::string required_string(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw Error(std::string("missing field '") + field + "'");
  if (!it->is_string()) throw Error(std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

ItemRecord item_from_json(const json& obj) {
  if (!obj.is_object()) throw Error("expected a JSON object");
  ItemRecord item;
  item.item_id = required_string(obj, "item_id");
  item.title = required_string(obj, "title");
  item.description = required_string(obj, "description");
  item.category = required_string(obj, "category");
  if (auto it = obj.find("visual_description"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw Error("field 'visual_description' must be a string");
    item.visual_description = it->get<std::string>();
  }
  if (auto it = obj.find("interests"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw Error("field 'interests' must be an array of strings");
    for (const auto& tag : *it) {
      if (!tag.is_string()) throw Error("field 'interests' must be an array of strings");
      item.interests.push_back(tag.get<std::string>());
    }
  }
  return item;
}

}  // namespace

ItemCatalog parse_items(std::string_view text) {
  ItemCatalog catalog;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      catalog.add(item_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return catalog;
}

ItemCatalog load_items(const std::filesystem::path& path) { return parse_items(read_file(path)); }

std::string serialize_items(const ItemCatalog& catalog) {
  std::string out;
  for (const auto& item : catalog) {
    ordered_json obj;
    obj["item_id"] = item.item_id;
    obj["title"] = item.title;
    obj["description"] = item.description;
    obj["category"] = item.category;
    if (item.visual_description) obj["visual_description"] = *item.visual_description;
    if (!item.interests.empty()) obj["interests"] = item.interests;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_items(const std::filesystem::path& path, const ItemCatalog& catalog) {
  write_file_atomic(path, serialize_items(catalog));
}

}  // namespace sidforge
