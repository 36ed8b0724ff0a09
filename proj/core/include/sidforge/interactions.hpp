#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sidforge {

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;  // seconds

  auto operator<=>(const Interaction&) const = default;
};

struct InteractionLog {
  std::vector<Interaction> events;

  bool operator==(const InteractionLog&) const = default;
};

/// Orders events by (user_id, timestamp, item_id).
void canonical_sort(std::vector<Interaction>& events);

/// Per-user chronological item sequences; ties on timestamp resolve by
/// item_id.
std::map<std::string, std::vector<std::string>> user_sequences(const InteractionLog& log);

/// Parses tab-separated `user_id, item_id, timestamp` lines (no header).
InteractionLog parse_interactions(std::string_view text);
InteractionLog load_interactions(const std::filesystem::path& path);

std::string serialize_interactions(const InteractionLog& log);
void save_interactions(const std::filesystem::path& path, const InteractionLog& log);

/// Largest sub-log in which every user and every item has at least k
/// events. Events are returned in canonical order, so the result does not
/// depend on input order. Throws Error when k < 1.
InteractionLog k_core_filter(const InteractionLog& log, int k);

struct UserSplit {
  std::string user_id;
  std::vector<std::string> train;  // chronological, all but the last two
  std::string validation;          // second-to-last
  std::string test;                // last
};

struct SplitDataset {
  std::vector<UserSplit> users;  // ordered by user_id
  std::size_t dropped_users = 0;  // fewer than three events
};

SplitDataset leave_last_out_split(const InteractionLog& log);

}  // namespace sidforge
