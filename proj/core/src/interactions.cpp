#include "sidforge/interactions.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>

#include "sidforge/checksum.hpp"
#include "sidforge/error.hpp"

namespace sidforge {

void canonical_sort(std::vector<Interaction>& events) {
  std::sort(events.begin(), events.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user_id, a.timestamp, a.item_id) <
           std::tie(b.user_id, b.timestamp, b.item_id);
  });
}

std::map<std::string, std::vector<std::string>> user_sequences(const InteractionLog& log) {
  std::vector<Interaction> events = log.events;
  canonical_sort(events);
  std::map<std::string, std::vector<std::string>> sequences;
  for (auto& e : events) sequences[e.user_id].push_back(std::move(e.item_id));
  return sequences;
}

InteractionLog parse_interactions(std::string_view text) {
  InteractionLog log;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::size_t tab1 = line.find('\t');
    const std::size_t tab2 = tab1 == std::string_view::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string_view::npos || line.find('\t', tab2 + 1) != std::string_view::npos) {
      throw ParseError(line_no, "expected three tab-separated columns");
    }
    Interaction e;
    e.user_id = std::string(line.substr(0, tab1));
    e.item_id = std::string(line.substr(tab1 + 1, tab2 - tab1 - 1));
    const std::string_view ts = line.substr(tab2 + 1);
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), e.timestamp);
    if (ec != std::errc{} || ptr != ts.data() + ts.size()) {
      throw ParseError(line_no, "timestamp '" + std::string(ts) + "' is not an integer");
    }
    if (e.user_id.empty() || e.item_id.empty()) throw ParseError(line_no, "empty id");
    log.events.push_back(std::move(e));
  }
  return log;
}

InteractionLog load_interactions(const std::filesystem::path& path) {
  return parse_interactions(read_file(path));
}

std::string serialize_interactions(const InteractionLog& log) {
  std::string out;
  for (const auto& e : log.events) {
    out += e.user_id;
    out += '\t';
    out += e.item_id;
    out += '\t';
    out += std::to_string(e.timestamp);
    out += '\n';
  }
  return out;
}

void save_interactions(const std::filesystem::path& path, const InteractionLog& log) {
  write_file_atomic(path, serialize_interactions(log));
}

InteractionLog k_core_filter(const InteractionLog& log, int k) {
  if (k < 1) throw Error("k-core filter requires k >= 1");
  const std::size_t n = log.events.size();
  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  std::unordered_map<std::string, std::vector<std::size_t>> by_item;
  for (std::size_t i = 0; i < n; ++i) {
    by_user[log.events[i].user_id].push_back(i);
    by_item[log.events[i].item_id].push_back(i);
  }
  std::unordered_map<std::string, std::size_t> user_degree, item_degree;
  for (const auto& [u, ev] : by_user) user_degree[u] = ev.size();
  for (const auto& [it, ev] : by_item) item_degree[it] = ev.size();

  // Peel users and items below k; removing a node drops its live events and
  // lowers the degree of the other endpoint.
  std::vector<char> alive(n, 1);
  std::vector<std::pair<bool, std::string>> queue;  // (is_user, id)
  std::unordered_map<std::string, char> user_gone, item_gone;
  const auto threshold = static_cast<std::size_t>(k);
  for (const auto& [u, d] : user_degree) {
    if (d < threshold) {
      queue.emplace_back(true, u);
      user_gone[u] = 1;
    }
  }
  for (const auto& [it, d] : item_degree) {
    if (d < threshold) {
      queue.emplace_back(false, it);
      item_gone[it] = 1;
    }
  }
  while (!queue.empty()) {
    auto [is_user, id] = std::move(queue.back());
    queue.pop_back();
    const auto& events = is_user ? by_user[id] : by_item[id];
    for (std::size_t e : events) {
      if (!alive[e]) continue;
      alive[e] = 0;
      if (is_user) {
        const std::string& item = log.events[e].item_id;
        if (--item_degree[item] < threshold && !item_gone[item]) {
          item_gone[item] = 1;
          queue.emplace_back(false, item);
        }
      } else {
        const std::string& user = log.events[e].user_id;
        if (--user_degree[user] < threshold && !user_gone[user]) {
          user_gone[user] = 1;
          queue.emplace_back(true, user);
        }
      }
    }
  }
  InteractionLog out;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) out.events.push_back(log.events[i]);
  }
  canonical_sort(out.events);
  return out;
}

SplitDataset leave_last_out_split(const InteractionLog& log) {
  SplitDataset split;
  for (auto& [user, items] : user_sequences(log)) {
    if (items.size() < 3) {
      ++split.dropped_users;
      continue;
    }
    UserSplit us;
    us.user_id = user;
    us.test = items.back();
    us.validation = items[items.size() - 2];
    us.train.assign(items.begin(), items.end() - 2);
    split.users.push_back(std::move(us));
  }
  return split;
}

}  // namespace sidforge
