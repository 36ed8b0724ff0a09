#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sidforge/interactions.hpp"
#include "sidforge/items.hpp"
#include "sidforge/rq.hpp"
#include "sidforge/sid.hpp"

namespace sidforge {

/// The eight fine-tuning tasks.
enum class TaskId : std::uint8_t {
  kTitleToSid = 1,
  kSidToTitle = 2,
  kSidHistoryToSid = 3,
  kTitleHistoryToSid = 4,
  kSidHistoryToTitle = 5,
  kTitleHistoryToTitle = 6,
  kVisualToSid = 7,
  kVisualToTitle = 8,
};

inline constexpr std::array<TaskId, 8> kAllTasks = {
    TaskId::kTitleToSid,        TaskId::kSidToTitle,         TaskId::kSidHistoryToSid,
    TaskId::kTitleHistoryToSid, TaskId::kSidHistoryToTitle,  TaskId::kTitleHistoryToTitle,
    TaskId::kVisualToSid,       TaskId::kVisualToTitle,
};

inline std::size_t task_index(TaskId task) { return static_cast<std::size_t>(task) - 1; }

/// "T1".."T8".
std::string_view task_code(TaskId task);
/// e.g. "Title->SID", "VisDesc->Title".
std::string_view task_name(TaskId task);
std::optional<TaskId> parse_task_code(std::string_view code);

std::string_view system_instruction(TaskId task);
/// User prompt with a single `{...}` placeholder.
std::string_view user_template(TaskId task);
bool produces_sid(TaskId task);

struct TrainingExample {
  TaskId task = TaskId::kTitleToSid;
  std::string system;
  std::string user;
  std::string assistant;
  std::string provenance;  // item_id or user_id

  bool operator==(const TrainingExample&) const = default;
};

struct ExampleSet {
  TaskId task = TaskId::kTitleToSid;
  std::vector<TrainingExample> examples;
  std::size_t skipped = 0;  // missing SID, visual description or history
};

/// Builds every example for one task. Item tasks (T1, T2, T7, T8) walk the
/// catalog; history tasks (T3-T6) render the last `max_history` train items
/// of each user, oldest first, joined by ", ", and target the validation
/// item. Test targets never appear.
ExampleSet make_examples(TaskId task, const SplitDataset& split, const ItemCatalog& catalog,
                         const SidAssignment& assignment, std::size_t max_history = 20);

struct ConversationalRecord {
  TaskId task = TaskId::kTitleToSid;
  std::string text;
};

/// Role-delimited chat layout, each delimiter and content block on its own
/// line:
///   <|im_start|>system / instruction / <|im_end|> / <|im_start|>user / ...
ConversationalRecord render_template(const TrainingExample& example);

struct ParsedConversation {
  std::string system;
  std::string user;
  std::string assistant;
};

/// Inverse of render_template. Throws ParseError on any layout deviation.
ParsedConversation parse_template(std::string_view text);

struct CorpusOptions {
  std::size_t records = 10000;
  std::size_t max_history = 20;
  std::uint64_t seed = 0;
};

struct Corpus {
  std::vector<TrainingExample> records;
  std::array<std::size_t, 8> available{};  // examples per task before sampling
  std::vector<TaskId> excluded_tasks;       // no examples, dropped from sampling
};

/// Draws each record's task uniformly from the tasks with examples, then an
/// example of that task uniformly with replacement.
Corpus sample_corpus(const SplitDataset& split, const ItemCatalog& catalog,
                     const SidAssignment& assignment, const CorpusOptions& options);

/// One `{"task","system","user","assistant"}` object per line.
std::string corpus_to_jsonl(const std::vector<TrainingExample>& records);
/// Rendered chat records, blank-line separated.
std::string corpus_to_chat_text(const std::vector<TrainingExample>& records);
std::vector<TrainingExample> parse_corpus_jsonl(std::string_view text);

/// Every SID token of the model (`<a_0>` ... ) one per line, for extending
/// a tokenizer's vocabulary.
std::string sid_vocabulary(const RqModel& model);

}  // namespace sidforge
