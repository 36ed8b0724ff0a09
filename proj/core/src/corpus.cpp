#include "sidforge/corpus.hpp"

#include <json.hpp>

#include "sidforge/error.hpp"
#include "sidforge/rng.hpp"

namespace sidforge {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct TaskSpec {
  std::string_view code;
  std::string_view name;
  std::string_view system;
  std::string_view user;
  bool produces_sid;
};

// System instructions and user prompts, byte-identical to
// core/assets/task_templates/t<N>_{system,user}.txt.
constexpr std::array<TaskSpec, 8> kTasks = {{
    {"T1", "Title->SID",
     "You are a semantic ID encoder. Given a product title, generate its corresponding Semantic "
     "ID (SID) sequence.",
     "Product Title: {title}\nGenerate the SID sequence:", true},
    {"T2", "SID->Title",
     "You are a semantic ID decoder. Given a Semantic ID (SID) sequence, generate the "
     "corresponding product title.",
     "SID Sequence: {sid}\nGenerate the product title:", false},
    {"T3", "SID->SID",
     "You are a sequential recommendation model. Given a user's interaction history as SID "
     "sequences, predict the SID of the next item they will interact with.",
     "Interaction History (SIDs): {sid_history}\nPredict the next item's SID:", true},
    {"T4", "Title->SID-seq",
     "You are a sequential recommendation model. Given a user's interaction history as product "
     "titles, predict the SID of the next item they will interact with.",
     "Interaction History (Titles): {title_history}\nPredict the next item's SID:", true},
    {"T5", "SID->Title-seq",
     "You are a sequential recommendation model. Given a user's interaction history as SID "
     "sequences, predict the title of the next item they will interact with.",
     "Interaction History (SIDs): {sid_history}\nPredict the next item's title:", false},
    {"T6", "Title->Title",
     "You are a sequential recommendation model. Given a user's interaction history as product "
     "titles, predict the title of the next item they will interact with.",
     "Interaction History (Titles): {title_history}\nPredict the next item's title:", false},
    {"T7", "VisDesc->SID",
     "You are a recommendation model. Given a VLM-generated visual description of a product "
     "image, generate the corresponding Semantic ID (SID) sequence.",
     "Visual Description: {visual_description}\nGenerate the SID sequence:", true},
    {"T8", "VisDesc->Title",
     "You are a recommendation model. Given a VLM-generated visual description of a product "
     "image, generate the corresponding product title.",
     "Visual Description: {visual_description}\nGenerate the product title:", false},
}};

const TaskSpec& spec(TaskId task) { return kTasks.at(task_index(task)); }

std::string fill(std::string_view tmpl, std::string_view value) {
  const std::size_t open = tmpl.find('{');
  const std::size_t close = tmpl.find('}', open);
  std::string out(tmpl.substr(0, open));
  out += value;
  out += tmpl.substr(close + 1);
  return out;
}

constexpr std::string_view kStart = "<|im_start|>";
constexpr std::string_view kEnd = "<|im_end|>";

bool clean(std::string_view text) {
  return !text.empty() && text.find(kStart) == std::string_view::npos &&
         text.find(kEnd) == std::string_view::npos;
}

bool is_history_task(TaskId t) {
  return t == TaskId::kSidHistoryToSid || t == TaskId::kTitleHistoryToSid ||
         t == TaskId::kSidHistoryToTitle || t == TaskId::kTitleHistoryToTitle;
}

bool sid_history(TaskId t) {
  return t == TaskId::kSidHistoryToSid || t == TaskId::kSidHistoryToTitle;
}

}  // namespace

std::string_view task_code(TaskId task) { return spec(task).code; }
std::string_view task_name(TaskId task) { return spec(task).name; }
std::string_view system_instruction(TaskId task) { return spec(task).system; }
std::string_view user_template(TaskId task) { return spec(task).user; }
bool produces_sid(TaskId task) { return spec(task).produces_sid; }

std::optional<TaskId> parse_task_code(std::string_view code) {
  for (TaskId t : kAllTasks) {
    if (task_code(t) == code) return t;
  }
  return std::nullopt;
}

ExampleSet make_examples(TaskId task, const SplitDataset& split, const ItemCatalog& catalog,
                         const SidAssignment& assignment, std::size_t max_history) {
  ExampleSet set;
  set.task = task;
  const TaskSpec& s = spec(task);

  auto emit = [&](std::string user, std::string assistant, const std::string& provenance) {
    if (!clean(user) || !clean(assistant)) {
      ++set.skipped;
      return;
    }
    set.examples.push_back(
        {task, std::string(s.system), std::move(user), std::move(assistant), provenance});
  };

  if (!is_history_task(task)) {
    const bool visual = task == TaskId::kVisualToSid || task == TaskId::kVisualToTitle;
    for (const auto& item : catalog) {
      const SidSequence* sid = assignment.find(item.item_id);
      if (!sid || (visual && !item.visual_description)) {
        ++set.skipped;
        continue;
      }
      const std::string rendered = render_sid(*sid);
      switch (task) {
        case TaskId::kTitleToSid:
          emit(fill(s.user, item.title), rendered, item.item_id);
          break;
        case TaskId::kSidToTitle:
          emit(fill(s.user, rendered), item.title, item.item_id);
          break;
        case TaskId::kVisualToSid:
          emit(fill(s.user, *item.visual_description), rendered, item.item_id);
          break;
        default:
          emit(fill(s.user, *item.visual_description), item.title, item.item_id);
          break;
      }
    }
    return set;
  }

  for (const auto& user : split.users) {
    const ItemRecord* target = catalog.find(user.validation);
    const SidSequence* target_sid = assignment.find(user.validation);
    std::vector<std::string> history;
    for (auto it = user.train.rbegin(); it != user.train.rend() && history.size() < max_history;
         ++it) {
      const ItemRecord* item = catalog.find(*it);
      const SidSequence* sid = assignment.find(*it);
      if (!item || !sid) continue;
      history.push_back(sid_history(task) ? render_sid(*sid) : item->title);
    }
    if (!target || !target_sid || history.empty()) {
      ++set.skipped;
      continue;
    }
    std::string joined;
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
      if (!joined.empty()) joined += ", ";
      joined += *it;
    }
    emit(fill(s.user, joined), s.produces_sid ? render_sid(*target_sid) : target->title,
         user.user_id);
  }
  return set;
}

ConversationalRecord render_template(const TrainingExample& example) {
  ConversationalRecord record;
  record.task = example.task;
  std::string& t = record.text;
  t.append(kStart).append("system\n").append(example.system).append("\n");
  t.append(kEnd).append("\n");
  t.append(kStart).append("user\n").append(example.user).append("\n");
  t.append(kEnd).append("\n");
  t.append(kStart).append("assistant\n").append(example.assistant).append("\n");
  t.append(kEnd);
  return record;
}

ParsedConversation parse_template(std::string_view text) {
  ParsedConversation out;
  std::size_t pos = 0;
  auto expect = [&](std::string_view token) {
    if (text.substr(pos, token.size()) != token) {
      throw ParseError(0, "chat template: expected '" + std::string(token) + "' at offset " +
                              std::to_string(pos));
    }
    pos += token.size();
  };
  auto block = [&](std::string_view role, std::string& into, bool last) {
    expect(kStart);
    expect(role);
    expect("\n");
    const std::string closing = "\n" + std::string(kEnd);
    const std::size_t stop = text.find(closing, pos);
    if (stop == std::string_view::npos) throw ParseError(0, "chat template: missing <|im_end|>");
    into = std::string(text.substr(pos, stop - pos));
    if (!clean(into)) throw ParseError(0, "chat template: empty or nested block");
    pos = stop + closing.size();
    if (!last) expect("\n");
  };
  block("system", out.system, false);
  block("user", out.user, false);
  block("assistant", out.assistant, true);
  if (pos != text.size()) throw ParseError(0, "chat template: trailing text");
  return out;
}

Corpus sample_corpus(const SplitDataset& split, const ItemCatalog& catalog,
                     const SidAssignment& assignment, const CorpusOptions& options) {
  if (options.records == 0) throw Error("corpus size must be at least 1");
  Corpus corpus;
  std::vector<ExampleSet> pools;
  for (TaskId t : kAllTasks) {
    ExampleSet set = make_examples(t, split, catalog, assignment, options.max_history);
    corpus.available[task_index(t)] = set.examples.size();
    if (set.examples.empty()) {
      corpus.excluded_tasks.push_back(t);
    } else {
      pools.push_back(std::move(set));
    }
  }
  if (pools.empty()) throw Error("no task has any examples; corpus cannot be sampled");
  StreamRng rng(options.seed, Stream::kCorpus);
  corpus.records.reserve(options.records);
  for (std::size_t r = 0; r < options.records; ++r) {
    const auto& pool = pools[rng.below(pools.size())];
    corpus.records.push_back(pool.examples[rng.below(pool.examples.size())]);
  }
  return corpus;
}

std::string corpus_to_jsonl(const std::vector<TrainingExample>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["task"] = task_code(r.task);
    j["system"] = r.system;
    j["user"] = r.user;
    j["assistant"] = r.assistant;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string corpus_to_chat_text(const std::vector<TrainingExample>& records) {
  std::string out;
  for (const auto& r : records) {
    out += render_template(r).text;
    out += "\n\n";
  }
  return out;
}

std::vector<TrainingExample> parse_corpus_jsonl(std::string_view text) {
  std::vector<TrainingExample> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto task = parse_task_code(j.at("task").get<std::string>());
      if (!task) throw ParseError(line_no, "unknown task code");
      out.push_back({*task, j.at("system").get<std::string>(), j.at("user").get<std::string>(),
                     j.at("assistant").get<std::string>(), {}});
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::string sid_vocabulary(const RqModel& model) {
  std::string out;
  for (std::size_t h = 0; h < model.levels(); ++h) {
    for (std::size_t t = 0; t < model.level_sizes()[h]; ++t) {
      out += '<';
      out += static_cast<char>('a' + h);
      out += '_';
      out += std::to_string(t);
      out += ">\n";
    }
  }
  return out;
}

}  // namespace sidforge
