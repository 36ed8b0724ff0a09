#include "sidforge/synthgen.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "sidforge/error.hpp"
#include "sidforge/rng.hpp"

namespace sidforge {

using nlohmann::json;
using nlohmann::ordered_json;

void SynthConfig::validate() const {
  if (num_items == 0 || num_users == 0 || num_categories == 0) {
    throw Error("SynthConfig: counts must be positive");
  }
  if (num_categories > num_items) throw Error("SynthConfig: num_categories exceeds num_items");
  if (dim < 2) throw Error("SynthConfig: dim must be at least 2");
  if (!(enrichment_level >= 0.0 && enrichment_level <= 1.0)) {
    throw Error("SynthConfig: enrichment_level must lie in [0, 1]");
  }
  if (!(intra_category_noise > 0.0)) throw Error("SynthConfig: intra_category_noise must be > 0");
  if (!(category_separation >= 0.0)) throw Error("SynthConfig: category_separation must be >= 0");
  if (!(informative_fraction > 0.0 && informative_fraction <= 1.0)) {
    throw Error("SynthConfig: informative_fraction must lie in (0, 1]");
  }
  if (look_alike_group == 0) throw Error("SynthConfig: look_alike_group must be >= 1");
  if (min_events == 0 || min_events > max_events) {
    throw Error("SynthConfig: events_per_user must be a range [min, max] with 1 <= min <= max");
  }
  if (!(dominant_transition >= 0.0 && dominant_transition <= 1.0)) {
    throw Error("SynthConfig: dominant_transition must lie in [0, 1]");
  }
  if (transition) {
    if (transition->size() != num_categories) {
      throw Error("SynthConfig: transition matrix must be num_categories x num_categories");
    }
    for (const auto& row : *transition) {
      if (row.size() != num_categories) {
        throw Error("SynthConfig: transition matrix must be num_categories x num_categories");
      }
      double sum = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) throw Error("SynthConfig: transition probabilities must be >= 0");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw Error("SynthConfig: transition rows must sum to 1");
    }
  }
}

SynthConfig SynthConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("SynthConfig: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("SynthConfig: expected a JSON object");
  SynthConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_items") cfg.num_items = value.get<std::size_t>();
      else if (key == "num_users") cfg.num_users = value.get<std::size_t>();
      else if (key == "dim") cfg.dim = value.get<std::size_t>();
      else if (key == "num_categories") cfg.num_categories = value.get<std::size_t>();
      else if (key == "enrichment_level") cfg.enrichment_level = value.get<double>();
      else if (key == "intra_category_noise") cfg.intra_category_noise = value.get<double>();
      else if (key == "category_separation") cfg.category_separation = value.get<double>();
      else if (key == "informative_fraction") cfg.informative_fraction = value.get<double>();
      else if (key == "look_alike_group") cfg.look_alike_group = value.get<std::size_t>();
      else if (key == "events_per_user") {
        const auto range = value.get<std::vector<std::size_t>>();
        if (range.size() != 2) throw Error("SynthConfig: events_per_user must be [min, max]");
        cfg.min_events = range[0];
        cfg.max_events = range[1];
      } else if (key == "dominant_transition") cfg.dominant_transition = value.get<double>();
      else if (key == "dominant_shift") cfg.dominant_shift = value.get<std::size_t>();
      else if (key == "transition") {
        if (!value.is_null()) cfg.transition = value.get<std::vector<std::vector<double>>>();
      } else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw Error("SynthConfig: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(std::string("SynthConfig: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string SynthConfig::to_json() const {
  ordered_json j;
  j["num_items"] = num_items;
  j["num_users"] = num_users;
  j["dim"] = dim;
  j["num_categories"] = num_categories;
  j["enrichment_level"] = enrichment_level;
  j["intra_category_noise"] = intra_category_noise;
  j["category_separation"] = category_separation;
  j["informative_fraction"] = informative_fraction;
  j["look_alike_group"] = look_alike_group;
  j["events_per_user"] = {min_events, max_events};
  j["dominant_transition"] = dominant_transition;
  j["dominant_shift"] = dominant_shift;
  j["transition"] = transition ? ordered_json(*transition) : ordered_json(nullptr);
  j["seed"] = seed;
  return j.dump();
}

std::vector<std::vector<double>> transition_matrix(const SynthConfig& config) {
  if (config.transition) return *config.transition;
  const std::size_t c = config.num_categories;
  std::vector<std::vector<double>> t(c, std::vector<double>(c, 0.0));
  if (c == 1) {
    t[0][0] = 1.0;
    return t;
  }
  const double rest = (1.0 - config.dominant_transition) / static_cast<double>(c - 1);
  for (std::size_t from = 0; from < c; ++from) {
    for (std::size_t to = 0; to < c; ++to) t[from][to] = rest;
    t[from][(from + config.dominant_shift) % c] = config.dominant_transition;
  }
  return t;
}

namespace {

constexpr std::array<std::string_view, 16> kNouns = {
    "Soccer Ball", "Face Serum",  "Headphones",    "Yoga Mat",   "Guitar Strings", "Lipstick",
    "Tent",        "Drum Sticks", "Running Shoes", "Shampoo",    "Water Bottle",   "Keyboard",
    "Sunscreen",   "Backpack",    "Microphone",    "Hair Dryer",
};
constexpr std::array<std::string_view, 8> kBrands = {
    "Acme", "Northwind", "Contoso", "Fabrikam", "Tailspin", "Litware", "Proseware", "Adatum",
};
constexpr std::array<std::string_view, 8> kAdjectives = {
    "Durable", "Lightweight", "Premium", "Compact", "Classic", "Professional", "Eco", "Deluxe",
};
constexpr std::array<std::string_view, 8> kColors = {
    "black", "white", "red", "blue", "yellow", "green", "silver", "pink",
};
constexpr std::array<std::string_view, 6> kMotives = {
    "everyday practice",      "gift giving",         "beginner training",
    "professional use",       "outdoor recreation",  "self-care routines",
};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& words, StreamRng& rng) {
  return words[rng.below(N)];
}

std::string category_name(std::size_t c) {
  std::string name(kNouns[c % kNouns.size()]);
  if (c >= kNouns.size()) name += " " + std::to_string(c / kNouns.size() + 1);
  return name;
}

std::string padded_id(char prefix, std::size_t index, std::size_t width) {
  std::string digits = std::to_string(index);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

std::size_t id_width(std::size_t count) { return std::max<std::size_t>(6, std::to_string(count).size()); }

}  // namespace

// Item-specific share of the noise variance at enrichment 0.
constexpr double kLookAlikeFloor = 0.1;

SynthCatalog generate_catalog(const SynthConfig& config) {
  config.validate();
  const std::size_t c_count = config.num_categories;
  const std::size_t dim = config.dim;
  const auto informative = std::min<std::size_t>(
      dim, std::max<std::size_t>(1, static_cast<std::size_t>(
                                        std::lround(config.informative_fraction * dim))));
  const double e = config.enrichment_level;
  // Gaussian centers in `informative` dims have expected pairwise distance
  // sqrt(2 * informative) * scale.
  const double scale = config.category_separation * (1.0 + 2.0 * e) /
                       std::sqrt(2.0 * static_cast<double>(informative));
  const double informative_sd = config.intra_category_noise * (1.5 - e);
  // Item-specific detail (visual attributes, interest tags) that separates
  // look-alike items; it grows with enrichment.
  const double detail_sd = config.intra_category_noise * (0.5 + e);
  const double own_share = config.look_alike_group == 1 ? 1.0 : kLookAlikeFloor + (1.0 - kLookAlikeFloor) * e;
  const double own_weight = std::sqrt(own_share);
  const double shared_weight = std::sqrt(1.0 - own_share);

  SynthCatalog out;
  std::vector<std::vector<double>> centers(c_count, std::vector<double>(informative));
  for (std::size_t c = 0; c < c_count; ++c) {
    StreamRng rng(config.seed, Stream::kCatalogCenters, c);
    for (double& v : centers[c]) v = rng.normal() * scale;
    out.category_names.push_back(category_name(c));
  }

  std::vector<std::string> ids;
  std::vector<float> values;
  values.reserve(config.num_items * dim);
  const std::size_t width = id_width(config.num_items);
  for (std::size_t i = 0; i < config.num_items; ++i) {
    const std::size_t c = i % c_count;
    // Noise = shared look-alike part + item-specific part; the item share
    // of the variance grows with enrichment while the marginal sd is fixed.
    const std::size_t group = c + c_count * ((i / c_count) / config.look_alike_group);
    StreamRng shared(config.seed, Stream::kLookAlikeGroups, group);
    StreamRng own(config.seed, Stream::kCatalogItems, 2 * i);
    for (std::size_t j = 0; j < dim; ++j) {
      const double z = shared_weight * shared.normal() + own_weight * own.normal();
      values.push_back(static_cast<float>(j < informative ? centers[c][j] + informative_sd * z
                                                          : detail_sd * z));
    }

    StreamRng text(config.seed, Stream::kCatalogItems, 2 * i + 1);
    const std::string& noun = out.category_names[c];
    const auto brand = pick(kBrands, text);
    const auto adjective = pick(kAdjectives, text);
    const auto color = pick(kColors, text);
    ItemRecord item;
    item.item_id = padded_id('i', i, width);
    item.category = noun;
    item.title = std::string(brand) + " " + std::string(adjective) + " " + noun + " " +
                 std::to_string(100 + text.below(900));
    item.description = std::string(adjective) + " " + noun + " by " + std::string(brand) +
                       ", suited for " + std::string(pick(kMotives, text)) + ".";
    if (e > 0.0) {
      item.visual_description = "A " + std::string(color) + " " + noun +
                                " photographed on a plain background, " +
                                std::string(adjective) + " finish clearly visible.";
    }
    if (e >= 0.5) {
      item.interests = {std::string(pick(kMotives, text)) + " with a " + noun,
                        "buyers who value " + std::string(adjective) + " " + std::string(color) +
                            " gear"};
    }
    ids.push_back(item.item_id);
    out.catalog.add(std::move(item));
    out.labels.push_back(c);
  }
  out.embeddings = EmbeddingSet(std::move(ids), dim, std::move(values));
  return out;
}

InteractionLog generate_interactions(const SynthCatalog& synth, const SynthConfig& config) {
  config.validate();
  const auto matrix = transition_matrix(config);
  const std::size_t c_count = config.num_categories;
  std::vector<std::vector<std::size_t>> by_category(c_count);
  for (std::size_t i = 0; i < synth.labels.size(); ++i) by_category[synth.labels[i]].push_back(i);

  auto next_category = [&](std::size_t from, StreamRng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t last = from;
    for (std::size_t to = 0; to < c_count; ++to) {
      if (matrix[from][to] <= 0.0) continue;
      acc += matrix[from][to];
      last = to;
      if (u < acc) return to;
    }
    return last;
  };

  InteractionLog log;
  const std::size_t width = id_width(config.num_users);
  for (std::size_t u = 0; u < config.num_users; ++u) {
    StreamRng rng(config.seed, Stream::kInteractions, u);
    const std::string user = padded_id('u', u, width);
    const std::size_t events =
        config.min_events + rng.below(config.max_events - config.min_events + 1);
    std::size_t category = rng.below(c_count);
    std::int64_t t = 1'600'000'000 + static_cast<std::int64_t>(rng.below(30 * 86400));
    for (std::size_t k = 0; k < events; ++k) {
      const auto& pool = by_category[category];
      const std::size_t item = pool[rng.below(pool.size())];
      log.events.push_back({user, synth.catalog[item].item_id, t});
      t += 1 + static_cast<std::int64_t>(rng.below(86400));
      category = next_category(category, rng);
    }
  }
  return log;
}

}  // namespace sidforge
