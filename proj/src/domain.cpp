#include "selbias/domain.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

namespace selbias {

std::string_view to_string(PoolKind kind) {
  return kind == PoolKind::letters ? "letters" : "numbers";
}

std::string_view to_string(Pipeline pipeline) {
  return pipeline == Pipeline::direct ? "direct" : "two_step";
}

PoolKind parse_pool_kind(std::string_view text) {
  if (text == "letters") return PoolKind::letters;
  if (text == "numbers") return PoolKind::numbers;
  throw DomainError("unknown pool kind '" + std::string(text) + "'");
}

Pipeline parse_pipeline(std::string_view text) {
  if (text == "direct") return Pipeline::direct;
  if (text == "two_step") return Pipeline::two_step;
  throw DomainError("unknown pipeline '" + std::string(text) + "'");
}

std::optional<int> ObjectPool::index_of(const ObjectLabel& label) const {
  const auto it = std::find(members.begin(), members.end(), label);
  if (it == members.end()) return std::nullopt;
  return static_cast<int>(it - members.begin());
}

ObjectPool make_pool(PoolKind kind) {
  ObjectPool pool;
  pool.kind = kind;
  pool.members.reserve(kPoolSize);
  for (int i = 0; i < kPoolSize; ++i) {
    if (kind == PoolKind::letters) {
      pool.members.emplace_back(std::string(1, static_cast<char>('A' + i)));
    } else {
      pool.members.emplace_back(std::to_string(i + 1));
    }
  }
  return pool;
}

void Condition::validate() const {
  if (select_count < 3) {
    throw DomainError("select_count must be >= 3, got " + std::to_string(select_count));
  }
  if (list_length < select_count) {
    throw DomainError("list_length " + std::to_string(list_length) +
                      " is smaller than select_count " + std::to_string(select_count));
  }
  if (list_length > kPoolSize) {
    throw DomainError("list_length " + std::to_string(list_length) + " exceeds pool size 26");
  }
  if (trials < 1) throw DomainError("trials must be >= 1");
  if (provider_id.empty()) throw DomainError("provider_id is empty");
}

namespace {

Json identity_json(const Condition& c) {
  return Json{{"provider_id", c.provider_id},
              {"model", c.model},
              {"temperature", c.temperature},
              {"list_length", c.list_length},
              {"pool_kind", to_string(c.pool_kind)},
              {"pipeline", to_string(c.pipeline)},
              {"select_count", c.select_count},
              {"shuffle_order", c.shuffle_order}};
}

}  // namespace

std::string Condition::id() const {
  // nlohmann objects are key-sorted, so the dump is canonical.
  return "c" + hex64(fnv1a64(identity_json(*this).dump()));
}

Json to_json(const Condition& c) {
  Json j = identity_json(c);
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  return j;
}

Condition condition_from_json(const Json& j) {
  Condition c;
  c.provider_id = j.at("provider_id").get<std::string>();
  c.model = j.at("model").get<std::string>();
  c.temperature = j.at("temperature").get<double>();
  c.list_length = j.at("list_length").get<int>();
  c.pool_kind = parse_pool_kind(j.at("pool_kind").get<std::string>());
  c.pipeline = parse_pipeline(j.at("pipeline").get<std::string>());
  c.select_count = j.at("select_count").get<int>();
  c.trials = j.value("trials", 1000);
  c.seed = j.value("seed", std::uint64_t{0});
  c.shuffle_order = j.value("shuffle_order", true);
  return c;
}

std::vector<ObjectLabel> InputList::labels() const {
  std::vector<ObjectLabel> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.object);
  return out;
}

InputList InputList::from_labels(std::span<const ObjectLabel> labels) {
  InputList list;
  list.entries.reserve(labels.size());
  int position = 1;
  for (const auto& label : labels) list.entries.push_back({label, position++});
  return list;
}

bool is_valid_input(const InputList& input, const ObjectPool& pool) {
  std::set<ObjectLabel> seen;
  for (std::size_t i = 0; i < input.entries.size(); ++i) {
    const auto& e = input.entries[i];
    if (e.position != static_cast<int>(i) + 1) return false;
    if (!pool.index_of(e.object)) return false;
    if (!seen.insert(e.object).second) return false;
  }
  return true;
}

bool TrialFlags::consistent() const noexcept {
  if (!parsed && (primacy || correspondence || correct_count)) return false;
  if (primacy && !(correspondence && correct_count)) return false;
  return true;
}

Json to_json(const TrialRecord& r) {
  Json input = Json::array();
  for (const auto& e : r.input.entries) input.push_back(e.object.text());

  Json selection = nullptr;
  if (r.selection) {
    selection = Json::array();
    for (const auto& row : r.selection->rows) {
      Json position = nullptr;
      if (row.input_position) position = *row.input_position;
      selection.push_back(Json{{"object", row.object.text()},
                               {"input_position", position},
                               {"output_position", row.output_position}});
    }
  }

  Json j{{"condition_id", r.condition_id},
         {"trial_index", r.trial_index},
         {"input", std::move(input)},
         {"raw_step1", r.raw_step1},
         {"raw_step2", r.raw_step2 ? Json(*r.raw_step2) : Json(nullptr)},
         {"selection", std::move(selection)},
         {"flags",
          {{"parsed", r.flags.parsed},
           {"primacy", r.flags.primacy},
           {"correspondence", r.flags.correspondence},
           {"correct_count", r.flags.correct_count}}}};
  if (r.error) j["error"] = *r.error;
  if (r.started_at) j["started_at"] = *r.started_at;
  if (r.finished_at) j["finished_at"] = *r.finished_at;
  return j;
}

TrialRecord trial_from_json(const Json& j) {
  TrialRecord r;
  r.condition_id = j.at("condition_id").get<std::string>();
  r.trial_index = j.at("trial_index").get<std::int64_t>();
  std::vector<ObjectLabel> labels;
  for (const auto& label : j.at("input")) labels.emplace_back(label.get<std::string>());
  r.input = InputList::from_labels(labels);
  r.raw_step1 = j.at("raw_step1").get<std::string>();
  if (const auto& s2 = j.at("raw_step2"); !s2.is_null()) r.raw_step2 = s2.get<std::string>();
  if (const auto& sel = j.at("selection"); !sel.is_null()) {
    SelectionMatrix matrix;
    std::set<ObjectLabel> seen;
    for (const auto& row : sel) {
      SelectionRow out;
      out.object = ObjectLabel(row.at("object").get<std::string>());
      if (const auto& p = row.at("input_position"); !p.is_null()) out.input_position = p.get<int>();
      out.output_position = row.at("output_position").get<int>();
      if (!seen.insert(out.object).second) matrix.has_duplicates = true;
      matrix.rows.push_back(std::move(out));
    }
    r.selection = std::move(matrix);
  }
  const auto& flags = j.at("flags");
  r.flags.parsed = flags.at("parsed").get<bool>();
  r.flags.primacy = flags.at("primacy").get<bool>();
  r.flags.correspondence = flags.at("correspondence").get<bool>();
  r.flags.correct_count = flags.at("correct_count").get<bool>();
  if (auto it = j.find("error"); it != j.end()) r.error = it->get<std::string>();
  if (auto it = j.find("started_at"); it != j.end()) r.started_at = it->get<std::string>();
  if (auto it = j.find("finished_at"); it != j.end()) r.finished_at = it->get<std::string>();
  return r;
}

std::string to_jsonl(const TrialRecord& record) {
  // Raw model text is not guaranteed to be valid UTF-8.
  return to_json(record).dump(-1, ' ', false, Json::error_handler_t::replace);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t trial_seed(std::uint64_t master, std::string_view condition_id,
                         std::int64_t trial_index) {
  return mix_seed(mix_seed(master, fnv1a64(condition_id)),
                  static_cast<std::uint64_t>(trial_index));
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_index: empty range");
  // Rejection sampling over the largest multiple of bound.
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw > limit);
  return draw % bound;
}

double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

InputList sample_input_list(const ObjectPool& pool, int list_length, Rng& rng,
                            bool shuffle_order) {
  const int pool_size = static_cast<int>(pool.members.size());
  if (list_length < 1 || list_length > pool_size) {
    throw DomainError("list length " + std::to_string(list_length) + " outside [1, " +
                      std::to_string(pool_size) + "]");
  }
  // Partial Fisher-Yates: the first n slots are a uniform random ordered
  // sample without replacement.
  std::vector<int> order(pool_size);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < list_length; ++i) {
    const auto j = i + static_cast<int>(uniform_index(rng, pool_size - i));
    std::swap(order[i], order[j]);
  }
  order.resize(list_length);
  if (!shuffle_order) std::sort(order.begin(), order.end());

  InputList list;
  list.entries.reserve(list_length);
  for (int i = 0; i < list_length; ++i) list.entries.push_back({pool.members[order[i]], i + 1});
  return list;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace selbias
