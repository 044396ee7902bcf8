#include "grouppool/data.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <random>

namespace grouppool {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
    if (ec) throw DataError("cannot create directory " + parent.string() + ": " + ec.message());
  }
}

}  // namespace

void Clip::validate() const {
  if (T < 1) throw DataError("clip " + std::to_string(id) + ": T must be >= 1, got " + std::to_string(T));
  if (dx < 1) throw DataError("clip " + std::to_string(id) + ": dx must be >= 1, got " + std::to_string(dx));
  if (persons.empty()) throw DataError("clip " + std::to_string(id) + ": no person tracks");
  if (action_labels.size() != persons.size())
    throw DataError("clip " + std::to_string(id) + ": " + std::to_string(action_labels.size()) +
                    " label rows for " + std::to_string(persons.size()) + " persons");
  for (std::size_t i = 0; i < persons.size(); ++i) {
    if (persons[i].size() != static_cast<std::size_t>(T))
      throw DataError("clip " + std::to_string(id) + ": person " + std::to_string(i) +
                      " has " + std::to_string(persons[i].size()) + " steps, expected " +
                      std::to_string(T));
    for (const auto& x : persons[i]) {
      if (x.dim() != dx)
        throw DataError("clip " + std::to_string(id) + ": person " + std::to_string(i) +
                        " feature dim " + std::to_string(x.dim()) + ", expected " + std::to_string(dx));
      if (!all_finite(x.data))
        throw DataError("clip " + std::to_string(id) + ": person " + std::to_string(i) +
                        " has non-finite features");
    }
    if (action_labels[i].size() != static_cast<std::size_t>(T))
      throw DataError("clip " + std::to_string(id) + ": person " + std::to_string(i) +
                      " has " + std::to_string(action_labels[i].size()) + " labels, expected " +
                      std::to_string(T));
    for (int y : action_labels[i])
      if (y < 0)
        throw DataError("clip " + std::to_string(id) + ": negative action label");
  }
  if (activity_label < 0) throw DataError("clip " + std::to_string(id) + ": negative activity label");
  if (subgroups.subgroup_of.size() != persons.size())
    throw DataError("clip " + std::to_string(id) + ": subgroup assignment covers " +
                    std::to_string(subgroups.subgroup_of.size()) + " of " +
                    std::to_string(persons.size()) + " persons");
  try {
    subgroups.validate();
  } catch (const ShapeError& e) {
    throw DataError("clip " + std::to_string(id) + ": " + e.what());
  }
}

bool operator==(const Clip& a, const Clip& b) {
  return a.id == b.id && a.T == b.T && a.dx == b.dx && a.persons == b.persons &&
         a.action_labels == b.action_labels && a.activity_label == b.activity_label &&
         a.subgroups.m == b.subgroups.m && a.subgroups.subgroup_of == b.subgroups.subgroup_of;
}

void GeneratorConfig::validate() const {
  if (n < 1) throw ConfigError("generator: n must be >= 1");
  if (T < 1) throw ConfigError("generator: T must be >= 1");
  if (d_x < 1) throw ConfigError("generator: d_x must be >= 1");
  if (actions < 2) throw ConfigError("generator: need >= 2 action classes");
  if (activities < 2) throw ConfigError("generator: need >= 2 activity classes");
  if (key_agents < 1 || key_agents > n)
    throw ConfigError("generator: key_agents must be in [1, n], got " + std::to_string(key_agents));
  if (subgroups < 1 || subgroups > n)
    throw ConfigError("generator: subgroups must be in [1, n], got " + std::to_string(subgroups));
  if (sigma_signal <= 0.0 || sigma_noise <= 0.0)
    throw ConfigError("generator: noise scales must be positive");
  if (signal_strength <= 0.0) throw ConfigError("generator: signal_strength must be positive");
  if (train_clips < 0 || test_clips < 0) throw ConfigError("generator: negative clip counts");
}

Vector class_direction(int activity, int d_x) {
  Vector dir(d_x);
  if (activity < d_x) {
    dir[activity] = 1.0;  // orthogonal means while classes fit the dimension
    return dir;
  }
  std::mt19937_64 rng(splitmix64(0x646972ULL ^ static_cast<std::uint64_t>(activity)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  double norm2 = 0.0;
  for (auto& x : dir.data) {
    x = gauss(rng);
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : dir.data) x *= inv;
  return dir;
}

int key_action_label(int activity, int actions) { return activity % (actions - 1); }

namespace {

Clip generate_clip(const GeneratorConfig& cfg, int id) {
  // diffuse the id before combining: raw seed^id would make nearby seeds
  // produce permutations of the same clip set
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(id))));
  std::uniform_int_distribution<int> activity_dist(0, cfg.activities - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Clip clip;
  clip.id = id;
  clip.T = cfg.T;
  clip.dx = cfg.d_x;
  clip.activity_label = activity_dist(rng);
  clip.subgroups = SubgroupAssignment::by_order(cfg.n, cfg.subgroups);

  // partial Fisher-Yates: first key_agents entries become the key agents
  std::vector<int> order(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < cfg.key_agents; ++i) {
    std::uniform_int_distribution<int> pick(i, cfg.n - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<bool> is_key(static_cast<std::size_t>(cfg.n), false);
  for (int i = 0; i < cfg.key_agents; ++i) is_key[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  Vector mean = class_direction(clip.activity_label, cfg.d_x);
  for (auto& x : mean.data) x *= cfg.signal_strength;
  const int key_label = key_action_label(clip.activity_label, cfg.actions);

  clip.persons.resize(static_cast<std::size_t>(cfg.n));
  clip.action_labels.resize(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    auto& track = clip.persons[static_cast<std::size_t>(i)];
    auto& labels = clip.action_labels[static_cast<std::size_t>(i)];
    track.reserve(static_cast<std::size_t>(cfg.T));
    const bool key = is_key[static_cast<std::size_t>(i)];
    for (int t = 0; t < cfg.T; ++t) {
      Vector x(cfg.d_x);
      for (int k = 0; k < cfg.d_x; ++k) {
        x[k] = key ? mean[k] + cfg.sigma_signal * gauss(rng)
                   : cfg.sigma_noise * gauss(rng);
      }
      track.push_back(std::move(x));
      labels.push_back(key ? key_label : cfg.actions - 1);
    }
  }
  return clip;
}

}  // namespace

GeneratedData generate(const GeneratorConfig& cfg) {
  cfg.validate();
  GeneratedData out;
  out.train.clips.reserve(static_cast<std::size_t>(cfg.train_clips));
  for (int id = 0; id < cfg.train_clips; ++id) out.train.clips.push_back(generate_clip(cfg, id));
  out.test.clips.reserve(static_cast<std::size_t>(cfg.test_clips));
  for (int id = cfg.train_clips; id < cfg.train_clips + cfg.test_clips; ++id)
    out.test.clips.push_back(generate_clip(cfg, id));
  return out;
}

namespace {

json clip_to_json(const Clip& c) {
  json persons = json::array();
  for (const auto& track : c.persons) {
    json steps = json::array();
    for (const auto& x : track) steps.push_back(x.data);
    persons.push_back(std::move(steps));
  }
  return json{{"v", 1},
              {"id", c.id},
              {"T", c.T},
              {"dx", c.dx},
              {"persons", std::move(persons)},
              {"action_labels", c.action_labels},
              {"activity_label", c.activity_label},
              {"subgroups", json{{"m", c.subgroups.m}, {"assignment", c.subgroups.subgroup_of}}}};
}

Clip clip_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not an object");
  const int v = j.at("v").get<int>();
  if (v != 1) throw DataError("unsupported schema version " + std::to_string(v));
  Clip c;
  c.id = j.at("id").get<int>();
  c.T = j.at("T").get<int>();
  c.dx = j.at("dx").get<int>();
  for (const auto& track : j.at("persons")) {
    std::vector<Vector> steps;
    for (const auto& x : track) {
      Vector vec;
      vec.data = x.get<std::vector<double>>();
      steps.push_back(std::move(vec));
    }
    c.persons.push_back(std::move(steps));
  }
  c.action_labels = j.at("action_labels").get<std::vector<std::vector<int>>>();
  c.activity_label = j.at("activity_label").get<int>();
  const auto& sg = j.at("subgroups");
  c.subgroups.m = sg.at("m").get<int>();
  c.subgroups.subgroup_of = sg.at("assignment").get<std::vector<int>>();
  c.validate();
  return c;
}

}  // namespace

void save_clips(const std::string& path, const Dataset& data) {
  for (const auto& c : data.clips) c.validate();
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const auto& c : data.clips) out << clip_to_json(c).dump() << '\n';
  if (!out) throw DataError("write failed for " + path);
}

Dataset load_clips(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  Dataset data;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      data.clips.push_back(clip_from_json(json::parse(line)));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return data;
}

bool operator==(const TraceRecord& a, const TraceRecord& b) {
  return a.clip_id == b.clip_id && a.t == b.t && a.alphas == b.alphas &&
         a.subgroup_alphas == b.subgroup_alphas && a.pred == b.pred && a.truth == b.truth;
}

void export_traces(const std::string& path, const std::vector<TraceRecord>& records) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const auto& r : records) {
    json j{{"clip_id", r.clip_id}, {"t", r.t}, {"alphas", r.alphas},
           {"pred", r.pred},       {"truth", r.truth}};
    if (!r.subgroup_alphas.empty()) j["subgroup_alphas"] = r.subgroup_alphas;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed for " + path);
}

std::vector<TraceRecord> load_traces(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<TraceRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TraceRecord r;
      r.clip_id = j.at("clip_id").get<int>();
      r.t = j.at("t").get<int>();
      r.alphas = j.at("alphas").get<std::vector<double>>();
      if (j.contains("subgroup_alphas"))
        r.subgroup_alphas = j.at("subgroup_alphas").get<std::vector<double>>();
      r.pred = j.at("pred").get<int>();
      r.truth = j.at("truth").get<int>();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace grouppool
