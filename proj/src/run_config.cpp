#include "grouppool/run_config.hpp"

#include <fstream>

#include <json.hpp>

namespace grouppool {

using nlohmann::json;

namespace {

std::string joined(const std::string& dir, const char* leaf) {
  if (dir.empty()) return leaf;
  return dir.back() == '/' ? dir + leaf : dir + "/" + leaf;
}

// Pulls `key` out of `obj` if present; whatever remains afterwards is
// unknown and gets reported.
template <typename T>
void take(json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
  obj.erase(it);
}

void reject_leftovers(const json& obj, const std::string& where) {
  if (obj.empty()) return;
  throw ConfigError("unknown key \"" + obj.begin().key() + "\" in section " + where);
}

void parse_model(json obj, ModelConfig& m) {
  take(obj, "d_x", m.d_x, "model");
  take(obj, "d_h_person", m.d_h_person, "model");
  take(obj, "d_h_group", m.d_h_group, "model");
  take(obj, "attn_hidden", m.attn_hidden, "model");
  take(obj, "actions", m.actions, "model");
  take(obj, "activities", m.activities, "model");
  take(obj, "subgroups", m.subgroups, "model");
  take(obj, "lambda", m.lambda, "model");
  take(obj, "hap_shared_person_attn", m.hap_shared_person_attn, "model");
  take(obj, "group_loss_all_steps", m.group_loss_all_steps, "model");
  std::string scheme;
  take(obj, "scheme", scheme, "model");
  if (!scheme.empty()) m.scheme = parse_scheme(scheme);
  reject_leftovers(obj, "model");
}

void parse_train(json obj, TrainConfig& t) {
  take(obj, "learning_rate", t.learning_rate, "train");
  take(obj, "beta1", t.beta1, "train");
  take(obj, "beta2", t.beta2, "train");
  take(obj, "eps", t.eps, "train");
  take(obj, "batch_size", t.batch_size, "train");
  take(obj, "epochs_stage1", t.epochs_stage1, "train");
  take(obj, "epochs_stage2", t.epochs_stage2, "train");
  take(obj, "seed", t.seed, "train");
  reject_leftovers(obj, "train");
}

void parse_generator(json obj, GeneratorConfig& g) {
  take(obj, "n", g.n, "generator");
  take(obj, "T", g.T, "generator");
  take(obj, "d_x", g.d_x, "generator");
  take(obj, "actions", g.actions, "generator");
  take(obj, "activities", g.activities, "generator");
  take(obj, "key_agents", g.key_agents, "generator");
  take(obj, "subgroups", g.subgroups, "generator");
  take(obj, "sigma_signal", g.sigma_signal, "generator");
  take(obj, "sigma_noise", g.sigma_noise, "generator");
  take(obj, "signal_strength", g.signal_strength, "generator");
  take(obj, "train_clips", g.train_clips, "generator");
  take(obj, "test_clips", g.test_clips, "generator");
  take(obj, "seed", g.seed, "generator");
  reject_leftovers(obj, "generator");
}

void parse_paths(json obj, RunPaths& p) {
  take(obj, "out_dir", p.out_dir, "paths");
  take(obj, "train_data", p.train_data, "paths");
  take(obj, "test_data", p.test_data, "paths");
  take(obj, "checkpoint", p.checkpoint, "paths");
  take(obj, "metrics", p.metrics, "paths");
  take(obj, "traces", p.traces, "paths");
  take(obj, "report", p.report, "paths");
  reject_leftovers(obj, "paths");
}

}  // namespace

std::string RunPaths::train_data_path() const {
  return train_data.empty() ? joined(out_dir, "train.jsonl") : train_data;
}
std::string RunPaths::test_data_path() const {
  return test_data.empty() ? joined(out_dir, "test.jsonl") : test_data;
}
std::string RunPaths::checkpoint_path() const {
  return checkpoint.empty() ? joined(out_dir, "checkpoint.jsonl") : checkpoint;
}
std::string RunPaths::metrics_path() const {
  return metrics.empty() ? joined(out_dir, "metrics.jsonl") : metrics;
}
std::string RunPaths::traces_path() const {
  return traces.empty() ? joined(out_dir, "traces.jsonl") : traces;
}
std::string RunPaths::report_path() const {
  return report.empty() ? joined(out_dir, "report.json") : report;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  generator.validate();
  if (model.d_x != generator.d_x)
    throw ConfigError("model.d_x and generator.d_x disagree (" + std::to_string(model.d_x) +
                      " vs " + std::to_string(generator.d_x) + ")");
  if (model.actions != generator.actions)
    throw ConfigError("model.actions and generator.actions disagree");
  if (model.activities != generator.activities)
    throw ConfigError("model.activities and generator.activities disagree");
  if (model.subgroups != generator.subgroups)
    throw ConfigError("model.subgroups and generator.subgroups disagree");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError(path + ": top level must be an object");

  RunConfig cfg;
  if (auto it = root.find("model"); it != root.end()) {
    parse_model(*it, cfg.model);
    root.erase(it);
  }
  if (auto it = root.find("train"); it != root.end()) {
    parse_train(*it, cfg.train);
    root.erase(it);
  }
  if (auto it = root.find("generator"); it != root.end()) {
    parse_generator(*it, cfg.generator);
    root.erase(it);
  }
  if (auto it = root.find("paths"); it != root.end()) {
    parse_paths(*it, cfg.paths);
    root.erase(it);
  }
  reject_leftovers(root, "top level");
  return cfg;
}

}  // namespace grouppool
