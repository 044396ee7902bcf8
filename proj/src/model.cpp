#include "grouppool/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <unordered_map>

namespace grouppool {

using nlohmann::json;

void ModelConfig::validate() const {
  if (d_x < 1 || d_h_person < 1 || d_h_group < 1)
    throw ConfigError("model: feature and hidden dims must be positive");
  if (actions < 2 || activities < 2) throw ConfigError("model: need >= 2 classes per head");
  if (lambda < 0.0) throw ConfigError("model: lambda must be >= 0");
  if (subgroups < 1) throw ConfigError("model: subgroups must be >= 1");
  if (scheme_has_traces(scheme) && attn_hidden < 1)
    throw ConfigError("model: attention hidden dim must be positive for scheme " +
                      scheme_name(scheme));
}

int ModelConfig::pooled_dim() const {
  return scheme == PoolingScheme::kSubgroupGap ? subgroups * person_rep_dim()
                                               : person_rep_dim();
}

int ModelConfig::person_attn_blocks() const {
  switch (scheme) {
    case PoolingScheme::kMax:
    case PoolingScheme::kAvg:
      return 0;
    case PoolingScheme::kGap:
      return 1;
    case PoolingScheme::kHap:
      return hap_shared_person_attn ? 1 : subgroups;
    case PoolingScheme::kSubgroupGap:
      return subgroups;
  }
  throw ConfigError("invalid pooling scheme value");
}

ModelParams::ModelParams(const ModelConfig& cfg) : config(cfg) {
  cfg.validate();
  person_lstm = LstmParams(cfg.d_x, cfg.d_h_person);
  action_head = ClassifierHead(cfg.actions, cfg.person_rep_dim());
  for (int j = 0; j < cfg.person_attn_blocks(); ++j)
    person_attn.emplace_back(cfg.attn_hidden, cfg.person_rep_dim());
  if (cfg.scheme == PoolingScheme::kHap)
    subgroup_attn = AttentionParams(cfg.attn_hidden, cfg.person_rep_dim());
  group_fc_w = Matrix(cfg.d_h_group, cfg.pooled_dim());
  group_fc_b = Vector(cfg.d_h_group);
  group_lstm = LstmParams(cfg.d_h_group, cfg.d_h_group);
  activity_head = ClassifierHead(cfg.activities, cfg.d_h_group);
}

namespace {

void lstm_tensors(const std::string& prefix, LstmParams& p, bool person_branch,
                  std::vector<TensorRef>& out) {
  auto mat = [&](const char* name, Matrix& m) {
    out.push_back({prefix + name, m.rows, m.cols, &m.data, person_branch});
  };
  auto vec = [&](const char* name, Vector& v) {
    out.push_back({prefix + name, v.dim(), 1, &v.data, person_branch});
  };
  mat(".wi", p.wi);
  mat(".ui", p.ui);
  vec(".bi", p.bi);
  mat(".wf", p.wf);
  mat(".uf", p.uf);
  vec(".bf", p.bf);
  mat(".wo", p.wo);
  mat(".uo", p.uo);
  vec(".bo", p.bo);
  mat(".wg", p.wg);
  mat(".ug", p.ug);
  vec(".bg", p.bg);
}

void attn_tensors(const std::string& prefix, AttentionParams& p, std::vector<TensorRef>& out) {
  out.push_back({prefix + ".w", p.w.rows, p.w.cols, &p.w.data, false});
  out.push_back({prefix + ".b", p.b.dim(), 1, &p.b.data, false});
  out.push_back({prefix + ".u", p.u_ctx.dim(), 1, &p.u_ctx.data, false});
}

}  // namespace

std::vector<TensorRef> named_tensors(ModelParams& p) {
  std::vector<TensorRef> out;
  lstm_tensors("person_lstm", p.person_lstm, true, out);
  out.push_back({"action_head.w", p.action_head.w.rows, p.action_head.w.cols,
                 &p.action_head.w.data, true});
  out.push_back({"action_head.b", p.action_head.b.dim(), 1, &p.action_head.b.data, true});
  for (std::size_t j = 0; j < p.person_attn.size(); ++j)
    attn_tensors("person_attn." + std::to_string(j), p.person_attn[j], out);
  if (p.config.scheme == PoolingScheme::kHap)
    attn_tensors("subgroup_attn", p.subgroup_attn, out);
  out.push_back({"group_fc.w", p.group_fc_w.rows, p.group_fc_w.cols, &p.group_fc_w.data, false});
  out.push_back({"group_fc.b", p.group_fc_b.dim(), 1, &p.group_fc_b.data, false});
  lstm_tensors("group_lstm", p.group_lstm, false, out);
  out.push_back({"activity_head.w", p.activity_head.w.rows, p.activity_head.w.cols,
                 &p.activity_head.w.data, false});
  out.push_back({"activity_head.b", p.activity_head.b.dim(), 1, &p.activity_head.b.data, false});
  return out;
}

std::vector<TensorRef> named_tensors(const ModelParams& p) {
  return named_tensors(const_cast<ModelParams&>(p));
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  std::mt19937_64 rng(seed);
  auto gauss_lstm = [&](LstmParams& l) {
    for (Matrix* m : {&l.wi, &l.ui, &l.wf, &l.uf, &l.wo, &l.uo, &l.wg, &l.ug})
      fill_gaussian(m->data, rng, 0.1);
    for (Vector* v : {&l.bi, &l.bf, &l.bo, &l.bg}) fill_gaussian(v->data, rng, 0.1);
  };
  gauss_lstm(p.person_lstm);
  // classifier heads stay zero
  for (auto& attn : p.person_attn) {
    fill_xavier(attn.w, rng);
    fill_gaussian(attn.u_ctx.data, rng, 0.1);
  }
  if (cfg.scheme == PoolingScheme::kHap) {
    fill_xavier(p.subgroup_attn.w, rng);
    fill_gaussian(p.subgroup_attn.u_ctx.data, rng, 0.1);
  }
  fill_xavier(p.group_fc_w, rng);
  gauss_lstm(p.group_lstm);
  return p;
}

BoundModel bind_model(Tape& t, const ModelParams& p) {
  BoundModel b;
  std::unordered_map<std::string, int> by_name;
  auto refs = named_tensors(p);
  b.leaves.reserve(refs.size());
  for (const auto& r : refs) {
    MatValue leaf;
    if (r.cols == 1) {
      leaf.id = t.vec(*r.data).id;
    } else {
      Matrix m(r.rows, r.cols);
      m.data = *r.data;
      leaf = t.mat(m);
    }
    by_name.emplace(r.name, leaf.id);
    b.leaves.push_back(leaf);
  }
  auto mat = [&](const std::string& name) { return MatValue{by_name.at(name)}; };
  auto vec = [&](const std::string& name) { return Value{by_name.at(name)}; };
  auto lstm = [&](const std::string& prefix) {
    LstmNodes n;
    n.wi = mat(prefix + ".wi");
    n.ui = mat(prefix + ".ui");
    n.bi = vec(prefix + ".bi");
    n.wf = mat(prefix + ".wf");
    n.uf = mat(prefix + ".uf");
    n.bf = vec(prefix + ".bf");
    n.wo = mat(prefix + ".wo");
    n.uo = mat(prefix + ".uo");
    n.bo = vec(prefix + ".bo");
    n.wg = mat(prefix + ".wg");
    n.ug = mat(prefix + ".ug");
    n.bg = vec(prefix + ".bg");
    return n;
  };
  b.person_lstm = lstm("person_lstm");
  b.action_head = {mat("action_head.w"), vec("action_head.b")};
  for (std::size_t j = 0; j < p.person_attn.size(); ++j) {
    const std::string prefix = "person_attn." + std::to_string(j);
    b.person_attn.push_back({mat(prefix + ".w"), vec(prefix + ".b"), vec(prefix + ".u")});
  }
  if (p.config.scheme == PoolingScheme::kHap)
    b.subgroup_attn = {mat("subgroup_attn.w"), vec("subgroup_attn.b"), vec("subgroup_attn.u")};
  b.group_fc_w = mat("group_fc.w");
  b.group_fc_b = vec("group_fc.b");
  b.group_lstm = lstm("group_lstm");
  b.activity_head = {mat("activity_head.w"), vec("activity_head.b")};
  return b;
}

PersonForwardResult person_forward(Tape& t, const BoundModel& m, const ModelConfig& cfg,
                                   std::span<const Vector> track) {
  if (track.empty()) throw ShapeError("person_forward: empty track");
  PersonForwardResult out;
  std::vector<Value> xs;
  xs.reserve(track.size());
  for (const auto& x : track) {
    if (x.dim() != cfg.d_x)
      throw ShapeError("person_forward: feature dim " + shape_str(x.dim()) +
                       ", model expects " + shape_str(cfg.d_x));
    xs.push_back(t.vec(x.data));
  }
  auto states = run_sequence(t, m.person_lstm, cfg.d_h_person, xs);
  out.reps.reserve(track.size());
  out.action_probs.reserve(track.size());
  for (std::size_t i = 0; i < track.size(); ++i) {
    std::vector<Value> parts{states[i].h, xs[i]};  // hidden first, then features
    Value rep = t.concat(parts);
    out.reps.push_back(rep);
    out.action_probs.push_back(classify(t, m.action_head, rep));
  }
  return out;
}

std::vector<PersonForwardResult> all_person_forward(Tape& t, const BoundModel& m,
                                                    const ModelConfig& cfg, const Clip& clip) {
  clip.validate();
  std::vector<PersonForwardResult> out;
  out.reserve(static_cast<std::size_t>(clip.n()));
  for (const auto& track : clip.persons) out.push_back(person_forward(t, m, cfg, track));
  return out;
}

namespace {

// Pools person representations for one timestep and fills in the trace.
Value pool_step(Tape& t, const BoundModel& m, const ModelConfig& cfg, const Clip& clip,
                std::span<const Value> reps, AttentionTrace* trace) {
  switch (cfg.scheme) {
    case PoolingScheme::kMax:
      return t.max_pool(reps);
    case PoolingScheme::kAvg:
      return t.avg_pool(reps);
    case PoolingScheme::kGap: {
      auto r = gap(t, m.person_attn.at(0), reps);
      auto a = t.value(r.alpha);
      trace->person_weights.assign(a.begin(), a.end());
      return r.pooled;
    }
    case PoolingScheme::kHap: {
      std::vector<AttnNodes> levels;
      for (int j = 0; j < clip.subgroups.m; ++j)
        levels.push_back(m.person_attn.at(cfg.hap_shared_person_attn ? 0 : static_cast<std::size_t>(j)));
      auto r = hap(t, levels, m.subgroup_attn, reps, clip.subgroups);
      trace->person_weights = person_order_weights(t, r.person_alphas, clip.subgroups);
      auto sa = t.value(r.subgroup_alpha);
      trace->subgroup_weights.assign(sa.begin(), sa.end());
      return r.pooled;
    }
    case PoolingScheme::kSubgroupGap: {
      std::vector<AttnNodes> levels;
      for (int j = 0; j < clip.subgroups.m; ++j)
        levels.push_back(m.person_attn.at(static_cast<std::size_t>(j)));
      auto r = subgroup_gap_concat(t, levels, reps, clip.subgroups);
      trace->person_weights = person_order_weights(t, r.person_alphas, clip.subgroups);
      return r.pooled;
    }
  }
  throw ConfigError("invalid pooling scheme value");
}

}  // namespace

GroupForwardResult group_forward(Tape& t, const BoundModel& m, const ModelConfig& cfg,
                                 const Clip& clip) {
  if (cfg.scheme == PoolingScheme::kHap || cfg.scheme == PoolingScheme::kSubgroupGap) {
    if (clip.subgroups.m != cfg.subgroups)
      throw ShapeError("group_forward: clip has m=" + std::to_string(clip.subgroups.m) +
                       " subgroups, model configured for " + std::to_string(cfg.subgroups));
  }
  GroupForwardResult out;
  out.persons = all_person_forward(t, m, cfg, clip);

  LstmState state = lstm_zero_state(t, cfg.d_h_group);
  out.activity_probs.reserve(static_cast<std::size_t>(clip.T));
  const bool traced = scheme_has_traces(cfg.scheme);
  for (int step = 0; step < clip.T; ++step) {
    std::vector<Value> reps;
    reps.reserve(out.persons.size());
    for (const auto& pf : out.persons) reps.push_back(pf.reps[static_cast<std::size_t>(step)]);
    AttentionTrace trace;
    trace.scheme = scheme_name(cfg.scheme);
    Value pooled = pool_step(t, m, cfg, clip, reps, &trace);
    if (traced) out.traces.push_back(std::move(trace));
    Value g = t.tanh(t.add(t.matvec(m.group_fc_w, pooled), m.group_fc_b));
    state = lstm_step(t, m.group_lstm, state, g);
    out.activity_probs.push_back(classify(t, m.activity_head, state.h));
  }
  return out;
}

Value person_loss(Tape& t, std::span<const PersonForwardResult> persons, const Clip& clip) {
  if (persons.empty()) throw ShapeError("person_loss: no persons");
  std::vector<Value> terms;
  terms.reserve(persons.size() * static_cast<std::size_t>(clip.T));
  for (std::size_t i = 0; i < persons.size(); ++i) {
    for (int step = 0; step < clip.T; ++step) {
      const int label = clip.action_labels[i][static_cast<std::size_t>(step)];
      terms.push_back(t.cross_entropy(persons[i].action_probs[static_cast<std::size_t>(step)], label));
    }
  }
  return t.scale(t.sum(terms), 1.0 / static_cast<double>(terms.size()));
}

Value joint_loss(Tape& t, const GroupForwardResult& fwd, const Clip& clip,
                 const ModelConfig& cfg) {
  Value group_ce;
  if (cfg.group_loss_all_steps) {
    std::vector<Value> terms;
    for (Value probs : fwd.activity_probs)
      terms.push_back(t.cross_entropy(probs, clip.activity_label));
    group_ce = t.scale(t.sum(terms), 1.0 / static_cast<double>(terms.size()));
  } else {
    group_ce = t.cross_entropy(fwd.activity_probs.back(), clip.activity_label);
  }
  Value person_mean = person_loss(t, fwd.persons, clip);
  return t.add(group_ce, t.scale(person_mean, cfg.lambda));
}

int argmax(std::span<const double> xs) {
  if (xs.empty()) throw ShapeError("argmax: empty input");
  return static_cast<int>(std::max_element(xs.begin(), xs.end()) - xs.begin());
}

Prediction predict(const ModelParams& params, const Clip& clip) {
  Tape t;
  auto bound = bind_model(t, params);
  auto fwd = group_forward(t, bound, params.config, clip);
  Prediction out;
  out.activity = argmax(t.value(fwd.activity_probs.back()));
  out.actions.resize(static_cast<std::size_t>(clip.n()));
  for (int i = 0; i < clip.n(); ++i)
    for (int step = 0; step < clip.T; ++step)
      out.actions[static_cast<std::size_t>(i)].push_back(
          argmax(t.value(fwd.persons[static_cast<std::size_t>(i)].action_probs[static_cast<std::size_t>(step)])));
  out.traces = std::move(fwd.traces);
  return out;
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"d_x", c.d_x},
              {"d_h_person", c.d_h_person},
              {"d_h_group", c.d_h_group},
              {"attn_hidden", c.attn_hidden},
              {"actions", c.actions},
              {"activities", c.activities},
              {"subgroups", c.subgroups},
              {"scheme", scheme_name(c.scheme)},
              {"lambda", c.lambda},
              {"hap_shared_person_attn", c.hap_shared_person_attn},
              {"group_loss_all_steps", c.group_loss_all_steps}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_x = j.at("d_x").get<int>();
  c.d_h_person = j.at("d_h_person").get<int>();
  c.d_h_group = j.at("d_h_group").get<int>();
  c.attn_hidden = j.at("attn_hidden").get<int>();
  c.actions = j.at("actions").get<int>();
  c.activities = j.at("activities").get<int>();
  c.subgroups = j.at("subgroups").get<int>();
  c.scheme = parse_scheme(j.at("scheme").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.hap_shared_person_attn = j.at("hap_shared_person_attn").get<bool>();
  c.group_loss_all_steps = j.at("group_loss_all_steps").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << json{{"v", 1}, {"kind", "checkpoint"}, {"model", config_to_json(params.config)}}.dump()
      << '\n';
  for (const auto& r : named_tensors(params)) {
    if (!all_finite(*r.data)) throw DataError("checkpoint: " + r.name + " has non-finite values");
    out << json{{"name", r.name}, {"rows", r.rows}, {"cols", r.cols}, {"data", *r.data}}.dump()
        << '\n';
  }
  if (!out) throw DataError("write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  int lineno = 0;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  try {
    if (!next_line()) throw DataError("empty checkpoint");
    const json header = json::parse(line);
    if (header.value("kind", "") != "checkpoint" || header.at("v").get<int>() != 1)
      throw DataError("not a v1 checkpoint header");
    ModelParams params(config_from_json(header.at("model")));
    auto refs = named_tensors(params);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < refs.size(); ++i) index.emplace(refs[i].name, i);
    std::vector<bool> seen(refs.size(), false);
    while (next_line()) {
      const json j = json::parse(line);
      const auto name = j.at("name").get<std::string>();
      auto it = index.find(name);
      if (it == index.end()) throw DataError("unknown tensor '" + name + "'");
      if (seen[it->second]) throw DataError("duplicate tensor '" + name + "'");
      auto& ref = refs[it->second];
      if (j.at("rows").get<int>() != ref.rows || j.at("cols").get<int>() != ref.cols)
        throw DataError("tensor '" + name + "' has shape " +
                        shape_str(j.at("rows").get<int>(), j.at("cols").get<int>()) +
                        ", expected " + shape_str(ref.rows, ref.cols));
      *ref.data = j.at("data").get<std::vector<double>>();
      if (ref.data->size() != ref.size())
        throw DataError("tensor '" + name + "' carries " + std::to_string(ref.data->size()) +
                        " values, expected " + std::to_string(ref.size()));
      seen[it->second] = true;
    }
    for (std::size_t i = 0; i < refs.size(); ++i)
      if (!seen[i]) throw DataError("missing tensor '" + refs[i].name + "'");
    return params;
  } catch (const DataError& e) {
    throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
  } catch (const json::exception& e) {
    throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

}  // namespace grouppool
