#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grouppool/data.hpp"
#include "grouppool/layers.hpp"
#include "grouppool/pooling.hpp"

namespace grouppool {

struct ModelConfig {
  int d_x = 12;
  int d_h_person = 32;
  int d_h_group = 16;
  int attn_hidden = 16;
  int actions = 5;     // per-person classes, last doubles as background
  int activities = 4;  // group classes
  int subgroups = 2;
  PoolingScheme scheme = PoolingScheme::kGap;
  double lambda = 2.0;
  bool hap_shared_person_attn = false;  // ablation: one person-level module
  bool group_loss_all_steps = false;    // default: final timestep only

  void validate() const;
  int person_rep_dim() const { return d_x + d_h_person; }
  int pooled_dim() const;
  // Person-level attention modules this scheme owns (0 for max/avg).
  int person_attn_blocks() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Every learnable tensor. Construction gives zeroed tensors of the right
// shapes; init_params draws the starting values.
struct ModelParams {
  ModelConfig config;
  LstmParams person_lstm;
  ClassifierHead action_head;
  std::vector<AttentionParams> person_attn;
  AttentionParams subgroup_attn;  // present only for the hierarchical scheme
  Matrix group_fc_w;
  Vector group_fc_b;
  LstmParams group_lstm;
  ClassifierHead activity_head;

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& cfg);
};

// LSTMs and context vectors start Gaussian(0, 0.1); attention and FC
// matrices Xavier-uniform; classifier heads and biases zero.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Stable view over every tensor: unique name, shape, data pointer, and
// whether it belongs to the person branch (stage-1 trainable set).
// Checkpoints, the optimizer, and gradient extraction all share this order.
struct TensorRef {
  std::string name;
  int rows = 0;
  int cols = 1;
  std::vector<double>* data = nullptr;
  bool person_branch = false;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

std::vector<TensorRef> named_tensors(ModelParams& p);
// Read-only callers: the returned pointers must not be written through.
std::vector<TensorRef> named_tensors(const ModelParams& p);

// Tape leaves for one forward/backward pass. `leaves` is aligned with
// named_tensors order; grads are read back through it.
struct BoundModel {
  LstmNodes person_lstm;
  HeadNodes action_head;
  std::vector<AttnNodes> person_attn;
  AttnNodes subgroup_attn{};
  MatValue group_fc_w{};
  Value group_fc_b{};
  LstmNodes group_lstm;
  HeadNodes activity_head;
  std::vector<MatValue> leaves;
};

BoundModel bind_model(Tape& t, const ModelParams& p);

struct PersonForwardResult {
  std::vector<Value> reps;          // [T], each d_x + d_h_person
  std::vector<Value> action_probs;  // [T], each `actions`
};

PersonForwardResult person_forward(Tape& t, const BoundModel& m, const ModelConfig& cfg,
                                   std::span<const Vector> track);

struct GroupForwardResult {
  std::vector<PersonForwardResult> persons;  // [n]
  std::vector<Value> activity_probs;         // [T]
  std::vector<AttentionTrace> traces;        // [T]; empty for max/avg
};

// Person branch only; enough to build the stage-1 loss.
std::vector<PersonForwardResult> all_person_forward(Tape& t, const BoundModel& m,
                                                    const ModelConfig& cfg, const Clip& clip);

GroupForwardResult group_forward(Tape& t, const BoundModel& m, const ModelConfig& cfg,
                                 const Clip& clip);

// Mean action cross-entropy over persons and timesteps.
Value person_loss(Tape& t, std::span<const PersonForwardResult> persons, const Clip& clip);

// Group cross-entropy (final timestep unless group_loss_all_steps) plus
// lambda times the mean person loss.
Value joint_loss(Tape& t, const GroupForwardResult& fwd, const Clip& clip,
                 const ModelConfig& cfg);

// First maximal index; exact ties go to the lower class.
int argmax(std::span<const double> xs);

struct Prediction {
  int activity = 0;
  std::vector<std::vector<int>> actions;  // [n][T]
  std::vector<AttentionTrace> traces;     // [T]; empty for max/avg
};

Prediction predict(const ModelParams& params, const Clip& clip);

// Header line with the config, then one record per tensor in registry
// order; identical params serialize to identical bytes.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace grouppool
