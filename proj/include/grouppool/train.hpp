#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grouppool/data.hpp"
#include "grouppool/model.hpp"

namespace grouppool {

struct TrainConfig {
  double learning_rate = 1e-3;  // desk-scale default; 1e-5 suits full-size models
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 8;
  int epochs_stage1 = 20;
  int epochs_stage2 = 80;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-tensor ADAM moments, aligned index-for-index with named_tensors().
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;

  static AdamState zeros_like(const std::vector<TensorRef>& refs);
};

// One bias-corrected ADAM update. `grads` aligns with `refs`; when
// person_only is set, tensors outside the person branch are left untouched
// (parameters and moments alike).
void adam_step(std::vector<TensorRef>& refs, const std::vector<std::vector<double>>& grads,
               AdamState& state, const TrainConfig& cfg, bool person_only);

// One metrics record per epoch. Stage 1 runs no group forward pass, so
// group_acc is reported as 0 there.
struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  double loss = 0.0;
  double group_acc = 0.0;
  double person_acc = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> curve;
};

// Stage 1 fits the person LSTM and action head on the action losses alone;
// stage 2 fits everything on the joint loss with fresh optimizer state.
// Deterministic given the seed. Throws NumericError naming the first
// non-finite tensor if the loss or any parameter leaves the finite range.
TrainResult train(const ModelConfig& mc, const TrainConfig& tc,
                  const std::vector<Clip>& dataset);

struct EvalReport {
  double group_acc = 0.0;
  double person_acc = 0.0;
  std::vector<std::vector<long>> confusion;  // [truth][predicted]
  std::vector<double> per_class;             // diagonal / row count; 0 when unseen
};

EvalReport evaluate(const ModelParams& params, const std::vector<Clip>& dataset);

struct BlockCheck {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradcheckReport {
  std::vector<BlockCheck> blocks;  // one entry per named tensor
  double tolerance = 1e-4;
  bool pass = false;
  double worst() const;
};

// Central finite differences versus backward() on a tiny random instance.
GradcheckReport gradcheck(const ModelConfig& cfg, std::uint64_t seed,
                          double tolerance = 1e-4);

// Worker-thread cap from GROUPPOOL_THREADS; hardware count otherwise.
int worker_threads();

}  // namespace grouppool
