#pragma once

#include <span>
#include <string>
#include <vector>

#include "grouppool/tape.hpp"

namespace grouppool {

enum class PoolingScheme { kMax, kAvg, kGap, kHap, kSubgroupGap };

// Wire names: max, avg, gap, hap, subgroup-gap.
PoolingScheme parse_scheme(const std::string& name);
std::string scheme_name(PoolingScheme s);
bool scheme_has_traces(PoolingScheme s);

// One attention module: score_i = tanh(W p_i + b) . u_ctx, weights = softmax.
struct AttentionParams {
  Matrix w;      // [attn_dim x input_dim]
  Vector b;      // [attn_dim]
  Vector u_ctx;  // [attn_dim], learned context

  AttentionParams() = default;
  AttentionParams(int attn_dim, int input_dim);
};

struct AttnNodes {
  MatValue w;
  Value b;
  Value u;
};

AttnNodes bind(Tape& t, const AttentionParams& p);

// Maps each person index to a subgroup id in [0, m). Every subgroup must be
// non-empty.
struct SubgroupAssignment {
  std::vector<int> subgroup_of;
  int m = 0;

  void validate() const;
  // Contiguous split by person order; earlier subgroups take the remainder.
  static SubgroupAssignment by_order(int n, int m);
  // Person indices per subgroup, ascending within each.
  std::vector<std::vector<int>> members() const;
};

// Attention weights recorded for one timestep. person_weights are in person
// order; for hierarchical and per-subgroup schemes each weight is the
// person's share within its own subgroup. subgroup_weights only for HAP.
struct AttentionTrace {
  std::string scheme;
  std::vector<double> person_weights;
  std::vector<double> subgroup_weights;
};

struct GapResult {
  Value pooled;  // dim d
  Value alpha;   // dim n, positive, sums to 1
};

GapResult gap(Tape& t, const AttnNodes& p, std::span<const Value> persons);

struct HapResult {
  Value pooled;                      // dim d
  std::vector<Value> person_alphas;  // one per subgroup, dim n_j
  Value subgroup_alpha;              // dim m
};

// person_level holds one AttnNodes per subgroup; pass the same nodes m times
// to share parameters across subgroups.
HapResult hap(Tape& t, std::span<const AttnNodes> person_level,
              const AttnNodes& subgroup_level, std::span<const Value> persons,
              const SubgroupAssignment& groups);

struct SubgroupGapResult {
  Value pooled;                      // dim m*d, subgroup blocks in id order
  std::vector<Value> person_alphas;  // one per subgroup, dim n_j
};

SubgroupGapResult subgroup_gap_concat(Tape& t, std::span<const AttnNodes> per_subgroup,
                                      std::span<const Value> persons,
                                      const SubgroupAssignment& groups);

// Flattens per-subgroup weights back into person order.
std::vector<double> person_order_weights(const Tape& t,
                                         std::span<const Value> person_alphas,
                                         const SubgroupAssignment& groups);

}  // namespace grouppool
