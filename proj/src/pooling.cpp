#include "grouppool/pooling.hpp"

#include <algorithm>

namespace grouppool {

PoolingScheme parse_scheme(const std::string& name) {
  if (name == "max") return PoolingScheme::kMax;
  if (name == "avg") return PoolingScheme::kAvg;
  if (name == "gap") return PoolingScheme::kGap;
  if (name == "hap") return PoolingScheme::kHap;
  if (name == "subgroup-gap") return PoolingScheme::kSubgroupGap;
  throw ConfigError("unknown pooling scheme '" + name +
                    "' (expected max, avg, gap, hap, subgroup-gap)");
}

std::string scheme_name(PoolingScheme s) {
  switch (s) {
    case PoolingScheme::kMax: return "max";
    case PoolingScheme::kAvg: return "avg";
    case PoolingScheme::kGap: return "gap";
    case PoolingScheme::kHap: return "hap";
    case PoolingScheme::kSubgroupGap: return "subgroup-gap";
  }
  throw ConfigError("invalid pooling scheme value");
}

bool scheme_has_traces(PoolingScheme s) {
  return s == PoolingScheme::kGap || s == PoolingScheme::kHap ||
         s == PoolingScheme::kSubgroupGap;
}

AttentionParams::AttentionParams(int attn_dim, int input_dim)
    : w(attn_dim, input_dim), b(attn_dim), u_ctx(attn_dim) {
  if (attn_dim < 1 || input_dim < 1)
    throw ShapeError("AttentionParams: dims must be positive, got attn " +
                     std::to_string(attn_dim) + ", input " + std::to_string(input_dim));
}

AttnNodes bind(Tape& t, const AttentionParams& p) {
  return {t.mat(p.w), t.vec(p.b.data), t.vec(p.u_ctx.data)};
}

void SubgroupAssignment::validate() const {
  if (m < 1) throw ShapeError("SubgroupAssignment: m must be >= 1, got " + std::to_string(m));
  std::vector<int> counts(static_cast<std::size_t>(m), 0);
  for (std::size_t i = 0; i < subgroup_of.size(); ++i) {
    const int g = subgroup_of[i];
    if (g < 0 || g >= m)
      throw ShapeError("SubgroupAssignment: person " + std::to_string(i) +
                       " has subgroup " + std::to_string(g) + ", valid range [0," +
                       std::to_string(m) + ")");
    ++counts[static_cast<std::size_t>(g)];
  }
  for (int j = 0; j < m; ++j)
    if (counts[static_cast<std::size_t>(j)] == 0)
      throw ShapeError("SubgroupAssignment: subgroup " + std::to_string(j) + " is empty");
}

SubgroupAssignment SubgroupAssignment::by_order(int n, int m) {
  if (m < 1 || n < m)
    throw ShapeError("SubgroupAssignment::by_order: need n >= m >= 1, got n=" +
                     std::to_string(n) + ", m=" + std::to_string(m));
  SubgroupAssignment a;
  a.m = m;
  a.subgroup_of.resize(static_cast<std::size_t>(n));
  const int base = n / m, extra = n % m;
  int person = 0;
  for (int j = 0; j < m; ++j) {
    const int size = base + (j < extra ? 1 : 0);
    for (int k = 0; k < size; ++k) a.subgroup_of[static_cast<std::size_t>(person++)] = j;
  }
  return a;
}

std::vector<std::vector<int>> SubgroupAssignment::members() const {
  validate();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < subgroup_of.size(); ++i)
    out[static_cast<std::size_t>(subgroup_of[i])].push_back(static_cast<int>(i));
  return out;
}

GapResult gap(Tape& t, const AttnNodes& p, std::span<const Value> persons) {
  if (persons.empty()) throw ShapeError("gap: empty person set");
  std::vector<Value> scores;
  scores.reserve(persons.size());
  for (Value person : persons) {
    Value u = t.tanh(t.add(t.matvec(p.w, person), p.b));
    scores.push_back(t.dot(u, p.u));
  }
  Value alpha = t.softmax(t.concat(scores));
  Value pooled = t.weighted_sum(persons, alpha);
  return {pooled, alpha};
}

HapResult hap(Tape& t, std::span<const AttnNodes> person_level,
              const AttnNodes& subgroup_level, std::span<const Value> persons,
              const SubgroupAssignment& groups) {
  if (persons.size() != groups.subgroup_of.size())
    throw ShapeError("hap: " + std::to_string(persons.size()) + " persons vs assignment of " +
                     std::to_string(groups.subgroup_of.size()));
  if (static_cast<int>(person_level.size()) != groups.m)
    throw ShapeError("hap: " + std::to_string(person_level.size()) +
                     " person-level parameter sets for m=" + std::to_string(groups.m));
  auto members = groups.members();

  HapResult r;
  std::vector<Value> subgroup_vecs;
  for (int j = 0; j < groups.m; ++j) {
    std::vector<Value> sub;
    for (int i : members[static_cast<std::size_t>(j)]) sub.push_back(persons[static_cast<std::size_t>(i)]);
    GapResult g = gap(t, person_level[static_cast<std::size_t>(j)], sub);
    subgroup_vecs.push_back(g.pooled);
    r.person_alphas.push_back(g.alpha);
  }
  GapResult top = gap(t, subgroup_level, subgroup_vecs);
  r.pooled = top.pooled;
  r.subgroup_alpha = top.alpha;
  return r;
}

SubgroupGapResult subgroup_gap_concat(Tape& t, std::span<const AttnNodes> per_subgroup,
                                      std::span<const Value> persons,
                                      const SubgroupAssignment& groups) {
  if (persons.size() != groups.subgroup_of.size())
    throw ShapeError("subgroup_gap_concat: " + std::to_string(persons.size()) +
                     " persons vs assignment of " + std::to_string(groups.subgroup_of.size()));
  if (static_cast<int>(per_subgroup.size()) != groups.m)
    throw ShapeError("subgroup_gap_concat: " + std::to_string(per_subgroup.size()) +
                     " parameter sets for m=" + std::to_string(groups.m));
  auto members = groups.members();

  SubgroupGapResult r;
  std::vector<Value> blocks;
  for (int j = 0; j < groups.m; ++j) {
    std::vector<Value> sub;
    for (int i : members[static_cast<std::size_t>(j)]) sub.push_back(persons[static_cast<std::size_t>(i)]);
    GapResult g = gap(t, per_subgroup[static_cast<std::size_t>(j)], sub);
    blocks.push_back(g.pooled);
    r.person_alphas.push_back(g.alpha);
  }
  r.pooled = t.concat(blocks);
  return r;
}

std::vector<double> person_order_weights(const Tape& t,
                                         std::span<const Value> person_alphas,
                                         const SubgroupAssignment& groups) {
  auto members = groups.members();
  if (person_alphas.size() != members.size())
    throw ShapeError("person_order_weights: " + std::to_string(person_alphas.size()) +
                     " alpha vectors for m=" + std::to_string(groups.m));
  std::vector<double> out(groups.subgroup_of.size(), 0.0);
  for (std::size_t j = 0; j < members.size(); ++j) {
    auto a = t.value(person_alphas[j]);
    if (a.size() != members[j].size())
      throw ShapeError("person_order_weights: subgroup " + std::to_string(j) + " has " +
                       std::to_string(members[j].size()) + " members but " +
                       std::to_string(a.size()) + " weights");
    for (std::size_t k = 0; k < members[j].size(); ++k)
      out[static_cast<std::size_t>(members[j][k])] = a[k];
  }
  return out;
}

}  // namespace grouppool
