#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grouppool/pooling.hpp"

namespace grouppool {

// One labelled sample: n person tracks of T feature vectors, per-person
// per-timestep action labels, one activity label, and a subgroup split.
struct Clip {
  int id = 0;
  int T = 0;
  int dx = 0;
  std::vector<std::vector<Vector>> persons;        // [n][T], each Vector[dx]
  std::vector<std::vector<int>> action_labels;     // [n][T]
  int activity_label = 0;
  SubgroupAssignment subgroups;

  int n() const { return static_cast<int>(persons.size()); }
  // Structural checks; label ranges need the class counts.
  void validate() const;

  friend bool operator==(const Clip& a, const Clip& b);
};

struct GeneratorConfig {
  int n = 24;
  int T = 6;
  int d_x = 12;
  int actions = 5;     // last action class is the distractor background label
  int activities = 4;
  int key_agents = 2;
  int subgroups = 2;
  double sigma_signal = 1.0;
  double sigma_noise = 10.0;  // distractors swamp max/avg reductions
  double signal_strength = 3.0;  // norm of each class's mean direction
  int train_clips = 800;
  int test_clips = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  std::vector<Clip> clips;
};

// Deterministic synthetic task: each clip draws an activity class; key
// agents (positions drawn per clip) emit that class's mean direction plus
// N(0, sigma_signal^2) noise and carry a matching action label; the rest
// emit N(0, sigma_noise^2) and the background label. Per-clip RNG derived
// from (seed, clip id), so generation order never matters.
struct GeneratedData {
  Dataset train;
  Dataset test;
};
GeneratedData generate(const GeneratorConfig& cfg);

// Class-mean direction used by the generator (unit norm before scaling).
Vector class_direction(int activity, int d_x);

// Key-agent action label for an activity; distractors use actions-1.
int key_action_label(int activity, int actions);

// Line-delimited JSON, one clip per line. Loading validates structure and
// reports the line (and field where known) of the first defect.
void save_clips(const std::string& path, const Dataset& data);
Dataset load_clips(const std::string& path);

// One record per (clip, timestep): person weights in person order, optional
// subgroup weights, predicted and true activity labels.
struct TraceRecord {
  int clip_id = 0;
  int t = 0;
  std::vector<double> alphas;
  std::vector<double> subgroup_alphas;  // empty unless hierarchical
  int pred = 0;
  int truth = 0;

  friend bool operator==(const TraceRecord& a, const TraceRecord& b);
};

void export_traces(const std::string& path, const std::vector<TraceRecord>& records);
std::vector<TraceRecord> load_traces(const std::string& path);

}  // namespace grouppool
