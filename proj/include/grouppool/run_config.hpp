#pragma once

#include <string>

#include "grouppool/data.hpp"
#include "grouppool/model.hpp"
#include "grouppool/train.hpp"

namespace grouppool {

// File locations for one experiment. Empty fields resolve to defaults
// under out_dir.
struct RunPaths {
  std::string out_dir = "out";
  std::string train_data;
  std::string test_data;
  std::string checkpoint;
  std::string metrics;
  std::string traces;
  std::string report;

  std::string train_data_path() const;
  std::string test_data_path() const;
  std::string checkpoint_path() const;
  std::string metrics_path() const;
  std::string traces_path() const;
  std::string report_path() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GeneratorConfig generator;
  RunPaths paths;

  // Sub-config invariants plus model/generator dimension agreement.
  void validate() const;
};

// Parses a JSON config with four optional sections (model, train,
// generator, paths). Absent keys keep their defaults; unknown keys are
// rejected so typos cannot silently fall back.
RunConfig load_run_config(const std::string& path);

}  // namespace grouppool
