#include "grouppool/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "grouppool/run_config.hpp"
#include "grouppool/train.hpp"

namespace grouppool {

using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::string scheme;
  std::string out;
  std::string checkpoint;
  std::string data;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int epochs1 = 0;
  bool epochs1_set = false;
  int epochs2 = 0;
  bool epochs2_set = false;
  double lr = 0.0;
  bool lr_set = false;
  double lambda = 0.0;
  bool lambda_set = false;
};

// File first, flags second: every flag wins over its config-file key.
RunConfig effective_config(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = load_run_config(f.config);
  if (!f.scheme.empty()) cfg.model.scheme = parse_scheme(f.scheme);
  if (f.seed_set) {
    cfg.train.seed = f.seed;
    cfg.generator.seed = f.seed;
  }
  if (f.epochs1_set) cfg.train.epochs_stage1 = f.epochs1;
  if (f.epochs2_set) cfg.train.epochs_stage2 = f.epochs2;
  if (f.lr_set) cfg.train.learning_rate = f.lr;
  if (f.lambda_set) cfg.model.lambda = f.lambda;
  if (!f.out.empty()) cfg.paths.out_dir = f.out;
  return cfg;
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

std::map<int, long> class_counts(const Dataset& data) {
  std::map<int, long> counts;
  for (const auto& clip : data.clips) counts[clip.activity_label] += 1;
  return counts;
}

void print_counts(const char* label, const Dataset& data) {
  std::cout << label << " class counts:";
  for (const auto& [cls, count] : class_counts(data)) std::cout << " " << cls << ":" << count;
  std::cout << "\n";
}

int cmd_generate(const Flags& f) {
  auto cfg = effective_config(f);
  cfg.generator.validate();
  auto data = generate(cfg.generator);
  const auto train_path = cfg.paths.train_data_path();
  const auto test_path = cfg.paths.test_data_path();
  save_clips(train_path, data.train);
  save_clips(test_path, data.test);
  std::cout << "wrote " << data.train.clips.size() << " train clips to " << train_path << "\n";
  std::cout << "wrote " << data.test.clips.size() << " test clips to " << test_path << "\n";
  print_counts("train", data.train);
  print_counts("test", data.test);
  return 0;
}

int cmd_train(const Flags& f) {
  auto cfg = effective_config(f);
  cfg.validate();
  auto data = load_clips(cfg.paths.train_data_path());
  if (data.clips.empty())
    throw DataError(cfg.paths.train_data_path() + ": no clips; run generate first");

  auto result = train(cfg.model, cfg.train, data.clips);

  const auto metrics_path = cfg.paths.metrics_path();
  ensure_parent(metrics_path);
  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) throw DataError("cannot open " + metrics_path + " for writing");
  for (const auto& rec : result.curve) {
    metrics << json{{"stage", rec.stage},
                    {"epoch", rec.epoch},
                    {"loss", rec.loss},
                    {"group_acc", rec.group_acc},
                    {"person_acc", rec.person_acc}}
                   .dump()
            << "\n";
    std::cout << "stage " << rec.stage << " epoch " << rec.epoch << " loss " << rec.loss
              << " group_acc " << rec.group_acc << " person_acc " << rec.person_acc << "\n";
  }
  metrics.close();

  const auto ckpt_path = cfg.paths.checkpoint_path();
  save_checkpoint(ckpt_path, result.params);
  std::cout << "checkpoint: " << ckpt_path << "\n";
  std::cout << "metrics: " << metrics_path << "\n";
  return 0;
}

int cmd_eval(const Flags& f) {
  auto cfg = effective_config(f);
  const auto ckpt_path = f.checkpoint.empty() ? cfg.paths.checkpoint_path() : f.checkpoint;
  const auto data_path = f.data.empty() ? cfg.paths.test_data_path() : f.data;
  auto params = load_checkpoint(ckpt_path);
  auto data = load_clips(data_path);
  auto rep = evaluate(params, data.clips);

  std::cout << std::fixed << std::setprecision(4);
  std::cout << "group accuracy: " << rep.group_acc << "\n";
  std::cout << "person accuracy: " << rep.person_acc << "\n";
  std::cout << "confusion (rows = truth):\n";
  const int k = params.config.activities;
  std::cout << "      ";
  for (int c = 0; c < k; ++c) std::cout << std::setw(6) << c;
  std::cout << "\n";
  for (int r = 0; r < k; ++r) {
    std::cout << std::setw(6) << r;
    for (int c = 0; c < k; ++c)
      std::cout << std::setw(6) << rep.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    std::cout << "\n";
  }
  std::cout << "per-class accuracy:";
  for (int c = 0; c < k; ++c)
    std::cout << " " << c << ":" << rep.per_class[static_cast<std::size_t>(c)];
  std::cout << "\n";

  const auto report_path = cfg.paths.report_path();
  ensure_parent(report_path);
  std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + report_path + " for writing");
  out << json{{"group_acc", rep.group_acc},
              {"person_acc", rep.person_acc},
              {"confusion", rep.confusion},
              {"per_class", rep.per_class}}
             .dump()
      << "\n";
  std::cout << "report: " << report_path << "\n";
  return 0;
}

int cmd_gradcheck(const Flags& f) {
  auto cfg = effective_config(f);
  // tiny instance: finite differences sweep every coordinate
  ModelConfig tiny;
  tiny.d_x = 3;
  tiny.d_h_person = 4;
  tiny.d_h_group = 3;
  tiny.attn_hidden = 2;
  tiny.actions = 3;
  tiny.activities = 3;
  tiny.subgroups = std::min(cfg.model.subgroups, 2);
  tiny.scheme = cfg.model.scheme;
  tiny.lambda = cfg.model.lambda;
  tiny.hap_shared_person_attn = cfg.model.hap_shared_person_attn;
  tiny.group_loss_all_steps = cfg.model.group_loss_all_steps;

  auto rep = gradcheck(tiny, f.seed_set ? f.seed : cfg.train.seed);
  std::cout << "scheme: " << scheme_name(tiny.scheme) << "\n";
  for (const auto& block : rep.blocks)
    std::cout << "  " << std::left << std::setw(24) << block.name << " max rel err "
              << std::scientific << std::setprecision(3) << block.max_rel_err << "\n";
  std::cout << (rep.pass ? "PASS" : "FAIL") << " worst " << std::scientific
            << std::setprecision(3) << rep.worst() << " tolerance " << rep.tolerance << "\n";
  return rep.pass ? 0 : 3;
}

int cmd_inspect(const Flags& f) {
  auto cfg = effective_config(f);
  const auto ckpt_path = f.checkpoint.empty() ? cfg.paths.checkpoint_path() : f.checkpoint;
  const auto data_path = f.data.empty() ? cfg.paths.test_data_path() : f.data;
  auto params = load_checkpoint(ckpt_path);
  if (!scheme_has_traces(params.config.scheme))
    throw ConfigError("scheme " + scheme_name(params.config.scheme) +
                      " has no attention traces to inspect");
  auto data = load_clips(data_path);
  if (data.clips.empty()) throw DataError(data_path + ": no clips");

  std::vector<TraceRecord> records;
  for (const auto& clip : data.clips) {
    auto pred = predict(params, clip);
    for (std::size_t t = 0; t < pred.traces.size(); ++t) {
      TraceRecord rec;
      rec.clip_id = clip.id;
      rec.t = static_cast<int>(t);
      rec.alphas = pred.traces[t].person_weights;
      rec.subgroup_alphas = pred.traces[t].subgroup_weights;
      rec.pred = pred.activity;
      rec.truth = clip.activity_label;
      records.push_back(std::move(rec));
    }
  }
  const auto traces_path = cfg.paths.traces_path();
  export_traces(traces_path, records);
  std::cout << "wrote " << records.size() << " trace records to " << traces_path << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"group activity recognition on synthetic multi-person clips"};
  app.require_subcommand(1);

  Flags f;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--seed", f.seed, "seed override (generator and training)")
        ->each([&](const std::string&) { f.seed_set = true; });
    sub->add_option("--out", f.out, "output directory override");
  };
  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--scheme", f.scheme, "pooling scheme: max, avg, gap, hap, subgroup-gap");
    sub->add_option("--epochs-stage1", f.epochs1, "person-branch epochs")
        ->each([&](const std::string&) { f.epochs1_set = true; });
    sub->add_option("--epochs-stage2", f.epochs2, "joint epochs")
        ->each([&](const std::string&) { f.epochs2_set = true; });
    sub->add_option("--lr", f.lr, "learning rate")->each([&](const std::string&) {
      f.lr_set = true;
    });
    sub->add_option("--lambda", f.lambda, "person-loss weight")->each([&](const std::string&) {
      f.lambda_set = true;
    });
  };

  auto* gen = app.add_subcommand("generate", "write synthetic train/test clip files");
  add_common(gen);

  auto* tr = app.add_subcommand("train", "two-stage training; writes checkpoint and metrics");
  add_common(tr);
  add_train_flags(tr);

  auto* ev = app.add_subcommand("eval", "accuracy and confusion matrix on a dataset");
  add_common(ev);
  ev->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  ev->add_option("--data", f.data, "clip file to evaluate on");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  add_common(gc);
  gc->add_option("--scheme", f.scheme, "pooling scheme: max, avg, gap, hap, subgroup-gap");

  auto* in = app.add_subcommand("inspect", "export attention traces for a checkpoint");
  add_common(in);
  in->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  in->add_option("--data", f.data, "clip file to trace");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(gen)) return cmd_generate(f);
    if (app.got_subcommand(tr)) return cmd_train(f);
    if (app.got_subcommand(ev)) return cmd_eval(f);
    if (app.got_subcommand(gc)) return cmd_gradcheck(f);
    if (app.got_subcommand(in)) return cmd_inspect(f);
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace grouppool
