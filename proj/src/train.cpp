#include "grouppool/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "grouppool/tape.hpp"

namespace grouppool {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw ConfigError("learning_rate must be positive, got " + std::to_string(learning_rate));
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("ADAM betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs_stage1 < 0 || epochs_stage2 < 0)
    throw ConfigError("epoch counts must be nonnegative");
}

AdamState AdamState::zeros_like(const std::vector<TensorRef>& refs) {
  AdamState s;
  s.m.reserve(refs.size());
  s.v.reserve(refs.size());
  for (const auto& r : refs) {
    s.m.emplace_back(r.size(), 0.0);
    s.v.emplace_back(r.size(), 0.0);
  }
  return s;
}

void adam_step(std::vector<TensorRef>& refs, const std::vector<std::vector<double>>& grads,
               AdamState& state, const TrainConfig& cfg, bool person_only) {
  if (grads.size() != refs.size() || state.m.size() != refs.size())
    throw ShapeError("adam_step: gradient/state count does not match parameter count");
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (person_only && !refs[i].person_branch) continue;
    auto& p = *refs[i].data;
    const auto& g = grads[i];
    if (g.size() != p.size())
      throw ShapeError("adam_step: gradient shape mismatch for " + refs[i].name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      p[k] -= cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

int worker_threads() {
  if (const char* env = std::getenv("GROUPPOOL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

namespace {

struct ClipResult {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;
  long person_correct = 0;
  long person_total = 0;
  long group_correct = 0;  // only meaningful when the group graph ran
};

// Loss, gradients, and running-accuracy counts for one clip. Stage 1 skips
// the group graph entirely so its parameters cannot see any update.
ClipResult clip_pass(Tape& t, const ModelParams& params, const Clip& clip, bool person_only) {
  t.reset();
  auto bound = bind_model(t, params);
  const auto& cfg = params.config;

  ClipResult r;
  Value loss{};
  std::vector<PersonForwardResult> persons;
  if (person_only) {
    persons = all_person_forward(t, bound, cfg, clip);
    loss = person_loss(t, persons, clip);
  } else {
    auto fwd = group_forward(t, bound, cfg, clip);
    loss = joint_loss(t, fwd, clip, cfg);
    persons = std::move(fwd.persons);
    const auto probs = t.value(fwd.activity_probs.back());
    if (argmax(probs) == clip.activity_label) r.group_correct = 1;
  }
  r.loss = t.scalar(loss);
  t.backward(loss);
  r.grads.reserve(bound.leaves.size());
  for (auto leaf : bound.leaves) {
    auto g = t.grad(leaf);
    r.grads.emplace_back(g.begin(), g.end());
  }

  for (std::size_t i = 0; i < persons.size(); ++i)
    for (std::size_t step = 0; step < persons[i].action_probs.size(); ++step) {
      if (argmax(t.value(persons[i].action_probs[step])) == clip.action_labels[i][step])
        r.person_correct += 1;
      r.person_total += 1;
    }
  return r;
}

// Runs fn(i) for i in [0, n) across at most worker_threads() threads.
// Callers combine results in index order, so thread count never changes
// the arithmetic.
void parallel_over(int n, const std::function<void(int)>& fn) {
  const int threads = std::min(worker_threads(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

void throw_if_nonfinite(const std::vector<TensorRef>& refs, const std::string& when) {
  for (const auto& r : refs)
    for (double x : *r.data)
      if (!std::isfinite(x))
        throw NumericError(r.name, "non-finite value in " + r.name + " " + when);
}

std::string first_nonfinite_grad(const std::vector<TensorRef>& refs,
                                 const std::vector<std::vector<double>>& grads) {
  for (std::size_t i = 0; i < refs.size(); ++i)
    for (double x : grads[i])
      if (!std::isfinite(x)) return refs[i].name;
  return {};
}

}  // namespace

TrainResult train(const ModelConfig& mc, const TrainConfig& tc,
                  const std::vector<Clip>& dataset) {
  mc.validate();
  tc.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");
  for (const auto& clip : dataset) clip.validate();

  TrainResult out{init_params(mc, tc.seed), {}};
  auto refs = named_tensors(out.params);
  std::mt19937_64 order_rng(tc.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int stage = 1; stage <= 2; ++stage) {
    const bool person_only = stage == 1;
    const int epochs = person_only ? tc.epochs_stage1 : tc.epochs_stage2;
    auto state = AdamState::zeros_like(refs);  // stage 2 starts from fresh moments

    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), order_rng);
      double loss_sum = 0.0;
      long person_correct = 0, person_total = 0, group_correct = 0;

      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(tc.batch_size)) {
        const int count = static_cast<int>(
            std::min(order.size() - start, static_cast<std::size_t>(tc.batch_size)));
        std::vector<ClipResult> results(static_cast<std::size_t>(count));
        parallel_over(count, [&](int j) {
          thread_local Tape tape;
          results[static_cast<std::size_t>(j)] =
              clip_pass(tape, out.params,
                        dataset[static_cast<std::size_t>(order[start + static_cast<std::size_t>(j)])],
                        person_only);
        });

        // batch loss = mean of clip losses; combine in clip order
        std::vector<std::vector<double>> acc;
        acc.reserve(refs.size());
        for (const auto& r : refs) acc.emplace_back(r.size(), 0.0);
        const double inv = 1.0 / count;
        for (const auto& res : results) {
          loss_sum += res.loss;
          person_correct += res.person_correct;
          person_total += res.person_total;
          group_correct += res.group_correct;
          for (std::size_t i = 0; i < acc.size(); ++i)
            for (std::size_t k = 0; k < acc[i].size(); ++k)
              acc[i][k] += inv * res.grads[i][k];
        }

        if (!std::isfinite(loss_sum)) {
          auto name = first_nonfinite_grad(refs, acc);
          throw NumericError(name.empty() ? "loss" : name,
                             "non-finite loss during stage " + std::to_string(stage) +
                                 (name.empty() ? "" : " (first bad gradient: " + name + ")"));
        }
        adam_step(refs, acc, state, tc, person_only);
        throw_if_nonfinite(refs, "after update in stage " + std::to_string(stage));
      }

      EpochRecord rec;
      rec.stage = stage;
      rec.epoch = epoch;
      rec.loss = loss_sum / static_cast<double>(dataset.size());
      rec.person_acc =
          person_total == 0 ? 0.0
                            : static_cast<double>(person_correct) / static_cast<double>(person_total);
      rec.group_acc = person_only ? 0.0
                                  : static_cast<double>(group_correct) /
                                        static_cast<double>(dataset.size());
      out.curve.push_back(rec);
    }
  }
  return out;
}

EvalReport evaluate(const ModelParams& params, const std::vector<Clip>& dataset) {
  if (dataset.empty()) throw DataError("evaluate: empty dataset");
  const int k = params.config.activities;

  std::vector<Prediction> preds(dataset.size());
  parallel_over(static_cast<int>(dataset.size()),
                [&](int i) { preds[static_cast<std::size_t>(i)] = predict(params, dataset[static_cast<std::size_t>(i)]); });

  EvalReport rep;
  rep.confusion.assign(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
  long group_correct = 0, person_correct = 0, person_total = 0;
  for (std::size_t c = 0; c < dataset.size(); ++c) {
    const auto& clip = dataset[c];
    const auto& pred = preds[c];
    rep.confusion[static_cast<std::size_t>(clip.activity_label)][static_cast<std::size_t>(pred.activity)] += 1;
    if (pred.activity == clip.activity_label) group_correct += 1;
    for (std::size_t i = 0; i < pred.actions.size(); ++i)
      for (std::size_t step = 0; step < pred.actions[i].size(); ++step) {
        if (pred.actions[i][step] == clip.action_labels[i][step]) person_correct += 1;
        person_total += 1;
      }
  }
  rep.group_acc = static_cast<double>(group_correct) / static_cast<double>(dataset.size());
  rep.person_acc =
      person_total == 0 ? 0.0
                        : static_cast<double>(person_correct) / static_cast<double>(person_total);
  rep.per_class.assign(static_cast<std::size_t>(k), 0.0);
  for (int truth = 0; truth < k; ++truth) {
    long row = 0;
    for (long n : rep.confusion[static_cast<std::size_t>(truth)]) row += n;
    if (row > 0)
      rep.per_class[static_cast<std::size_t>(truth)] =
          static_cast<double>(rep.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(truth)]) /
          static_cast<double>(row);
  }
  return rep;
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.max_rel_err);
  return w;
}

GradcheckReport gradcheck(const ModelConfig& cfg, std::uint64_t seed, double tolerance) {
  cfg.validate();
  std::mt19937_64 rng(seed);

  // generic evaluation point: every tensor drawn from the same stream
  ModelParams params(cfg);
  auto refs = named_tensors(params);
  std::normal_distribution<double> gauss(0.0, 0.4);
  for (auto& r : refs)
    for (auto& x : *r.data) x = gauss(rng);

  // tiny clip with every label class reachable
  Clip clip;
  clip.id = 0;
  clip.T = 2;
  clip.dx = cfg.d_x;
  clip.subgroups = SubgroupAssignment::by_order(2, cfg.subgroups >= 2 ? 2 : 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> action(0, cfg.actions - 1);
  clip.activity_label = static_cast<int>(seed % static_cast<std::uint64_t>(cfg.activities));
  for (int i = 0; i < 2; ++i) {
    std::vector<Vector> track;
    std::vector<int> labels;
    for (int step = 0; step < clip.T; ++step) {
      Vector x(cfg.d_x);
      for (auto& v : x.data) v = u(rng);
      track.push_back(std::move(x));
      labels.push_back(action(rng));
    }
    clip.persons.push_back(std::move(track));
    clip.action_labels.push_back(std::move(labels));
  }
  clip.validate();

  auto loss_at = [&]() {
    Tape t;
    auto fwd = group_forward(t, bind_model(t, params), cfg, clip);
    return t.scalar(joint_loss(t, fwd, clip, cfg));
  };

  Tape t;
  auto bound = bind_model(t, params);
  auto fwd = group_forward(t, bound, cfg, clip);
  t.backward(joint_loss(t, fwd, clip, cfg));

  GradcheckReport rep;
  rep.tolerance = tolerance;
  const double h = 1e-5;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto analytic = t.grad(bound.leaves[i]);
    double worst = 0.0;
    auto& data = *refs[i].data;
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double keep = data[k];
      data[k] = keep + h;
      const double up = loss_at();
      data[k] = keep - h;
      const double down = loss_at();
      data[k] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({1e-6, std::abs(analytic[k]), std::abs(fd)});
      worst = std::max(worst, std::abs(analytic[k] - fd) / denom);
    }
    rep.blocks.push_back({refs[i].name, worst});
  }
  rep.pass = rep.worst() <= tolerance;
  return rep;
}

}  // namespace grouppool
