#include "grouppool/layers.hpp"

namespace grouppool {

void fill_gaussian(std::vector<double>& data, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : data) x = dist(rng);
}

void fill_xavier(Matrix& m, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (m.rows + m.cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : m.data) x = dist(rng);
}

LstmParams::LstmParams(int input_dim, int hidden_dim)
    : input_dim(input_dim),
      hidden_dim(hidden_dim),
      wi(hidden_dim, input_dim),
      ui(hidden_dim, hidden_dim),
      bi(hidden_dim),
      wf(hidden_dim, input_dim),
      uf(hidden_dim, hidden_dim),
      bf(hidden_dim),
      wo(hidden_dim, input_dim),
      uo(hidden_dim, hidden_dim),
      bo(hidden_dim),
      wg(hidden_dim, input_dim),
      ug(hidden_dim, hidden_dim),
      bg(hidden_dim) {
  if (input_dim < 1 || hidden_dim < 1)
    throw ShapeError("LstmParams: dims must be positive, got input " +
                     std::to_string(input_dim) + ", hidden " + std::to_string(hidden_dim));
}

LstmNodes bind(Tape& t, const LstmParams& p) {
  LstmNodes n;
  n.wi = t.mat(p.wi);
  n.ui = t.mat(p.ui);
  n.bi = t.vec(p.bi.data);
  n.wf = t.mat(p.wf);
  n.uf = t.mat(p.uf);
  n.bf = t.vec(p.bf.data);
  n.wo = t.mat(p.wo);
  n.uo = t.mat(p.uo);
  n.bo = t.vec(p.bo.data);
  n.wg = t.mat(p.wg);
  n.ug = t.mat(p.ug);
  n.bg = t.vec(p.bg.data);
  return n;
}

LstmState lstm_zero_state(Tape& t, int hidden_dim) {
  std::vector<double> z(static_cast<std::size_t>(hidden_dim), 0.0);
  return {t.vec(z), t.vec(z)};
}

LstmState lstm_step(Tape& t, const LstmNodes& p, const LstmState& s, Value x) {
  auto gate = [&](MatValue w, MatValue u, Value b) {
    return t.add(t.add(t.matvec(w, x), t.matvec(u, s.h)), b);
  };
  Value i = t.sigmoid(gate(p.wi, p.ui, p.bi));
  Value f = t.sigmoid(gate(p.wf, p.uf, p.bf));
  Value o = t.sigmoid(gate(p.wo, p.uo, p.bo));
  Value g = t.tanh(gate(p.wg, p.ug, p.bg));
  Value c = t.add(t.mul(f, s.c), t.mul(i, g));
  Value h = t.mul(o, t.tanh(c));
  return {h, c};
}

std::vector<LstmState> run_sequence(Tape& t, const LstmNodes& p, int hidden_dim,
                                    std::span<const Value> xs) {
  if (xs.empty()) throw ShapeError("run_sequence: empty input sequence");
  std::vector<LstmState> states;
  states.reserve(xs.size());
  LstmState s = lstm_zero_state(t, hidden_dim);
  for (Value x : xs) {
    s = lstm_step(t, p, s, x);
    states.push_back(s);
  }
  return states;
}

ClassifierHead::ClassifierHead(int classes, int input_dim)
    : w(classes, input_dim), b(classes) {
  if (classes < 2)
    throw ShapeError("ClassifierHead: need at least 2 classes, got " +
                     std::to_string(classes));
}

HeadNodes bind(Tape& t, const ClassifierHead& head) {
  return {t.mat(head.w), t.vec(head.b.data)};
}

Value affine(Tape& t, const HeadNodes& head, Value x) {
  return t.add(t.matvec(head.w, x), head.b);
}

Value classify(Tape& t, const HeadNodes& head, Value x) {
  return t.softmax(affine(t, head, x));
}

}  // namespace grouppool
