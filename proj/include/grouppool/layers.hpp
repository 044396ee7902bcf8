#pragma once

#include <random>
#include <span>
#include <vector>

#include "grouppool/tape.hpp"

namespace grouppool {

// Parameter initializers. Each call consumes RNG state in a fixed order, so
// a seeded engine reproduces a model bitwise.
void fill_gaussian(std::vector<double>& data, std::mt19937_64& rng, double stddev);
void fill_xavier(Matrix& m, std::mt19937_64& rng);

// One LSTM cell: input/forget/output gates plus tanh candidate. w* are
// input-to-gate matrices [hidden_dim x input_dim], u* hidden-to-gate
// [hidden_dim x hidden_dim], b* gate biases.
struct LstmParams {
  int input_dim = 0;
  int hidden_dim = 0;
  Matrix wi, ui;
  Vector bi;
  Matrix wf, uf;
  Vector bf;
  Matrix wo, uo;
  Vector bo;
  Matrix wg, ug;
  Vector bg;

  LstmParams() = default;
  LstmParams(int input_dim, int hidden_dim);
};

// Tape-bound leaves for one LSTM cell's parameters.
struct LstmNodes {
  MatValue wi, ui, wf, uf, wo, uo, wg, ug;
  Value bi, bf, bo, bg;
};

LstmNodes bind(Tape& t, const LstmParams& p);

struct LstmState {
  Value h;
  Value c;
};

LstmState lstm_zero_state(Tape& t, int hidden_dim);
LstmState lstm_step(Tape& t, const LstmNodes& p, const LstmState& s, Value x);

// Unrolls from the zero state; returns all T states.
std::vector<LstmState> run_sequence(Tape& t, const LstmNodes& p, int hidden_dim,
                                    std::span<const Value> xs);

// Linear layer followed by softmax over K >= 2 classes.
struct ClassifierHead {
  Matrix w;  // [classes x input_dim]
  Vector b;  // [classes]

  ClassifierHead() = default;
  ClassifierHead(int classes, int input_dim);
  int classes() const { return w.rows; }
};

struct HeadNodes {
  MatValue w;
  Value b;
};

HeadNodes bind(Tape& t, const ClassifierHead& head);
Value affine(Tape& t, const HeadNodes& head, Value x);
Value classify(Tape& t, const HeadNodes& head, Value x);

}  // namespace grouppool
