#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grouppool/tensor.hpp"

namespace grouppool {

/// Handle to a vector-valued node on a Tape.
struct Value {
  int id = -1;
};

/// Handle to a matrix-valued leaf on a Tape.
struct MatValue {
  int id = -1;
};

/// Define-by-run reverse-mode differentiation record.
///
/// Every op computes its forward value immediately and appends one node;
/// node inputs always point backward, so reverse creation order is a valid
/// topological order for the backward sweep. A tape is rebuilt per forward
/// pass; reset() drops the nodes but keeps allocated capacity so a tape can
/// be reused across clips without churn.
class Tape {
 public:
  /// Floor applied inside cross_entropy's log.
  static constexpr double kLogFloor = 1e-12;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void reset();

  // -- leaves ----------------------------------------------------------
  Value vec(std::span<const double> x);
  Value vec(const Vector& x) { return vec(std::span<const double>(x.data)); }
  MatValue mat(const Matrix& m);

  // -- primitive operations --------------------------------------------
  Value matvec(MatValue w, Value x);
  Value add(Value a, Value b);
  /// Elementwise product.
  Value mul(Value a, Value b);
  Value tanh(Value x);
  Value sigmoid(Value x);
  /// Max-subtracted softmax; output entries positive and sum to 1.
  Value softmax(Value s);
  /// Inner product; result has dim 1.
  Value dot(Value a, Value b);
  Value scale(Value x, double c);
  /// Elementwise sum of one or more same-dim values.
  Value sum(std::span<const Value> xs);
  Value concat(std::span<const Value> xs);
  /// out = sum_i alpha[i] * xs[i]; alpha dim must equal xs.size().
  Value weighted_sum(std::span<const Value> xs, Value alpha);
  /// Elementwise max; gradient of a tie flows to the lowest input index.
  Value max_pool(std::span<const Value> xs);
  Value avg_pool(std::span<const Value> xs);
  /// -ln(max(p[label], kLogFloor)); result has dim 1.
  Value cross_entropy(Value p, int label);

  // -- accessors ---------------------------------------------------------
  int dim(Value v) const;
  std::span<const double> value(Value v) const;
  Vector value_vec(Value v) const;
  /// Value of a dim-1 node.
  double scalar(Value v) const;

  /// Reverse accumulation from a scalar loss node. Gradients of every node
  /// (leaves included) are available afterwards via grad().
  void backward(Value loss);
  bool has_grads() const { return grads_valid_; }

  std::span<const double> grad(Value v) const;
  std::span<const double> grad(MatValue m) const;
  Vector grad_vec(Value v) const;
  Matrix grad_mat(MatValue m) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatVec,
    kAdd,
    kMul,
    kTanh,
    kSigmoid,
    kSoftmax,
    kDot,
    kScale,
    kSum,
    kConcat,
    kWeightedSum,
    kMaxPool,
    kAvgPool,
    kCrossEntropy,
  };

  struct Node {
    Op op = Op::kLeaf;
    int rows = 0;
    int cols = 1;  // vectors keep cols == 1
    int val = 0;   // offset into vals_ / grads_
    int a = -1;
    int b = -1;
    int args = 0;  // n-ary input range in args_
    int nargs = 0;
    int label = 0;
    double c = 0.0;
  };

  int push(Op op, int rows, int cols, int a = -1, int b = -1);
  int grab_args(std::span<const Value> xs);
  int node_dim(int id) const { return nodes_[id].rows * nodes_[id].cols; }
  const double* val_ptr(int id) const { return vals_.data() + nodes_[id].val; }
  double* val_ptr(int id) { return vals_.data() + nodes_[id].val; }
  void check(Value v, const char* who) const;
  void check(MatValue v, const char* who) const;
  void require_same_dims(std::span<const Value> xs, const char* who) const;

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<int> args_;
  bool grads_valid_ = false;
};

}  // namespace grouppool
