#include "grouppool/tape.hpp"

#include <algorithm>
#include <cmath>

namespace grouppool {

void Tape::reset() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  args_.clear();
  grads_valid_ = false;
}

void Tape::check(Value v, const char* who) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ShapeError(std::string(who) + ": invalid value handle");
  if (nodes_[v.id].cols != 1)
    throw ShapeError(std::string(who) + ": expected a vector node, got " +
                     shape_str(nodes_[v.id].rows, nodes_[v.id].cols));
}

void Tape::check(MatValue v, const char* who) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ShapeError(std::string(who) + ": invalid matrix handle");
}

void Tape::require_same_dims(std::span<const Value> xs, const char* who) const {
  if (xs.empty()) throw ShapeError(std::string(who) + ": empty input set");
  const int d = node_dim(xs[0].id);
  for (Value v : xs) {
    check(v, who);
    if (node_dim(v.id) != d)
      throw ShapeError(std::string(who) + ": mixed dims " + shape_str(d) + " vs " +
                       shape_str(node_dim(v.id)));
  }
}

int Tape::push(Op op, int rows, int cols, int a, int b) {
  Node n;
  n.op = op;
  n.rows = rows;
  n.cols = cols;
  n.val = static_cast<int>(vals_.size());
  n.a = a;
  n.b = b;
  nodes_.push_back(n);
  vals_.resize(vals_.size() + static_cast<std::size_t>(rows) * cols, 0.0);
  grads_valid_ = false;
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::grab_args(std::span<const Value> xs) {
  const int start = static_cast<int>(args_.size());
  for (Value v : xs) args_.push_back(v.id);
  return start;
}

Value Tape::vec(std::span<const double> x) {
  if (x.empty()) throw ShapeError("vec: empty vector leaf");
  const int id = push(Op::kLeaf, static_cast<int>(x.size()), 1);
  std::copy(x.begin(), x.end(), val_ptr(id));
  return Value{id};
}

MatValue Tape::mat(const Matrix& m) {
  if (m.rows <= 0 || m.cols <= 0 ||
      m.data.size() != static_cast<std::size_t>(m.rows) * m.cols)
    throw ShapeError("mat: malformed matrix " + shape_str(m.rows, m.cols));
  const int id = push(Op::kLeaf, m.rows, m.cols);
  std::copy(m.data.begin(), m.data.end(), val_ptr(id));
  return MatValue{id};
}

Value Tape::matvec(MatValue w, Value x) {
  check(w, "matvec");
  check(x, "matvec");
  const int wrows = nodes_[w.id].rows;  // copy dims: push() may reallocate nodes_
  const int wcols = nodes_[w.id].cols;
  if (wcols != node_dim(x.id))
    throw ShapeError("matvec: dimension mismatch " + shape_str(wrows, wcols) + " * " +
                     shape_str(node_dim(x.id)));
  const int id = push(Op::kMatVec, wrows, 1, w.id, x.id);
  const double* wd = val_ptr(w.id);
  const double* xd = val_ptr(x.id);
  double* out = val_ptr(id);
  for (int r = 0; r < wrows; ++r) {
    double acc = 0.0;
    const double* row = wd + static_cast<std::size_t>(r) * wcols;
    for (int c = 0; c < wcols; ++c) acc += row[c] * xd[c];
    out[r] = acc;
  }
  return Value{id};
}

Value Tape::add(Value a, Value b) {
  check(a, "add");
  check(b, "add");
  const int d = node_dim(a.id);
  if (node_dim(b.id) != d)
    throw ShapeError("add: dimension mismatch " + shape_str(d) + " vs " + shape_str(node_dim(b.id)));
  const int id = push(Op::kAdd, d, 1, a.id, b.id);
  const double* pa = val_ptr(a.id);
  const double* pb = val_ptr(b.id);
  double* out = val_ptr(id);
  for (int i = 0; i < d; ++i) out[i] = pa[i] + pb[i];
  return Value{id};
}

Value Tape::mul(Value a, Value b) {
  check(a, "mul");
  check(b, "mul");
  const int d = node_dim(a.id);
  if (node_dim(b.id) != d)
    throw ShapeError("mul: dimension mismatch " + shape_str(d) + " vs " + shape_str(node_dim(b.id)));
  const int id = push(Op::kMul, d, 1, a.id, b.id);
  const double* pa = val_ptr(a.id);
  const double* pb = val_ptr(b.id);
  double* out = val_ptr(id);
  for (int i = 0; i < d; ++i) out[i] = pa[i] * pb[i];
  return Value{id};
}

Value Tape::tanh(Value x) {
  check(x, "tanh");
  const int d = node_dim(x.id);
  const int id = push(Op::kTanh, d, 1, x.id);
  const double* px = val_ptr(x.id);
  double* out = val_ptr(id);
  // clamp one ulp inside +-1: keeps outputs in the open interval even where
  // std::tanh rounds to exactly +-1 (|x| > ~19)
  static const double kMax = std::nextafter(1.0, 0.0);
  for (int i = 0; i < d; ++i) out[i] = std::clamp(std::tanh(px[i]), -kMax, kMax);
  return Value{id};
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Value Tape::sigmoid(Value x) {
  check(x, "sigmoid");
  const int d = node_dim(x.id);
  const int id = push(Op::kSigmoid, d, 1, x.id);
  const double* px = val_ptr(x.id);
  double* out = val_ptr(id);
  for (int i = 0; i < d; ++i) out[i] = stable_sigmoid(px[i]);
  return Value{id};
}

Value Tape::softmax(Value s) {
  check(s, "softmax");
  const int d = node_dim(s.id);
  if (d < 1) throw ShapeError("softmax: empty input");
  const int id = push(Op::kSoftmax, d, 1, s.id);
  const double* ps = val_ptr(s.id);
  double* out = val_ptr(id);
  double mx = ps[0];
  for (int i = 1; i < d; ++i) mx = std::max(mx, ps[i]);
  double total = 0.0;
  for (int i = 0; i < d; ++i) {
    out[i] = std::exp(ps[i] - mx);
    total += out[i];
  }
  for (int i = 0; i < d; ++i) out[i] /= total;
  return Value{id};
}

Value Tape::dot(Value a, Value b) {
  check(a, "dot");
  check(b, "dot");
  const int d = node_dim(a.id);
  if (node_dim(b.id) != d)
    throw ShapeError("dot: dimension mismatch " + shape_str(d) + " vs " + shape_str(node_dim(b.id)));
  const int id = push(Op::kDot, 1, 1, a.id, b.id);
  const double* pa = val_ptr(a.id);
  const double* pb = val_ptr(b.id);
  double acc = 0.0;
  for (int i = 0; i < d; ++i) acc += pa[i] * pb[i];
  *val_ptr(id) = acc;
  return Value{id};
}

Value Tape::scale(Value x, double c) {
  check(x, "scale");
  const int d = node_dim(x.id);
  const int id = push(Op::kScale, d, 1, x.id);
  nodes_[id].c = c;
  const double* px = val_ptr(x.id);
  double* out = val_ptr(id);
  for (int i = 0; i < d; ++i) out[i] = c * px[i];
  return Value{id};
}

Value Tape::sum(std::span<const Value> xs) {
  require_same_dims(xs, "sum");
  const int d = node_dim(xs[0].id);
  const int args = grab_args(xs);
  const int id = push(Op::kSum, d, 1);
  nodes_[id].args = args;
  nodes_[id].nargs = static_cast<int>(xs.size());
  double* out = val_ptr(id);
  for (Value v : xs) {
    const double* p = val_ptr(v.id);
    for (int i = 0; i < d; ++i) out[i] += p[i];
  }
  return Value{id};
}

Value Tape::concat(std::span<const Value> xs) {
  if (xs.empty()) throw ShapeError("concat: empty input set");
  int total = 0;
  for (Value v : xs) {
    check(v, "concat");
    total += node_dim(v.id);
  }
  const int args = grab_args(xs);
  const int id = push(Op::kConcat, total, 1);
  nodes_[id].args = args;
  nodes_[id].nargs = static_cast<int>(xs.size());
  double* out = val_ptr(id);
  for (Value v : xs) {
    const double* p = val_ptr(v.id);
    const int d = node_dim(v.id);
    std::copy(p, p + d, out);
    out += d;
  }
  return Value{id};
}

Value Tape::weighted_sum(std::span<const Value> xs, Value alpha) {
  require_same_dims(xs, "weighted_sum");
  check(alpha, "weighted_sum");
  if (node_dim(alpha.id) != static_cast<int>(xs.size()))
    throw ShapeError("weighted_sum: weight dim " + shape_str(node_dim(alpha.id)) +
                     " does not match input count " + std::to_string(xs.size()));
  const int d = node_dim(xs[0].id);
  const int args = grab_args(xs);
  const int id = push(Op::kWeightedSum, d, 1, alpha.id);
  nodes_[id].args = args;
  nodes_[id].nargs = static_cast<int>(xs.size());
  const double* pa = val_ptr(alpha.id);
  double* out = val_ptr(id);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = pa[i];
    const double* p = val_ptr(xs[i].id);
    for (int k = 0; k < d; ++k) out[k] += w * p[k];
  }
  return Value{id};
}

Value Tape::max_pool(std::span<const Value> xs) {
  require_same_dims(xs, "max_pool");
  const int d = node_dim(xs[0].id);
  const int args = grab_args(xs);
  const int id = push(Op::kMaxPool, d, 1);
  nodes_[id].args = args;
  nodes_[id].nargs = static_cast<int>(xs.size());
  double* out = val_ptr(id);
  std::copy(val_ptr(xs[0].id), val_ptr(xs[0].id) + d, out);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double* p = val_ptr(xs[i].id);
    for (int k = 0; k < d; ++k) out[k] = std::max(out[k], p[k]);
  }
  return Value{id};
}

Value Tape::avg_pool(std::span<const Value> xs) {
  require_same_dims(xs, "avg_pool");
  const int d = node_dim(xs[0].id);
  const int args = grab_args(xs);
  const int id = push(Op::kAvgPool, d, 1);
  nodes_[id].args = args;
  nodes_[id].nargs = static_cast<int>(xs.size());
  const double inv = 1.0 / static_cast<double>(xs.size());
  double* out = val_ptr(id);
  for (Value v : xs) {
    const double* p = val_ptr(v.id);
    for (int k = 0; k < d; ++k) out[k] += inv * p[k];
  }
  return Value{id};
}

Value Tape::cross_entropy(Value p, int label) {
  check(p, "cross_entropy");
  const int d = node_dim(p.id);
  if (label < 0 || label >= d)
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     shape_str(d));
  const int id = push(Op::kCrossEntropy, 1, 1, p.id);
  nodes_[id].label = label;
  const double pl = val_ptr(p.id)[label];
  *val_ptr(id) = -std::log(pl < kLogFloor ? kLogFloor : pl);
  return Value{id};
}

int Tape::dim(Value v) const {
  check(v, "dim");
  return node_dim(v.id);
}

std::span<const double> Tape::value(Value v) const {
  check(v, "value");
  return {val_ptr(v.id), static_cast<std::size_t>(node_dim(v.id))};
}

Vector Tape::value_vec(Value v) const {
  auto s = value(v);
  Vector out(static_cast<int>(s.size()));
  std::copy(s.begin(), s.end(), out.data.begin());
  return out;
}

double Tape::scalar(Value v) const {
  check(v, "scalar");
  if (node_dim(v.id) != 1)
    throw ShapeError("scalar: node has dim " + shape_str(node_dim(v.id)));
  return *val_ptr(v.id);
}

std::span<const double> Tape::grad(Value v) const {
  check(v, "grad");
  if (!grads_valid_) throw ShapeError("grad: backward() has not run on this tape");
  return {grads_.data() + nodes_[v.id].val, static_cast<std::size_t>(node_dim(v.id))};
}

std::span<const double> Tape::grad(MatValue m) const {
  check(m, "grad");
  if (!grads_valid_) throw ShapeError("grad: backward() has not run on this tape");
  return {grads_.data() + nodes_[m.id].val, static_cast<std::size_t>(node_dim(m.id))};
}

Vector Tape::grad_vec(Value v) const {
  auto s = grad(v);
  Vector out(static_cast<int>(s.size()));
  std::copy(s.begin(), s.end(), out.data.begin());
  return out;
}

Matrix Tape::grad_mat(MatValue m) const {
  auto s = grad(m);
  const Node& n = nodes_[m.id];
  Matrix out(n.rows, n.cols);
  std::copy(s.begin(), s.end(), out.data.begin());
  return out;
}

void Tape::backward(Value loss) {
  check(loss, "backward");
  if (node_dim(loss.id) != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(node_dim(loss.id)));
  grads_.assign(vals_.size(), 0.0);
  grads_[nodes_[loss.id].val] = 1.0;

  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    const Node& n = nodes_[i];
    const int d = n.rows * n.cols;
    const double* gy = grads_.data() + n.val;
    const double* y = vals_.data() + n.val;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatVec: {
        const Node& wn = nodes_[n.a];
        double* gw = grads_.data() + wn.val;
        double* gx = grads_.data() + nodes_[n.b].val;
        const double* w = vals_.data() + wn.val;
        const double* x = vals_.data() + nodes_[n.b].val;
        for (int r = 0; r < wn.rows; ++r) {
          const double g = gy[r];
          if (g == 0.0) continue;
          const double* wrow = w + static_cast<std::size_t>(r) * wn.cols;
          double* gwrow = gw + static_cast<std::size_t>(r) * wn.cols;
          for (int c = 0; c < wn.cols; ++c) {
            gwrow[c] += g * x[c];
            gx[c] += wrow[c] * g;
          }
        }
        break;
      }
      case Op::kAdd: {
        double* ga = grads_.data() + nodes_[n.a].val;
        double* gb = grads_.data() + nodes_[n.b].val;
        for (int k = 0; k < d; ++k) {
          ga[k] += gy[k];
          gb[k] += gy[k];
        }
        break;
      }
      case Op::kMul: {
        double* ga = grads_.data() + nodes_[n.a].val;
        double* gb = grads_.data() + nodes_[n.b].val;
        const double* va = vals_.data() + nodes_[n.a].val;
        const double* vb = vals_.data() + nodes_[n.b].val;
        for (int k = 0; k < d; ++k) {
          ga[k] += gy[k] * vb[k];
          gb[k] += gy[k] * va[k];
        }
        break;
      }
      case Op::kTanh: {
        double* ga = grads_.data() + nodes_[n.a].val;
        for (int k = 0; k < d; ++k) ga[k] += gy[k] * (1.0 - y[k] * y[k]);
        break;
      }
      case Op::kSigmoid: {
        double* ga = grads_.data() + nodes_[n.a].val;
        for (int k = 0; k < d; ++k) ga[k] += gy[k] * y[k] * (1.0 - y[k]);
        break;
      }
      case Op::kSoftmax: {
        double* ga = grads_.data() + nodes_[n.a].val;
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += y[k] * gy[k];
        for (int k = 0; k < d; ++k) ga[k] += y[k] * (gy[k] - s);
        break;
      }
      case Op::kDot: {
        double* ga = grads_.data() + nodes_[n.a].val;
        double* gb = grads_.data() + nodes_[n.b].val;
        const double* va = vals_.data() + nodes_[n.a].val;
        const double* vb = vals_.data() + nodes_[n.b].val;
        const int da = node_dim(n.a);
        const double g = gy[0];
        for (int k = 0; k < da; ++k) {
          ga[k] += g * vb[k];
          gb[k] += g * va[k];
        }
        break;
      }
      case Op::kScale: {
        double* ga = grads_.data() + nodes_[n.a].val;
        for (int k = 0; k < d; ++k) ga[k] += n.c * gy[k];
        break;
      }
      case Op::kSum: {
        for (int j = 0; j < n.nargs; ++j) {
          double* ga = grads_.data() + nodes_[args_[n.args + j]].val;
          for (int k = 0; k < d; ++k) ga[k] += gy[k];
        }
        break;
      }
      case Op::kConcat: {
        int off = 0;
        for (int j = 0; j < n.nargs; ++j) {
          const int cid = args_[n.args + j];
          double* ga = grads_.data() + nodes_[cid].val;
          const int cd = node_dim(cid);
          for (int k = 0; k < cd; ++k) ga[k] += gy[off + k];
          off += cd;
        }
        break;
      }
      case Op::kWeightedSum: {
        double* galpha = grads_.data() + nodes_[n.a].val;
        const double* alpha = vals_.data() + nodes_[n.a].val;
        for (int j = 0; j < n.nargs; ++j) {
          const int cid = args_[n.args + j];
          double* gx = grads_.data() + nodes_[cid].val;
          const double* x = vals_.data() + nodes_[cid].val;
          double acc = 0.0;
          for (int k = 0; k < d; ++k) {
            acc += gy[k] * x[k];
            gx[k] += alpha[j] * gy[k];
          }
          galpha[j] += acc;
        }
        break;
      }
      case Op::kMaxPool: {
        // recompute the argmax; ties resolve to the lowest input index
        for (int k = 0; k < d; ++k) {
          if (gy[k] == 0.0) continue;
          for (int j = 0; j < n.nargs; ++j) {
            const int cid = args_[n.args + j];
            if (vals_[nodes_[cid].val + k] == y[k]) {
              grads_[nodes_[cid].val + k] += gy[k];
              break;
            }
          }
        }
        break;
      }
      case Op::kAvgPool: {
        const double inv = 1.0 / static_cast<double>(n.nargs);
        for (int j = 0; j < n.nargs; ++j) {
          double* ga = grads_.data() + nodes_[args_[n.args + j]].val;
          for (int k = 0; k < d; ++k) ga[k] += inv * gy[k];
        }
        break;
      }
      case Op::kCrossEntropy: {
        const double pl = vals_[nodes_[n.a].val + n.label];
        if (pl >= kLogFloor) grads_[nodes_[n.a].val + n.label] += -gy[0] / pl;
        break;
      }
    }
  }
  grads_valid_ = true;
}

}  // namespace grouppool
