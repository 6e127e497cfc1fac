#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "moc/common.hpp"
#include "moc/numarray.hpp"
#include "moc/params.hpp"
#include "moc/rng.hpp"

namespace moc {

// Canonical self-normalizing activation constants, pinned to 16 digits so
// tests can assert exact values.
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluLambda = 1.0507009873554805;

inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double selu_scalar(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

inline NumArray selu(const NumArray& x) {
  NumArray out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = selu_scalar(x[i]);
  return out;
}

enum class Op {
  input,
  param,
  affine,
  matvec,
  tanh_fn,
  sigmoid_fn,
  relu,
  selu_fn,
  mul,
  row_scale,
  sum_rows,
  softmax,
  clamp,
  ratio,
  add,
  scale,
  dropout,
  alpha_dropout,
};

inline const char* to_string(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::param: return "param";
    case Op::affine: return "affine";
    case Op::matvec: return "matvec";
    case Op::tanh_fn: return "tanh";
    case Op::sigmoid_fn: return "sigmoid";
    case Op::relu: return "relu";
    case Op::selu_fn: return "selu";
    case Op::mul: return "mul";
    case Op::row_scale: return "row_scale";
    case Op::sum_rows: return "sum_rows";
    case Op::softmax: return "softmax";
    case Op::clamp: return "clamp";
    case Op::ratio: return "ratio";
    case Op::add: return "add";
    case Op::scale: return "scale";
    case Op::dropout: return "dropout";
    case Op::alpha_dropout: return "alpha_dropout";
  }
  return "unknown";
}

struct ForwardOptions {
  bool training = false;
  // RNG streams for dropout nodes; a node picks the stream it was built with.
  std::array<Rng*, 2> streams{nullptr, nullptr};
};

// Reverse-mode computation graph over a fixed op vocabulary. Nodes are
// appended in topological order (arguments must already exist), forward
// caches every node value, and backward walks the node list in exact
// reverse order. One graph instance is single-threaded; distinct instances
// are independent.
class Graph {
 public:
  int input(std::vector<std::size_t> signature) {
    Node n;
    n.op = Op::input;
    n.signature = std::move(signature);
    input_ids_.push_back(next_id());
    return push(std::move(n));
  }

  int param(int slot) {
    Node n;
    n.op = Op::param;
    n.w_slot = slot;
    return push(std::move(n));
  }

  // y = W x + b for rank-1 inputs, row-wise for rank-2. W has shape
  // (out, in); b is optional.
  int affine(int x, int w_slot, int b_slot = -1) {
    Node n;
    n.op = Op::affine;
    n.a = check_arg(x);
    n.w_slot = w_slot;
    n.b_slot = b_slot;
    return push(std::move(n));
  }

  // y_j = sum_i X[j,i] * w[i]; X rank-2, w a rank-1 parameter.
  int matvec(int x, int w_slot) {
    Node n;
    n.op = Op::matvec;
    n.a = check_arg(x);
    n.w_slot = w_slot;
    return push(std::move(n));
  }

  int tanh_node(int x) { return unary(Op::tanh_fn, x); }
  int sigmoid_node(int x) { return unary(Op::sigmoid_fn, x); }
  int relu_node(int x) { return unary(Op::relu, x); }
  int selu_node(int x) { return unary(Op::selu_fn, x); }

  int mul(int a, int b) { return binary(Op::mul, a, b); }

  // Scales row j of a rank-2 array by s[j].
  int row_scale(int x, int s) { return binary(Op::row_scale, x, s); }

  // Sum over axis 0: (n, d) -> (d); (n) -> (1).
  int sum_rows(int x) { return unary(Op::sum_rows, x); }

  // Normalized exponential weighting of a rank-1 array; the maximum entry is
  // subtracted before exponentiation so large scores cannot overflow.
  int softmax(int x) { return unary(Op::softmax, x); }

  int clamp(int x, double lo, double hi) {
    Node n;
    n.op = Op::clamp;
    n.a = check_arg(x);
    n.lo = lo;
    n.hi = hi;
    return push(std::move(n));
  }

  // Scalar quotient a / b.
  int ratio(int num, int den) { return binary(Op::ratio, num, den); }

  int add(int a, int b) { return binary(Op::add, a, b); }

  // Multiplication by a fixed constant.
  int scale(int x, double factor) {
    Node n;
    n.op = Op::scale;
    n.a = check_arg(x);
    n.factor = factor;
    return push(std::move(n));
  }

  // Inverted dropout; identity in eval mode or at rate 0.
  int dropout(int x, double rate, int stream) {
    require(rate >= 0.0 && rate < 1.0, ErrorCategory::argument, "dropout rate must be in [0,1)");
    Node n;
    n.op = Op::dropout;
    n.a = check_arg(x);
    n.rate = rate;
    n.stream = stream;
    return push(std::move(n));
  }

  // Dropout variant that preserves the self-normalizing mean/variance:
  // dropped entries are set to the negative saturation value -lambda*alpha
  // and the result is rescaled affinely.
  int alpha_dropout(int x, double rate, int stream) {
    require(rate >= 0.0 && rate < 1.0, ErrorCategory::argument, "dropout rate must be in [0,1)");
    Node n;
    n.op = Op::alpha_dropout;
    n.a = check_arg(x);
    n.rate = rate;
    n.stream = stream;
    return push(std::move(n));
  }

  void mark_output(int node) {
    check_arg(node);
    output_ = node;
  }

  int output_node() const { return output_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_inputs() const { return static_cast<int>(input_ids_.size()); }

  const NumArray& forward(const ParamSet& params, std::span<const NumArray> inputs,
                          const ForwardOptions& opts = {}) {
    require(output_ >= 0, ErrorCategory::state, "graph has no output node");
    require(inputs.size() == input_ids_.size(), ErrorCategory::shape,
            "graph expects " + std::to_string(input_ids_.size()) + " inputs, got " +
                std::to_string(inputs.size()));
    params_ = &params;
    std::size_t input_index = 0;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      Node& n = nodes_[id];
      switch (n.op) {
        case Op::input:
          forward_input(id, n, inputs[input_index++]);
          break;
        case Op::param:
          forward_param(id, n, params);
          break;
        case Op::affine:
          forward_affine(id, n, params);
          break;
        case Op::matvec:
          forward_matvec(id, n, params);
          break;
        case Op::tanh_fn:
        case Op::sigmoid_fn:
        case Op::relu:
        case Op::selu_fn:
        case Op::clamp:
        case Op::scale:
          forward_elementwise(n);
          break;
        case Op::mul:
          forward_mul(id, n);
          break;
        case Op::row_scale:
          forward_row_scale(id, n);
          break;
        case Op::sum_rows:
          forward_sum_rows(n);
          break;
        case Op::softmax:
          forward_softmax(id, n);
          break;
        case Op::ratio:
          forward_ratio(id, n);
          break;
        case Op::add:
          forward_add(id, n);
          break;
        case Op::dropout:
          forward_dropout(n, opts);
          break;
        case Op::alpha_dropout:
          forward_alpha_dropout(n, opts);
          break;
      }
    }
    has_forward_ = true;
    return nodes_[static_cast<std::size_t>(output_)].out;
  }

  // Gradients of (upstream * scalar output) w.r.t. every parameter,
  // accumulated into `store`. The parameter set passed to the matching
  // forward call must still be alive.
  void backward_into(double upstream, GradStore& store) {
    require(has_forward_, ErrorCategory::state, "backward called before forward");
    require(std::isfinite(upstream), ErrorCategory::argument, "upstream must be finite");
    const Node& out_node = nodes_[static_cast<std::size_t>(output_)];
    require(out_node.out.size() == 1, ErrorCategory::state,
            "backward requires a scalar output node");
    require(store.size() == params_->size(), ErrorCategory::shape,
            "gradient store does not match the parameter set used at forward");

    adjoints_.resize(nodes_.size());
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      NumArray& adj = adjoints_[id];
      if (!adj.same_shape(nodes_[id].out)) adj = NumArray(nodes_[id].out.shape());
      adj.fill(0.0);
    }
    adjoints_[static_cast<std::size_t>(output_)][0] = upstream;

    for (std::size_t rid = nodes_.size(); rid-- > 0;) {
      backward_node(rid, store);
    }
  }

  GradStore backward(double upstream) {
    require(has_forward_, ErrorCategory::state, "backward called before forward");
    GradStore store(*params_);
    backward_into(upstream, store);
    return store;
  }

  const NumArray& node_array(int id) const {
    require(has_forward_, ErrorCategory::state, "node values are only available after forward");
    return nodes_[static_cast<std::size_t>(id)].out;
  }

  double node_value(int id) const { return node_array(id).scalar_value(); }

 private:
  struct Node {
    Op op = Op::input;
    int a = -1;
    int b = -1;
    int w_slot = -1;
    int b_slot = -1;
    double lo = 0.0, hi = 0.0;
    double rate = 0.0;
    double factor = 1.0;
    int stream = 0;
    std::vector<std::size_t> signature;  // input nodes; 0 means any size
    NumArray out;
    NumArray aux;  // dropout masks
    bool mask_active = false;
  };

  int next_id() const { return static_cast<int>(nodes_.size()); }

  int push(Node n) {
    nodes_.push_back(std::move(n));
    has_forward_ = false;
    return static_cast<int>(nodes_.size()) - 1;
  }

  int check_arg(int id) {
    require(id >= 0 && id < next_id(), ErrorCategory::argument,
            "node argument " + std::to_string(id) + " does not exist yet");
    return id;
  }

  int unary(Op op, int x) {
    Node n;
    n.op = op;
    n.a = check_arg(x);
    return push(std::move(n));
  }

  int binary(Op op, int a, int b) {
    Node n;
    n.op = op;
    n.a = check_arg(a);
    n.b = check_arg(b);
    return push(std::move(n));
  }

  [[noreturn]] void shape_fail(std::size_t id, const Node& n, const std::string& detail) const {
    fail(ErrorCategory::shape,
         "node " + std::to_string(id) + " (" + to_string(n.op) + "): " + detail);
  }

  static void ensure_shape(NumArray& a, const std::vector<std::size_t>& shape) {
    if (a.shape() != shape) a = NumArray(shape);
  }

  const NumArray& val(int id) const { return nodes_[static_cast<std::size_t>(id)].out; }

  const NumArray& param_tensor(std::size_t id, const Node& n, const ParamSet& params,
                               int slot) const {
    if (slot < 0 || slot >= params.size()) {
      fail(ErrorCategory::shape, "node " + std::to_string(id) + " (" + to_string(n.op) +
                                     "): parameter slot " + std::to_string(slot) +
                                     " outside the provided parameter set");
    }
    return params.tensor(slot);
  }

  // ---- forward kernels ----

  void forward_input(std::size_t id, Node& n, const NumArray& in) {
    if (in.rank() != n.signature.size()) {
      shape_fail(id, n,
                 "expected rank " + std::to_string(n.signature.size()) + " input with signature " +
                     shape_string(n.signature) + ", got shape " + shape_string(in));
    }
    for (std::size_t d = 0; d < n.signature.size(); ++d) {
      if (n.signature[d] != 0 && n.signature[d] != in.shape()[d]) {
        shape_fail(id, n, "expected input signature " + shape_string(n.signature) +
                              ", got shape " + shape_string(in));
      }
      if (in.shape()[d] == 0) shape_fail(id, n, "input has an empty dimension");
    }
    n.out = in;
  }

  void forward_param(std::size_t id, Node& n, const ParamSet& params) {
    n.out = param_tensor(id, n, params, n.w_slot);
  }

  void forward_affine(std::size_t id, Node& n, const ParamSet& params) {
    const NumArray& x = val(n.a);
    const NumArray& w = param_tensor(id, n, params, n.w_slot);
    if (w.rank() != 2) shape_fail(id, n, "weight must be rank 2, got " + shape_string(w));
    const std::size_t out_dim = w.rows();
    const std::size_t in_dim = w.cols();
    const double* bias = nullptr;
    if (n.b_slot >= 0) {
      const NumArray& b = param_tensor(id, n, params, n.b_slot);
      if (b.rank() != 1 || b.size() != out_dim) {
        shape_fail(id, n, "bias must have shape (" + std::to_string(out_dim) + "), got " +
                              shape_string(b));
      }
      bias = b.data();
    }
    if (x.rank() == 1) {
      if (x.size() != in_dim) {
        shape_fail(id, n, "expected input of size " + std::to_string(in_dim) + ", got " +
                              shape_string(x));
      }
      ensure_shape(n.out, {out_dim});
      const double* px = x.data();
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double* wrow = w.data() + o * in_dim;
        double acc = bias ? bias[o] : 0.0;
        for (std::size_t i = 0; i < in_dim; ++i) acc += wrow[i] * px[i];
        n.out[o] = acc;
      }
    } else if (x.rank() == 2) {
      if (x.cols() != in_dim) {
        shape_fail(id, n, "expected input with " + std::to_string(in_dim) + " columns, got " +
                              shape_string(x));
      }
      const std::size_t rows = x.rows();
      ensure_shape(n.out, {rows, out_dim});
      for (std::size_t j = 0; j < rows; ++j) {
        const double* px = x.data() + j * in_dim;
        double* py = n.out.data() + j * out_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double* wrow = w.data() + o * in_dim;
          double acc = bias ? bias[o] : 0.0;
          for (std::size_t i = 0; i < in_dim; ++i) acc += wrow[i] * px[i];
          py[o] = acc;
        }
      }
    } else {
      shape_fail(id, n, "input must be rank 1 or 2, got " + shape_string(x));
    }
  }

  void forward_matvec(std::size_t id, Node& n, const ParamSet& params) {
    const NumArray& x = val(n.a);
    const NumArray& w = param_tensor(id, n, params, n.w_slot);
    if (x.rank() != 2) shape_fail(id, n, "input must be rank 2, got " + shape_string(x));
    if (w.rank() != 1 || w.size() != x.cols()) {
      shape_fail(id, n, "weight must have shape (" + std::to_string(x.cols()) + "), got " +
                            shape_string(w));
    }
    const std::size_t rows = x.rows(), k = x.cols();
    ensure_shape(n.out, {rows});
    const double* pw = w.data();
    for (std::size_t j = 0; j < rows; ++j) {
      const double* px = x.data() + j * k;
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += px[i] * pw[i];
      n.out[j] = acc;
    }
  }

  void forward_elementwise(Node& n) {
    const NumArray& x = val(n.a);
    ensure_shape(n.out, x.shape());
    const double* px = x.data();
    double* py = n.out.data();
    switch (n.op) {
      case Op::tanh_fn:
        for (std::size_t i = 0; i < x.size(); ++i) py[i] = std::tanh(px[i]);
        break;
      case Op::sigmoid_fn:
        for (std::size_t i = 0; i < x.size(); ++i) py[i] = sigmoid_scalar(px[i]);
        break;
      case Op::relu:
        for (std::size_t i = 0; i < x.size(); ++i) py[i] = px[i] > 0.0 ? px[i] : 0.0;
        break;
      case Op::selu_fn:
        for (std::size_t i = 0; i < x.size(); ++i) py[i] = selu_scalar(px[i]);
        break;
      case Op::clamp:
        for (std::size_t i = 0; i < x.size(); ++i) {
          py[i] = px[i] < n.lo ? n.lo : (px[i] > n.hi ? n.hi : px[i]);
        }
        break;
      case Op::scale:
        for (std::size_t i = 0; i < x.size(); ++i) py[i] = px[i] * n.factor;
        break;
      default:
        fail(ErrorCategory::state, "not an elementwise op");
    }
  }

  void forward_mul(std::size_t id, Node& n) {
    const NumArray& a = val(n.a);
    const NumArray& b = val(n.b);
    if (!a.same_shape(b)) {
      shape_fail(id, n, "operands differ in shape: " + shape_string(a) + " vs " + shape_string(b));
    }
    ensure_shape(n.out, a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) n.out[i] = a[i] * b[i];
  }

  void forward_row_scale(std::size_t id, Node& n) {
    const NumArray& x = val(n.a);
    const NumArray& s = val(n.b);
    if (x.rank() != 2) shape_fail(id, n, "first operand must be rank 2, got " + shape_string(x));
    if (s.rank() != 1 || s.size() != x.rows()) {
      shape_fail(id, n, "weights must have shape (" + std::to_string(x.rows()) + "), got " +
                            shape_string(s));
    }
    ensure_shape(n.out, x.shape());
    const std::size_t cols = x.cols();
    for (std::size_t j = 0; j < x.rows(); ++j) {
      const double sj = s[j];
      const double* px = x.data() + j * cols;
      double* py = n.out.data() + j * cols;
      for (std::size_t i = 0; i < cols; ++i) py[i] = sj * px[i];
    }
  }

  void forward_sum_rows(Node& n) {
    const NumArray& x = val(n.a);
    if (x.rank() == 1) {
      ensure_shape(n.out, {1});
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
      n.out[0] = acc;
    } else {
      const std::size_t cols = x.cols();
      ensure_shape(n.out, {cols});
      n.out.fill(0.0);
      for (std::size_t j = 0; j < x.rows(); ++j) {
        const double* px = x.data() + j * cols;
        for (std::size_t i = 0; i < cols; ++i) n.out[i] += px[i];
      }
    }
  }

  void forward_softmax(std::size_t id, Node& n) {
    const NumArray& x = val(n.a);
    if (x.rank() != 1) shape_fail(id, n, "input must be rank 1, got " + shape_string(x));
    ensure_shape(n.out, x.shape());
    double m = x[0];
    for (std::size_t i = 1; i < x.size(); ++i) m = std::max(m, x[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      n.out[i] = std::exp(x[i] - m);
      total += n.out[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) n.out[i] /= total;
  }

  void forward_ratio(std::size_t id, Node& n) {
    const NumArray& a = val(n.a);
    const NumArray& b = val(n.b);
    if (a.size() != 1 || b.size() != 1) {
      shape_fail(id, n, "both operands must be scalars, got " + shape_string(a) + " and " +
                            shape_string(b));
    }
    ensure_shape(n.out, {1});
    n.out[0] = a[0] / b[0];
  }

  void forward_add(std::size_t id, Node& n) {
    const NumArray& a = val(n.a);
    const NumArray& b = val(n.b);
    if (!a.same_shape(b)) {
      shape_fail(id, n, "operands differ in shape: " + shape_string(a) + " vs " + shape_string(b));
    }
    ensure_shape(n.out, a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) n.out[i] = a[i] + b[i];
  }

  Rng* stream_for(const Node& n, const ForwardOptions& opts) const {
    Rng* rng = opts.streams[static_cast<std::size_t>(n.stream)];
    require(rng != nullptr, ErrorCategory::state,
            "dropout node requires RNG stream " + std::to_string(n.stream) + " in training mode");
    return rng;
  }

  void forward_dropout(Node& n, const ForwardOptions& opts) {
    const NumArray& x = val(n.a);
    ensure_shape(n.out, x.shape());
    if (!opts.training || n.rate == 0.0) {
      n.mask_active = false;
      n.out.values() = x.values();
      return;
    }
    Rng* rng = stream_for(n, opts);
    ensure_shape(n.aux, x.shape());
    const double keep_scale = 1.0 / (1.0 - n.rate);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool keep = rng->uniform() >= n.rate;
      n.aux[i] = keep ? keep_scale : 0.0;
      n.out[i] = x[i] * n.aux[i];
    }
    n.mask_active = true;
  }

  void forward_alpha_dropout(Node& n, const ForwardOptions& opts) {
    const NumArray& x = val(n.a);
    ensure_shape(n.out, x.shape());
    if (!opts.training || n.rate == 0.0) {
      n.mask_active = false;
      n.out.values() = x.values();
      return;
    }
    Rng* rng = stream_for(n, opts);
    ensure_shape(n.aux, x.shape());
    const double keep = 1.0 - n.rate;
    const double neg_sat = -kSeluLambda * kSeluAlpha;
    const double a = 1.0 / std::sqrt(keep + neg_sat * neg_sat * keep * n.rate);
    const double b = -a * n.rate * neg_sat;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool kept = rng->uniform() >= n.rate;
      // aux stores d(out)/d(in): a for kept entries, 0 for dropped ones.
      n.aux[i] = kept ? a : 0.0;
      n.out[i] = kept ? a * x[i] + b : a * neg_sat + b;
    }
    n.mask_active = true;
  }

  // ---- backward kernels ----

  void backward_node(std::size_t id, GradStore& store) {
    const Node& n = nodes_[id];
    const NumArray& dy = adjoints_[id];
    switch (n.op) {
      case Op::input:
        break;  // gradients w.r.t. raw inputs are not collected
      case Op::param: {
        NumArray& g = store.grad(n.w_slot);
        for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
        break;
      }
      case Op::affine:
        backward_affine(n, dy, store);
        break;
      case Op::matvec:
        backward_matvec(n, dy, store);
        break;
      case Op::tanh_fn: {
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double t = n.out[i];
          dx[i] += dy[i] * (1.0 - t * t);
        }
        break;
      }
      case Op::sigmoid_fn: {
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double s = n.out[i];
          dx[i] += dy[i] * s * (1.0 - s);
        }
        break;
      }
      case Op::relu: {
        const NumArray& x = val(n.a);
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          if (x[i] > 0.0) dx[i] += dy[i];
        }
        break;
      }
      case Op::selu_fn: {
        const NumArray& x = val(n.a);
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double d = x[i] > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x[i]);
          dx[i] += dy[i] * d;
        }
        break;
      }
      case Op::clamp: {
        const NumArray& x = val(n.a);
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          if (x[i] > n.lo && x[i] < n.hi) dx[i] += dy[i];
        }
        break;
      }
      case Op::scale: {
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * n.factor;
        break;
      }
      case Op::mul: {
        const NumArray& a = val(n.a);
        const NumArray& b = val(n.b);
        NumArray& da = adjoints_[static_cast<std::size_t>(n.a)];
        NumArray& db = adjoints_[static_cast<std::size_t>(n.b)];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          da[i] += dy[i] * b[i];
          db[i] += dy[i] * a[i];
        }
        break;
      }
      case Op::row_scale: {
        const NumArray& x = val(n.a);
        const NumArray& s = val(n.b);
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        NumArray& ds = adjoints_[static_cast<std::size_t>(n.b)];
        const std::size_t cols = x.cols();
        for (std::size_t j = 0; j < x.rows(); ++j) {
          const double* pdy = dy.data() + j * cols;
          const double* px = x.data() + j * cols;
          double* pdx = dx.data() + j * cols;
          double acc = 0.0;
          for (std::size_t i = 0; i < cols; ++i) {
            pdx[i] += pdy[i] * s[j];
            acc += pdy[i] * px[i];
          }
          ds[j] += acc;
        }
        break;
      }
      case Op::sum_rows: {
        const NumArray& x = val(n.a);
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        if (x.rank() == 1) {
          for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[0];
        } else {
          const std::size_t cols = x.cols();
          for (std::size_t j = 0; j < x.rows(); ++j) {
            double* pdx = dx.data() + j * cols;
            for (std::size_t i = 0; i < cols; ++i) pdx[i] += dy[i];
          }
        }
        break;
      }
      case Op::softmax: {
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        double dot = 0.0;
        for (std::size_t i = 0; i < dy.size(); ++i) dot += dy[i] * n.out[i];
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += n.out[i] * (dy[i] - dot);
        break;
      }
      case Op::ratio: {
        const double a = val(n.a)[0];
        const double b = val(n.b)[0];
        adjoints_[static_cast<std::size_t>(n.a)][0] += dy[0] / b;
        adjoints_[static_cast<std::size_t>(n.b)][0] += -dy[0] * a / (b * b);
        break;
      }
      case Op::add: {
        NumArray& da = adjoints_[static_cast<std::size_t>(n.a)];
        NumArray& db = adjoints_[static_cast<std::size_t>(n.b)];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          da[i] += dy[i];
          db[i] += dy[i];
        }
        break;
      }
      case Op::dropout:
      case Op::alpha_dropout: {
        NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
        if (!n.mask_active) {
          for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        } else {
          for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * n.aux[i];
        }
        break;
      }
    }
  }

  void backward_affine(const Node& n, const NumArray& dy, GradStore& store) {
    const NumArray& x = val(n.a);
    const NumArray& w = params_->tensor(n.w_slot);
    NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
    NumArray& dw = store.grad(n.w_slot);
    const std::size_t out_dim = w.rows();
    const std::size_t in_dim = w.cols();
    if (x.rank() == 1) {
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double g = dy[o];
        const double* wrow = w.data() + o * in_dim;
        double* dwrow = dw.data() + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) {
          dwrow[i] += g * x[i];
          dx[i] += g * wrow[i];
        }
      }
      if (n.b_slot >= 0) {
        NumArray& db = store.grad(n.b_slot);
        for (std::size_t o = 0; o < out_dim; ++o) db[o] += dy[o];
      }
    } else {
      const std::size_t rows = x.rows();
      for (std::size_t j = 0; j < rows; ++j) {
        const double* pdy = dy.data() + j * out_dim;
        const double* px = x.data() + j * in_dim;
        double* pdx = dx.data() + j * in_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double g = pdy[o];
          const double* wrow = w.data() + o * in_dim;
          double* dwrow = dw.data() + o * in_dim;
          for (std::size_t i = 0; i < in_dim; ++i) {
            dwrow[i] += g * px[i];
            pdx[i] += g * wrow[i];
          }
        }
      }
      if (n.b_slot >= 0) {
        NumArray& db = store.grad(n.b_slot);
        for (std::size_t j = 0; j < rows; ++j) {
          const double* pdy = dy.data() + j * out_dim;
          for (std::size_t o = 0; o < out_dim; ++o) db[o] += pdy[o];
        }
      }
    }
  }

  void backward_matvec(const Node& n, const NumArray& dy, GradStore& store) {
    const NumArray& x = val(n.a);
    const NumArray& w = params_->tensor(n.w_slot);
    NumArray& dx = adjoints_[static_cast<std::size_t>(n.a)];
    NumArray& dw = store.grad(n.w_slot);
    const std::size_t k = x.cols();
    for (std::size_t j = 0; j < x.rows(); ++j) {
      const double g = dy[j];
      const double* px = x.data() + j * k;
      double* pdx = dx.data() + j * k;
      for (std::size_t i = 0; i < k; ++i) {
        dw[i] += g * px[i];
        pdx[i] += g * w[i];
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<int> input_ids_;
  std::vector<NumArray> adjoints_;
  int output_ = -1;
  bool has_forward_ = false;
  const ParamSet* params_ = nullptr;
};

// Maximum relative error between reverse-mode gradients and central finite
// differences over every parameter entry. The relative error denominator is
// max(|a|, |b|, 1e-8). Graphs with no parameters return 0.
inline double check_gradients(Graph& graph, const ParamSet& params,
                              std::span<const NumArray> inputs, double h) {
  require(h >= 1e-7 && h <= 1e-3, ErrorCategory::argument,
          "finite-difference step must lie in [1e-7, 1e-3]");
  ParamSet p = params;
  const NumArray& out = graph.forward(p, inputs);
  require(out.size() == 1, ErrorCategory::argument,
          "gradient checking requires a scalar-output graph");
  GradStore analytic = graph.backward(1.0);
  if (p.flat_size() == 0) return 0.0;

  double max_rel = 0.0;
  for (std::size_t i = 0; i < p.flat_size(); ++i) {
    p.add_flat(i, h);
    const double f_plus = graph.forward(p, inputs).scalar_value();
    p.add_flat(i, -2.0 * h);
    const double f_minus = graph.forward(p, inputs).scalar_value();
    p.add_flat(i, h);
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      fail(ErrorCategory::numeric,
           "non-finite value while perturbing parameter entry " + std::to_string(i));
    }
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double a = analytic.get_flat(i);
    const double denom = std::max({std::abs(fd), std::abs(a), 1e-8});
    max_rel = std::max(max_rel, std::abs(fd - a) / denom);
  }
  // leave caches (and the retained parameter pointer) on the caller's set
  graph.forward(params, inputs);
  return max_rel;
}

}  // namespace moc
