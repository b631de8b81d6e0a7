#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace sculpt::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Handle to a node on a tape. Values are row-major doubles; activations are
// laid out NHWC.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Shape& shape() const;
  const std::vector<double>& value() const;
  std::int64_t numel() const;
  std::int64_t dim(int axis) const { return shape().at(static_cast<std::size_t>(axis)); }
  int rank() const { return static_cast<int>(shape().size()); }
  bool requires_grad() const;
  // Value of a one-element tensor.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Backward rule: maps the output gradient to one gradient per input (an
// invalid Tensor where `need` is false). Rules are written with the public
// ops, so under create_graph they are themselves recorded and differentiable.
using Backward =
    std::function<std::vector<Tensor>(const Tensor& self, const Tensor& grad, const std::vector<bool>& need)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> value);
  Tensor variable(Shape shape, std::vector<double> value);
  Tensor scalar(double v) { return constant({}, {v}); }
  Tensor zeros(const Shape& shape) { return constant(shape, std::vector<double>(numel(shape), 0.0)); }
  Tensor ones(const Shape& shape) { return constant(shape, std::vector<double>(numel(shape), 1.0)); }

  // Appends an op result. The backward rule is kept only when grad mode is on
  // and some input requires grad.
  Tensor record(Shape shape, std::vector<double> value, std::vector<Tensor> inputs, Backward backward);

  // Reverse-mode gradients of a one-element `loss` with respect to `wrt`.
  // Unreachable entries get zero gradients. With create_graph the returned
  // tensors carry history and can be differentiated again.
  std::vector<Tensor> grad(const Tensor& loss, const std::vector<Tensor>& wrt, bool create_graph = false);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  class NoGradGuard {
   public:
    explicit NoGradGuard(Tape& tape, bool enabled = false) : tape_(tape), saved_(tape.grad_enabled_) {
      tape.grad_enabled_ = enabled;
    }
    ~NoGradGuard() { tape_.grad_enabled_ = saved_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    Tape& tape_;
    bool saved_;
  };

 private:
  friend class Tensor;
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<int> inputs;
    Backward backward;
    bool requires_grad = false;
  };
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::deque<Node> nodes_;  // stable addresses while appending
  bool grad_enabled_ = true;
};

// --- primitives -------------------------------------------------------------
// Binary elementwise ops broadcast between operands of equal rank whose
// dimensions agree or are 1.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, double scale, double shift);  // scale·x + shift
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum_to(const Tensor& x, const Shape& shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, const Shape& shape);

// 2-D product op(a)·op(b) where op transposes when the flag is set.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// [N,H,W,C] → [N·H·W, k·k·C] zero-padded patches (odd k); column order
// (dy, dx, c). col2im is its adjoint.
Tensor im2col(const Tensor& x, int k);
Tensor col2im(const Tensor& cols, const Shape& image_shape, int k);

// Stride-1, zero-padded ("same") convolution of x [N,H,W,C] with
// w [k·k·C, Cout] in im2col column order, computed tap by tap without the
// column buffer. The two gradient maps are primitives too, so the set is
// closed under differentiation.
Tensor conv(const Tensor& x, const Tensor& w, int k);
Tensor conv_input_grad(const Tensor& g, const Tensor& w, int k);   // [N,H,W,Cout] → [N,H,W,C]
Tensor conv_weight_grad(const Tensor& x, const Tensor& g, int k);  // → [k·k·C, Cout]

// Nearest ×2 upsampling of [N,H,W,C] and its adjoint, the 2×2 window sum.
Tensor upsample2(const Tensor& x);
Tensor sumpool2(const Tensor& x);
Tensor avgpool2(const Tensor& x);

Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);

Tensor sum(const Tensor& x);  // shape {}
Tensor mean(const Tensor& x);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t begin, std::int64_t end);
// Zero-pads along `axis` so that x occupies [begin, begin + x.dim(axis)) of
// a length-`total` axis.
Tensor pad(const Tensor& x, int axis, std::int64_t begin, std::int64_t total);

// Fixed sparse linear map between row sets: out row r = Σ weight·in[index]
// over CSR entries of r. Rows carry any trailing channel count.
struct SparseRows {
  std::int64_t in_rows = 0;
  std::int64_t out_rows = 0;
  std::vector<std::uint32_t> offsets;  // out_rows + 1
  std::vector<std::uint32_t> index;
  std::vector<double> weight;
};
Tensor gather_rows(const Tensor& x, std::shared_ptr<const SparseRows> map);   // [in_rows,C] → [out_rows,C]
Tensor scatter_rows(const Tensor& x, std::shared_ptr<const SparseRows> map);  // adjoint

// --- composites -------------------------------------------------------------

// x [N,H,W,Cin], w [k·k·Cin, Cout], b [Cout] → [N,H,W,Cout]; stride 1, same padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int k);
// x [N,in], w [in,out], b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// --- parameters and optimizer ------------------------------------------------

struct Param {
  Shape shape;
  std::vector<double> value;
};

// Named parameters in a fixed (sorted) order.
class ParamSet {
 public:
  void add(const std::string& name, Shape shape, std::vector<double> value);
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t count() const;
  std::uint64_t hash() const;  // FNV-1a over names, shapes and values

  const std::map<std::string, Param>& items() const { return params_; }
  std::map<std::string, Param>& items() { return params_; }

 private:
  std::map<std::string, Param> params_;
};

// Parameters bound onto one tape for one step.
struct Bound {
  std::map<std::string, Tensor> tensors;
  const Tensor& operator[](const std::string& name) const;
  std::vector<Tensor> list() const;  // in name order
};
Bound bind(Tape& tape, const ParamSet& params, bool trainable);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::int64_t step = 0;
  std::int64_t skipped = 0;  // steps dropped for non-finite gradients
};

// One bias-corrected Adam update. Returns false (and counts it) when any
// gradient is non-finite; nothing is modified then.
bool adam_step(ParamSet& params, const std::map<std::string, std::vector<double>>& grads, AdamState& state,
               const AdamConfig& config = {});

}  // namespace sculpt::ad
