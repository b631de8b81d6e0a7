#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "error.hpp"
#include "rng.hpp"

namespace sculpt::ad {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

// --- Tensor / Tape ---------------------------------------------------------------

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Tensor::value() const { return tape_->node(id_).value; }
std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(value().size()); }
bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }

double Tensor::item() const {
  require(numel() == 1, Errc::invalid_argument, "item() needs a one-element tensor, got " + shape_str(shape()));
  return value()[0];
}

namespace {

void check_valid(const Tensor& t, const char* op) {
  require(t.valid(), Errc::invalid_argument, std::string(op) + ": invalid tensor");
}

void check_same_tape(const Tensor& a, const Tensor& b, const char* op) {
  check_valid(a, op);
  check_valid(b, op);
  require(a.tape() == b.tape(), Errc::invalid_argument, std::string(op) + ": tensors live on different tapes");
}

}  // namespace

Tensor Tape::constant(Shape shape, std::vector<double> value) {
  require(numel(shape) == static_cast<std::int64_t>(value.size()), Errc::invalid_argument,
          "tensor shape " + shape_str(shape) + " does not match " + std::to_string(value.size()) + " values");
  nodes_.push_back(Node{std::move(shape), std::move(value), {}, {}, false});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor Tape::variable(Shape shape, std::vector<double> value) {
  Tensor t = constant(std::move(shape), std::move(value));
  nodes_.back().requires_grad = true;
  return t;
}

Tensor Tape::record(Shape shape, std::vector<double> value, std::vector<Tensor> inputs, Backward backward) {
  bool rg = false;
  if (grad_enabled_)
    for (const auto& in : inputs) rg = rg || in.requires_grad();
  Node n{std::move(shape), std::move(value), {}, {}, rg};
  if (rg) {
    n.inputs.reserve(inputs.size());
    for (const auto& in : inputs) n.inputs.push_back(in.id());
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

std::vector<Tensor> Tape::grad(const Tensor& loss, const std::vector<Tensor>& wrt, bool create_graph) {
  check_valid(loss, "grad");
  require(loss.tape() == this, Errc::invalid_argument, "grad: loss is on another tape");
  require(loss.numel() == 1, Errc::invalid_argument, "grad: loss must be a scalar, got " + shape_str(loss.shape()));
  const int last = loss.id();
  std::vector<char> needed(static_cast<std::size_t>(last) + 1, 0);
  for (const auto& w : wrt) {
    check_valid(w, "grad");
    require(w.tape() == this, Errc::invalid_argument, "grad: wrt tensor is on another tape");
    if (w.id() <= last) needed[w.id()] = 1;
  }
  for (int i = 0; i <= last; ++i) {
    if (needed[i]) continue;
    for (int in : nodes_[i].inputs)
      if (needed[in]) {
        needed[i] = 1;
        break;
      }
  }

  std::vector<char> is_wrt(needed.size(), 0);
  for (const auto& w : wrt)
    if (w.id() <= last) is_wrt[w.id()] = 1;

  NoGradGuard mode(*this, create_graph);
  std::vector<Tensor> grads(static_cast<std::size_t>(last) + 1);
  grads[last] = constant(loss.shape(), std::vector<double>(1, 1.0));
  for (int i = last; i >= 0; --i) {
    if (!grads[i].valid() || !needed[i]) continue;
    const Node& n = nodes_[i];
    if (!n.backward) continue;
    std::vector<bool> need(n.inputs.size());
    bool any = false;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) any |= (need[k] = needed[n.inputs[k]] != 0);
    if (!any) continue;
    const auto input_grads = n.backward(Tensor(this, i), grads[i], need);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      if (!need[k] || !input_grads[k].valid()) continue;
      Tensor& slot = grads[n.inputs[k]];
      slot = slot.valid() ? add(slot, input_grads[k]) : input_grads[k];
    }
    if (!is_wrt[i]) grads[i] = Tensor();
  }
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.id() <= last && grads[w.id()].valid())
      out.push_back(grads[w.id()]);
    else
      out.push_back(zeros(w.shape()));
  }
  return out;
}

// --- elementwise and broadcasting ------------------------------------------------

namespace {

using Index = std::int64_t;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::string msg = std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b);
  require(a.size() == b.size(), Errc::invalid_argument, msg);
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1)
      out[i] = a[i];
    else if (a[i] == 1)
      out[i] = b[i];
    else
      fail(Errc::invalid_argument, msg);
  }
  return out;
}

// Element strides of `in` laid over `out`, zero along broadcast axes.
std::vector<Index> strides_over(const Shape& in, const Shape& out) {
  std::vector<Index> s(in.size(), 0);
  Index step = 1;
  for (int d = static_cast<int>(in.size()) - 1; d >= 0; --d) {
    s[d] = (in[d] == 1 && out[d] != 1) ? 0 : step;
    step *= in[d];
  }
  return s;
}

// Visits every element of `out` in row-major order as f(o, ia, ib) with the
// matching offsets under strides sa and sb.
template <class F>
void for_each2(const Shape& out, const std::vector<Index>& sa, const std::vector<Index>& sb, F&& f) {
  const int r = static_cast<int>(out.size());
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const Index n = numel(out);
  const Index inner = out[r - 1];
  if (n == 0) return;
  const Index sa_in = sa[r - 1];
  const Index sb_in = sb[r - 1];
  std::vector<Index> idx(r, 0);
  Index oa = 0;
  Index ob = 0;
  for (Index o = 0; o < n; o += inner) {
    for (Index j = 0; j < inner; ++j) f(o + j, oa + j * sa_in, ob + j * sb_in);
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F&& f, Backward backward) {
  check_same_tape(a, b, op);
  const Shape out = broadcast_shape(a.shape(), b.shape(), op);
  std::vector<double> v(static_cast<std::size_t>(numel(out)));
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(av[i], bv[i]);
  } else {
    for_each2(out, strides_over(a.shape(), out), strides_over(b.shape(), out),
              [&](Index o, Index ia, Index ib) { v[o] = f(av[ia], bv[ib]); });
  }
  return a.tape()->record(out, std::move(v), {a, b}, std::move(backward));
}

template <class F>
Tensor unary(const Tensor& x, F&& f, Backward backward) {
  check_valid(x, "unary op");
  const auto& xv = x.value();
  std::vector<double> v(xv.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(xv[i]);
  return x.tape()->record(x.shape(), std::move(v), {x}, std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; },
                [a, b](const Tensor&, const Tensor& g, const std::vector<bool>& need) {
                  return std::vector<Tensor>{need[0] ? sum_to(g, a.shape()) : Tensor(),
                                             need[1] ? sum_to(g, b.shape()) : Tensor()};
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; },
                [a, b](const Tensor&, const Tensor& g, const std::vector<bool>& need) {
                  return std::vector<Tensor>{need[0] ? sum_to(g, a.shape()) : Tensor(),
                                             need[1] ? neg(sum_to(g, b.shape())) : Tensor()};
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; },
                [a, b](const Tensor&, const Tensor& g, const std::vector<bool>& need) {
                  return std::vector<Tensor>{need[0] ? sum_to(mul(g, b), a.shape()) : Tensor(),
                                             need[1] ? sum_to(mul(g, a), b.shape()) : Tensor()};
                });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary(x, [=](double v) { return scale * v + shift; },
               [scale](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                 return std::vector<Tensor>{affine(g, scale, 0.0)};
               });
}

Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }
Tensor square(const Tensor& x) { return mul(x, x); }

Tensor sum_to(const Tensor& x, const Shape& shape) {
  check_valid(x, "sum_to");
  if (x.shape() == shape) return x;
  const std::string msg = "sum_to: cannot reduce " + shape_str(x.shape()) + " to " + shape_str(shape);
  require(shape.size() == x.shape().size(), Errc::invalid_argument, msg);
  for (std::size_t i = 0; i < shape.size(); ++i)
    require(shape[i] == x.shape()[i] || shape[i] == 1, Errc::invalid_argument, msg);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)), 0.0);
  const auto& xv = x.value();
  const auto st = strides_over(shape, x.shape());
  for_each2(x.shape(), st, st, [&](Index o, Index it, Index) { v[it] += xv[o]; });
  const Shape in_shape = x.shape();
  return x.tape()->record(shape, std::move(v), {x}, [in_shape](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{broadcast_to(g, in_shape)};
  });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  check_valid(x, "broadcast_to");
  if (x.shape() == shape) return x;
  const std::string msg = "broadcast_to: cannot expand " + shape_str(x.shape()) + " to " + shape_str(shape);
  require(shape.size() == x.shape().size(), Errc::invalid_argument, msg);
  for (std::size_t i = 0; i < shape.size(); ++i)
    require(shape[i] == x.shape()[i] || x.shape()[i] == 1, Errc::invalid_argument, msg);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  const auto& xv = x.value();
  const auto st = strides_over(x.shape(), shape);
  for_each2(shape, st, st, [&](Index o, Index ix, Index) { v[o] = xv[ix]; });
  const Shape in_shape = x.shape();
  return x.tape()->record(shape, std::move(v), {x}, [in_shape](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{sum_to(g, in_shape)};
  });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  check_valid(x, "reshape");
  require(numel(shape) == x.numel(), Errc::invalid_argument,
          "reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) + " changes the element count");
  if (x.shape() == shape) return x;
  const Shape in_shape = x.shape();
  return x.tape()->record(shape, x.value(), {x}, [in_shape](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{reshape(g, in_shape)};
  });
}

// --- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  check_same_tape(a, b, "matmul");
  const std::string msg = "matmul: incompatible shapes " + shape_str(a.shape()) + (ta ? "ᵀ" : "") + " and " +
                          shape_str(b.shape()) + (tb ? "ᵀ" : "");
  require(a.rank() == 2 && b.rank() == 2, Errc::invalid_argument, msg);
  const Index ar = a.dim(0), ac = a.dim(1), br = b.dim(0), bc = b.dim(1);
  const Index m = ta ? ac : ar;
  const Index k = ta ? ar : ac;
  const Index k2 = tb ? bc : br;
  const Index n = tb ? br : bc;
  require(k == k2, Errc::invalid_argument, msg);
  std::vector<double> v(static_cast<std::size_t>(m * n));
  Eigen::Map<const RowMat> A(a.value().data(), ar, ac);
  Eigen::Map<const RowMat> B(b.value().data(), br, bc);
  Eigen::Map<RowMat> C(v.data(), m, n);
  if (!ta && !tb)
    C.noalias() = A * B;
  else if (ta && !tb)
    C.noalias() = A.transpose() * B;
  else if (!ta && tb)
    C.noalias() = A * B.transpose();
  else
    C.noalias() = A.transpose() * B.transpose();
  return a.tape()->record({m, n}, std::move(v), {a, b},
                          [a, b, ta, tb](const Tensor&, const Tensor& g, const std::vector<bool>& need) {
                            Tensor ga, gb;
                            if (!ta && !tb) {
                              if (need[0]) ga = matmul(g, b, false, true);
                              if (need[1]) gb = matmul(a, g, true, false);
                            } else if (ta && !tb) {
                              if (need[0]) ga = matmul(b, g, false, true);
                              if (need[1]) gb = matmul(a, g, false, false);
                            } else if (!ta && tb) {
                              if (need[0]) ga = matmul(g, b, false, false);
                              if (need[1]) gb = matmul(g, a, true, false);
                            } else {
                              if (need[0]) ga = matmul(b, g, true, true);
                              if (need[1]) gb = matmul(g, a, true, true);
                            }
                            return std::vector<Tensor>{ga, gb};
                          });
}

// --- image ops --------------------------------------------------------------

namespace {

void check_nhwc(const Tensor& x, const char* op) {
  check_valid(x, op);
  require(x.rank() == 4, Errc::invalid_argument, std::string(op) + ": expected [N,H,W,C], got " + shape_str(x.shape()));
}

}  // namespace

Tensor im2col(const Tensor& x, int k) {
  check_nhwc(x, "im2col");
  require(k >= 1 && k % 2 == 1, Errc::invalid_argument, "im2col: kernel size must be odd");
  const Index N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int p = k / 2;
  const Index cols = k * k * C;
  std::vector<double> v(static_cast<std::size_t>(N * H * W * cols), 0.0);
  const double* xv = x.value().data();
  for (Index n = 0; n < N; ++n)
    for (Index h = 0; h < H; ++h)
      for (Index w = 0; w < W; ++w) {
        double* row = v.data() + ((n * H + h) * W + w) * cols;
        for (int dy = 0; dy < k; ++dy) {
          const Index yy = h + dy - p;
          if (yy < 0 || yy >= H) continue;
          for (int dx = 0; dx < k; ++dx) {
            const Index xx = w + dx - p;
            if (xx < 0 || xx >= W) continue;
            std::copy_n(xv + ((n * H + yy) * W + xx) * C, C, row + (dy * k + dx) * C);
          }
        }
      }
  const Shape in_shape = x.shape();
  return x.tape()->record({N * H * W, cols}, std::move(v), {x},
                          [in_shape, k](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                            return std::vector<Tensor>{col2im(g, in_shape, k)};
                          });
}

Tensor col2im(const Tensor& cols_t, const Shape& s, int k) {
  check_valid(cols_t, "col2im");
  require(s.size() == 4 && k >= 1 && k % 2 == 1, Errc::invalid_argument, "col2im: bad image shape or kernel");
  const Index N = s[0], H = s[1], W = s[2], C = s[3];
  const int p = k / 2;
  const Index cols = k * k * C;
  require(cols_t.shape() == Shape{N * H * W, cols}, Errc::invalid_argument,
          "col2im: columns " + shape_str(cols_t.shape()) + " do not match image " + shape_str(s));
  std::vector<double> v(static_cast<std::size_t>(numel(s)), 0.0);
  const double* cv = cols_t.value().data();
  for (Index n = 0; n < N; ++n)
    for (Index h = 0; h < H; ++h)
      for (Index w = 0; w < W; ++w) {
        const double* row = cv + ((n * H + h) * W + w) * cols;
        for (int dy = 0; dy < k; ++dy) {
          const Index yy = h + dy - p;
          if (yy < 0 || yy >= H) continue;
          for (int dx = 0; dx < k; ++dx) {
            const Index xx = w + dx - p;
            if (xx < 0 || xx >= W) continue;
            double* dst = v.data() + ((n * H + yy) * W + xx) * C;
            const double* src = row + (dy * k + dx) * C;
            for (Index c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
  return cols_t.tape()->record(s, std::move(v), {cols_t}, [k](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{im2col(g, k)};
  });
}

namespace {

// Zero-padded copy of an NHWC tensor flattened to [N·(H+2p)·(W+2p), C].
std::vector<double> pad_flat(const double* x, Index n, Index h, Index w, Index c, int p) {
  const Index hp = h + 2 * p, wp = w + 2 * p;
  std::vector<double> out(static_cast<std::size_t>(n * hp * wp * c), 0.0);
  for (Index i = 0; i < n; ++i)
    for (Index y = 0; y < h; ++y)
      std::copy_n(x + ((i * h + y) * w) * c, w * c, out.data() + ((i * hp + y + p) * wp + p) * c);
  return out;
}

std::vector<double> crop_flat(const std::vector<double>& xp, Index n, Index h, Index w, Index c, int p) {
  const Index hp = h + 2 * p, wp = w + 2 * p;
  std::vector<double> out(static_cast<std::size_t>(n * h * w * c));
  for (Index i = 0; i < n; ++i)
    for (Index y = 0; y < h; ++y)
      std::copy_n(xp.data() + ((i * hp + y + p) * wp + p) * c, w * c, out.data() + ((i * h + y) * w) * c);
  return out;
}

// In the padded flat layout every tap is a constant row offset, so each tap
// is one GEMM over the whole batch. Rows whose window crosses an image
// border only land on padding positions, which are cropped or zero.
template <class F>
void for_each_tap(Index n, Index h, Index w, int k, F&& f) {
  const int p = k / 2;
  const Index wp = w + 2 * p;
  const Index m = n * (h + 2 * p) * wp;
  for (int dy = 0; dy < k; ++dy)
    for (int dx = 0; dx < k; ++dx) {
      const Index off = (dy - p) * wp + (dx - p);
      const Index q0 = std::max<Index>(0, -off);
      const Index q1 = std::min<Index>(m, m - off);
      if (q1 > q0) f(dy * k + dx, q0, q1 - q0, off);
    }
}

void check_conv_weight(const Tensor& w, Index c, Index cout, int k, const char* op, const Shape& in) {
  require(w.rank() == 2 && w.dim(0) == k * k * c && (cout < 0 || w.dim(1) == cout), Errc::invalid_argument,
          std::string(op) + ": weight " + shape_str(w.shape()) + " does not fit " + shape_str(in) + " with k=" +
              std::to_string(k));
}

}  // namespace

Tensor conv(const Tensor& x, const Tensor& w, int k) {
  check_nhwc(x, "conv");
  check_same_tape(x, w, "conv");
  require(k >= 1 && k % 2 == 1, Errc::invalid_argument, "conv: kernel size must be odd");
  const Index N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  check_conv_weight(w, C, -1, k, "conv", x.shape());
  const Index co = w.dim(1);
  const int p = k / 2;
  const auto xp = pad_flat(x.value().data(), N, H, W, C, p);
  const Index m = N * (H + 2 * p) * (W + 2 * p);
  std::vector<double> yp(static_cast<std::size_t>(m * co), 0.0);
  Eigen::Map<const RowMat> X(xp.data(), m, C);
  Eigen::Map<const RowMat> Wt(w.value().data(), k * k * C, co);
  Eigen::Map<RowMat> Y(yp.data(), m, co);
  for_each_tap(N, H, W, k, [&](int tap, Index q0, Index len, Index off) {
    Y.middleRows(q0, len).noalias() += X.middleRows(q0 + off, len) * Wt.middleRows(tap * C, C);
  });
  return x.tape()->record({N, H, W, co}, crop_flat(yp, N, H, W, co, p), {x, w},
                          [x, w, k](const Tensor&, const Tensor& g, const std::vector<bool>& need) {
                            return std::vector<Tensor>{need[0] ? conv_input_grad(g, w, k) : Tensor(),
                                                       need[1] ? conv_weight_grad(x, g, k) : Tensor()};
                          });
}

Tensor conv_input_grad(const Tensor& g, const Tensor& w, int k) {
  check_nhwc(g, "conv_input_grad");
  check_same_tape(g, w, "conv_input_grad");
  require(k >= 1 && k % 2 == 1 && w.rank() == 2 && w.dim(0) % (k * k) == 0, Errc::invalid_argument,
          "conv_input_grad: weight " + shape_str(w.shape()) + " does not fit k=" + std::to_string(k));
  const Index N = g.dim(0), H = g.dim(1), W = g.dim(2), co = g.dim(3);
  const Index C = w.dim(0) / (k * k);
  check_conv_weight(w, C, co, k, "conv_input_grad", g.shape());
  const int p = k / 2;
  const auto gp = pad_flat(g.value().data(), N, H, W, co, p);
  const Index m = N * (H + 2 * p) * (W + 2 * p);
  std::vector<double> xp(static_cast<std::size_t>(m * C), 0.0);
  Eigen::Map<const RowMat> G(gp.data(), m, co);
  Eigen::Map<const RowMat> Wt(w.value().data(), k * k * C, co);
  Eigen::Map<RowMat> X(xp.data(), m, C);
  for_each_tap(N, H, W, k, [&](int tap, Index q0, Index len, Index off) {
    X.middleRows(q0 + off, len).noalias() += G.middleRows(q0, len) * Wt.middleRows(tap * C, C).transpose();
  });
  return g.tape()->record({N, H, W, C}, crop_flat(xp, N, H, W, C, p), {g, w},
                          [g, w, k](const Tensor&, const Tensor& up, const std::vector<bool>& need) {
                            return std::vector<Tensor>{need[0] ? conv(up, w, k) : Tensor(),
                                                       need[1] ? conv_weight_grad(up, g, k) : Tensor()};
                          });
}

Tensor conv_weight_grad(const Tensor& x, const Tensor& g, int k) {
  check_nhwc(x, "conv_weight_grad");
  check_nhwc(g, "conv_weight_grad");
  check_same_tape(x, g, "conv_weight_grad");
  require(k >= 1 && k % 2 == 1, Errc::invalid_argument, "conv_weight_grad: kernel size must be odd");
  const Index N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3), co = g.dim(3);
  require(g.dim(0) == N && g.dim(1) == H && g.dim(2) == W, Errc::invalid_argument,
          "conv_weight_grad: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(g.shape()));
  const int p = k / 2;
  const auto xp = pad_flat(x.value().data(), N, H, W, C, p);
  const auto gp = pad_flat(g.value().data(), N, H, W, co, p);
  const Index m = N * (H + 2 * p) * (W + 2 * p);
  std::vector<double> dw(static_cast<std::size_t>(k * k * C * co), 0.0);
  Eigen::Map<const RowMat> X(xp.data(), m, C);
  Eigen::Map<const RowMat> G(gp.data(), m, co);
  Eigen::Map<RowMat> D(dw.data(), k * k * C, co);
  for_each_tap(N, H, W, k, [&](int tap, Index q0, Index len, Index off) {
    D.middleRows(tap * C, C).noalias() += X.middleRows(q0 + off, len).transpose() * G.middleRows(q0, len);
  });
  return x.tape()->record({k * k * C, co}, std::move(dw), {x, g},
                          [x, g, k](const Tensor&, const Tensor& up, const std::vector<bool>& need) {
                            return std::vector<Tensor>{need[0] ? conv_input_grad(g, up, k) : Tensor(),
                                                       need[1] ? conv(x, up, k) : Tensor()};
                          });
}

Tensor upsample2(const Tensor& x) {
  check_nhwc(x, "upsample2");
  const Index N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  std::vector<double> v(static_cast<std::size_t>(N * 4 * H * W * C));
  const double* xv = x.value().data();
  for (Index n = 0; n < N; ++n)
    for (Index h = 0; h < 2 * H; ++h)
      for (Index w = 0; w < 2 * W; ++w)
        std::copy_n(xv + ((n * H + h / 2) * W + w / 2) * C, C, v.data() + ((n * 2 * H + h) * 2 * W + w) * C);
  return x.tape()->record({N, 2 * H, 2 * W, C}, std::move(v), {x},
                          [](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                            return std::vector<Tensor>{sumpool2(g)};
                          });
}

Tensor sumpool2(const Tensor& x) {
  check_nhwc(x, "sumpool2");
  const Index N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0, Errc::invalid_argument, "sumpool2: odd spatial size " + shape_str(x.shape()));
  const Index h2 = H / 2, w2 = W / 2;
  std::vector<double> v(static_cast<std::size_t>(N * h2 * w2 * C), 0.0);
  const double* xv = x.value().data();
  for (Index n = 0; n < N; ++n)
    for (Index h = 0; h < H; ++h)
      for (Index w = 0; w < W; ++w) {
        double* dst = v.data() + ((n * h2 + h / 2) * w2 + w / 2) * C;
        const double* src = xv + ((n * H + h) * W + w) * C;
        for (Index c = 0; c < C; ++c) dst[c] += src[c];
      }
  return x.tape()->record({N, h2, w2, C}, std::move(v), {x}, [](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{upsample2(g)};
  });
}

Tensor avgpool2(const Tensor& x) { return affine(sumpool2(x), 0.25, 0.0); }

// --- nonlinearities ----------------------------------------------------------

Tensor leaky_relu(const Tensor& x, double slope) {
  check_valid(x, "leaky_relu");
  const auto& xv = x.value();
  auto mask = std::make_shared<std::vector<double>>(xv.size());
  std::vector<double> v(xv.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    (*mask)[i] = xv[i] > 0.0 ? 1.0 : slope;
    v[i] = (*mask)[i] * xv[i];
  }
  const Shape s = x.shape();
  return x.tape()->record(s, std::move(v), {x}, [mask, s](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{mul(g, g.tape()->constant(s, *mask))};
  });
}

namespace {
double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary(x, sigmoid_value, [](const Tensor& y, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{mul(g, mul(y, affine(y, -1.0, 1.0)))};
  });
}

Tensor softplus(const Tensor& x) {
  return unary(x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
               [x](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                 return std::vector<Tensor>{mul(g, sigmoid(x))};
               });
}

// --- reductions and layout ----------------------------------------------------

Tensor sum(const Tensor& x) {
  check_valid(x, "sum");
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  const Shape s = x.shape();
  return x.tape()->record({}, {acc}, {x}, [s](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{broadcast_to(reshape(g, Shape(s.size(), 1)), s)};
  });
}

Tensor mean(const Tensor& x) {
  check_valid(x, "mean");
  require(x.numel() > 0, Errc::invalid_argument, "mean of an empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(x.numel()), 0.0);
}

namespace {
// Splits a shape around `axis` into (outer, axis length, inner) extents.
void split_axis(const Shape& s, int axis, Index& outer, Index& inner) {
  outer = 1;
  inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[d];
}
}  // namespace

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  require(!xs.empty(), Errc::invalid_argument, "concat: no inputs");
  check_valid(xs[0], "concat");
  const Shape& s0 = xs[0].shape();
  require(axis >= 0 && axis < static_cast<int>(s0.size()), Errc::invalid_argument,
          "concat: axis out of range for " + shape_str(s0));
  Shape out = s0;
  out[axis] = 0;
  for (const auto& x : xs) {
    check_same_tape(xs[0], x, "concat");
    bool ok = x.rank() == static_cast<int>(s0.size());
    for (int d = 0; ok && d < x.rank(); ++d) ok = d == axis || x.dim(d) == s0[d];
    require(ok, Errc::invalid_argument, "concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(x.shape()));
    out[axis] += x.dim(axis);
  }
  Index outer, inner;
  split_axis(out, axis, outer, inner);
  std::vector<double> v(static_cast<std::size_t>(numel(out)));
  Index offset = 0;
  std::vector<Index> begins;
  for (const auto& x : xs) {
    const Index len = x.dim(axis) * inner;
    const double* src = x.value().data();
    for (Index o = 0; o < outer; ++o) std::copy_n(src + o * len, len, v.data() + o * out[axis] * inner + offset * inner);
    begins.push_back(offset);
    offset += x.dim(axis);
  }
  std::vector<Index> lens;
  for (const auto& x : xs) lens.push_back(x.dim(axis));
  return xs[0].tape()->record(out, std::move(v), xs,
                              [axis, begins, lens](const Tensor&, const Tensor& g, const std::vector<bool>& need) {
                                std::vector<Tensor> gs(begins.size());
                                for (std::size_t k = 0; k < begins.size(); ++k)
                                  if (need[k]) gs[k] = slice(g, axis, begins[k], begins[k] + lens[k]);
                                return gs;
                              });
}

Tensor slice(const Tensor& x, int axis, std::int64_t begin, std::int64_t end) {
  check_valid(x, "slice");
  const Shape& s = x.shape();
  require(axis >= 0 && axis < x.rank() && 0 <= begin && begin <= end && end <= s[axis], Errc::invalid_argument,
          "slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " + std::to_string(axis) +
              " out of bounds for " + shape_str(s));
  Shape out = s;
  out[axis] = end - begin;
  Index outer, inner;
  split_axis(s, axis, outer, inner);
  std::vector<double> v(static_cast<std::size_t>(numel(out)));
  const double* src = x.value().data();
  for (Index o = 0; o < outer; ++o)
    std::copy_n(src + (o * s[axis] + begin) * inner, out[axis] * inner, v.data() + o * out[axis] * inner);
  const Index total = s[axis];
  return x.tape()->record(out, std::move(v), {x}, [axis, begin, total](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{pad(g, axis, begin, total)};
  });
}

Tensor pad(const Tensor& x, int axis, std::int64_t begin, std::int64_t total) {
  check_valid(x, "pad");
  const Shape& s = x.shape();
  require(axis >= 0 && axis < x.rank() && begin >= 0 && begin + s[axis] <= total, Errc::invalid_argument,
          "pad: cannot place " + shape_str(s) + " at " + std::to_string(begin) + " in length " + std::to_string(total));
  Shape out = s;
  out[axis] = total;
  Index outer, inner;
  split_axis(s, axis, outer, inner);
  std::vector<double> v(static_cast<std::size_t>(numel(out)), 0.0);
  const double* src = x.value().data();
  for (Index o = 0; o < outer; ++o)
    std::copy_n(src + o * s[axis] * inner, s[axis] * inner, v.data() + (o * total + begin) * inner);
  const Index len = s[axis];
  return x.tape()->record(out, std::move(v), {x}, [axis, begin, len](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{slice(g, axis, begin, begin + len)};
  });
}

// --- sparse row maps --------------------------------------------------------

namespace {
void check_rows(const Tensor& x, Index rows, const char* op) {
  check_valid(x, op);
  require(x.rank() == 2 && x.dim(0) == rows, Errc::invalid_argument,
          std::string(op) + ": expected " + std::to_string(rows) + " rows, got " + shape_str(x.shape()));
}
}  // namespace

Tensor gather_rows(const Tensor& x, std::shared_ptr<const SparseRows> map) {
  require(map != nullptr && map->offsets.size() == static_cast<std::size_t>(map->out_rows) + 1,
          Errc::invalid_argument, "gather_rows: malformed row map");
  check_rows(x, map->in_rows, "gather_rows");
  const Index C = x.dim(1);
  std::vector<double> v(static_cast<std::size_t>(map->out_rows * C), 0.0);
  const double* xv = x.value().data();
  for (Index r = 0; r < map->out_rows; ++r)
    for (auto e = map->offsets[r]; e < map->offsets[r + 1]; ++e) {
      const double w = map->weight[e];
      const double* src = xv + static_cast<Index>(map->index[e]) * C;
      for (Index c = 0; c < C; ++c) v[r * C + c] += w * src[c];
    }
  return x.tape()->record({map->out_rows, C}, std::move(v), {x}, [map](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{scatter_rows(g, map)};
  });
}

Tensor scatter_rows(const Tensor& x, std::shared_ptr<const SparseRows> map) {
  require(map != nullptr && map->offsets.size() == static_cast<std::size_t>(map->out_rows) + 1,
          Errc::invalid_argument, "scatter_rows: malformed row map");
  check_rows(x, map->out_rows, "scatter_rows");
  const Index C = x.dim(1);
  std::vector<double> v(static_cast<std::size_t>(map->in_rows * C), 0.0);
  const double* xv = x.value().data();
  for (Index r = 0; r < map->out_rows; ++r)
    for (auto e = map->offsets[r]; e < map->offsets[r + 1]; ++e) {
      const double w = map->weight[e];
      double* dst = v.data() + static_cast<Index>(map->index[e]) * C;
      for (Index c = 0; c < C; ++c) dst[c] += w * xv[r * C + c];
    }
  return x.tape()->record({map->in_rows, C}, std::move(v), {x}, [map](const Tensor&, const Tensor& g, const std::vector<bool>&) {
    return std::vector<Tensor>{gather_rows(g, map)};
  });
}

// --- composites -------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int k) {
  check_nhwc(x, "conv2d");
  const Index N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(w.rank() == 2 && w.dim(0) == k * k * C, Errc::invalid_argument,
          "conv2d: weight " + shape_str(w.shape()) + " does not fit input " + shape_str(x.shape()) + " with k=" +
              std::to_string(k));
  const Index cout = w.dim(1);
  require(b.shape() == Shape{cout}, Errc::invalid_argument,
          "conv2d: bias " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
  if (k == 1) return reshape(add(matmul(reshape(x, {N * H * W, C}), w), reshape(b, {1, cout})), {N, H, W, cout});
  return add(conv(x, w, k), reshape(b, {1, 1, 1, cout}));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(b.valid() && w.valid() && w.rank() == 2 && b.shape() == Shape{w.dim(1)}, Errc::invalid_argument,
          "linear: bias " + (b.valid() ? shape_str(b.shape()) : std::string("?")) + " does not match weight " +
              (w.valid() ? shape_str(w.shape()) : std::string("?")));
  return add(matmul(x, w), reshape(b, {1, w.dim(1)}));
}

// --- parameters -------------------------------------------------------------

void ParamSet::add(const std::string& name, Shape shape, std::vector<double> value) {
  require(numel(shape) == static_cast<Index>(value.size()), Errc::invalid_argument,
          "parameter " + name + ": shape " + shape_str(shape) + " does not match its values");
  require(!has(name), Errc::invalid_argument, "duplicate parameter " + name);
  params_.emplace(name, Param{std::move(shape), std::move(value)});
}

Param& ParamSet::at(const std::string& name) {
  auto it = params_.find(name);
  require(it != params_.end(), Errc::invalid_argument, "unknown parameter " + name);
  return it->second;
}

const Param& ParamSet::at(const std::string& name) const {
  auto it = params_.find(name);
  require(it != params_.end(), Errc::invalid_argument, "unknown parameter " + name);
  return it->second;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::uint64_t ParamSet::hash() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& [name, p] : params_) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(p.shape.data(), p.shape.size() * sizeof(Index), h);
    h = fnv1a64(p.value.data(), p.value.size() * sizeof(double), h);
  }
  return h;
}

const Tensor& Bound::operator[](const std::string& name) const {
  auto it = tensors.find(name);
  require(it != tensors.end(), Errc::invalid_argument, "unbound parameter " + name);
  return it->second;
}

std::vector<Tensor> Bound::list() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : tensors) out.push_back(t);
  return out;
}

Bound bind(Tape& tape, const ParamSet& params, bool trainable) {
  Bound b;
  for (const auto& [name, p] : params.items())
    b.tensors.emplace(name, trainable ? tape.variable(p.shape, p.value) : tape.constant(p.shape, p.value));
  return b;
}

bool adam_step(ParamSet& params, const std::map<std::string, std::vector<double>>& grads, AdamState& state,
               const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    const Param& p = params.at(name);
    require(g.size() == p.value.size(), Errc::invalid_argument,
            "adam_step: gradient for " + name + " has " + std::to_string(g.size()) + " values, parameter has " +
                std::to_string(p.value.size()));
    for (double x : g)
      if (!std::isfinite(x)) {
        ++state.skipped;
        return false;
      }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Param& p = params.at(name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p.value[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
  return true;
}

}  // namespace sculpt::ad
