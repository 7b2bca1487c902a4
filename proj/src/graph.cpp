#include "fairmoo/graph.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "fairmoo/kernels.hpp"

namespace fairmoo::ad {

namespace {

// Right-aligned broadcast check: every trailing mask dim must equal the
// value dim or be 1. Covers a per-cell [H,W] mask against [B,H,W] or a
// [B,1,H,W] mask against [B,C,H,W] (mask per spatial cell, broadcast over
// channels).
bool mask_broadcastable(const std::vector<std::size_t>& value, const std::vector<std::size_t>& mask) {
  if (mask.size() > value.size()) return false;
  std::size_t off = value.size() - mask.size();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] != value[off + i] && mask[i] != 1) return false;
  return true;
}

// Maps a flat value index to the flat index of the broadcast mask.
struct MaskIndexer {
  std::vector<std::size_t> vshape;
  std::vector<std::size_t> mshape;
  std::vector<std::size_t> mstride;
  bool identical;

  MaskIndexer(const std::vector<std::size_t>& v, const std::vector<std::size_t>& m) : vshape(v), mshape(m) {
    identical = (v == m);
    mstride.assign(m.size(), 0);
    std::size_t s = 1;
    for (std::size_t i = m.size(); i-- > 0;) {
      mstride[i] = (m[i] == 1) ? 0 : s;
      s *= m[i];
    }
  }

  std::size_t operator()(std::size_t flat) const {
    if (identical) return flat;
    std::size_t off = vshape.size() - mshape.size();
    std::size_t midx = 0;
    for (std::size_t i = vshape.size(); i-- > 0;) {
      std::size_t coord = flat % vshape[i];
      flat /= vshape[i];
      if (i >= off) midx += mstride[i - off] * std::min(coord, mshape[i - off] - 1);
    }
    return midx;
  }
};

double masked_sq_err_kernel(const Tensor& a, const Tensor& b, const Tensor& mask, MaskNorm norm) {
  MaskIndexer idx(a.shape, mask.shape);
  NeumaierSum acc;
  for (std::size_t e = 0; e < a.size(); ++e) {
    double d = mask.data[idx(e)] * (a.data[e] - b.data[e]);
    acc.add(d * d);
  }
  double divisor;
  if (norm == MaskNorm::FullCount) {
    divisor = static_cast<double>(a.size());
  } else {
    std::size_t active = 0;
    for (std::size_t e = 0; e < a.size(); ++e)
      if (mask.data[idx(e)] != 0.0) ++active;
    if (active == 0) return 0.0;
    divisor = static_cast<double>(active);
  }
  return acc.value() / divisor;
}

double sq_err_kernel(const Tensor& a, const Tensor& b) {
  // Same accumulation order as the masked kernel with an all-ones mask,
  // so the two agree bit-for-bit.
  NeumaierSum acc;
  for (std::size_t e = 0; e < a.size(); ++e) {
    double d = a.data[e] - b.data[e];
    acc.add(d * d);
  }
  return acc.value() / static_cast<double>(a.size());
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(Tensor v) { return push(Node{Op::Input, {-1, -1, -1}, std::move(v)}); }
NodeId Graph::constant(Tensor v) { return push(Node{Op::Constant, {-1, -1, -1}, std::move(v)}); }

NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
    throw std::invalid_argument("affine: expected x[B,in], W[out,in], b[out]");
  if (xv.shape[1] != wv.shape[1] || bv.shape[0] != wv.shape[0])
    throw std::invalid_argument("affine: dimension mismatch x" + shape_str(xv.shape) + " W" +
                                shape_str(wv.shape) + " b" + shape_str(bv.shape));
  Node n{Op::Affine, {x, w, b}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
    throw std::invalid_argument("matmul: dimension mismatch " + shape_str(av.shape) + " x " + shape_str(bv.shape));
  Node n{Op::MatMul, {a, b, -1}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) {
  Node n{Op::Tanh, {x, -1, -1}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  Node n{Op::Relu, {x, -1, -1}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("add: shape mismatch");
  Node n{Op::Add, {a, b, -1}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("mul: shape mismatch");
  Node n{Op::Mul, {a, b, -1}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double c) {
  Node n{Op::Scale, {x, -1, -1}, {}};
  n.scalar = c;
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  Node n{Op::Sum, {x, -1, -1}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::mean(NodeId x) {
  Node n{Op::Mean, {x, -1, -1}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::sq_err(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("sq_err: shape mismatch");
  Node n{Op::SqErr, {a, b, -1}, {}};
  n.value = eval(n);
  return push(std::move(n));
}

NodeId Graph::masked_sq_err(NodeId a, NodeId b, NodeId mask, MaskNorm norm) {
  const Tensor& av = value(a);
  if (!av.same_shape(value(b))) throw std::invalid_argument("masked_sq_err: a/b shape mismatch");
  if (!mask_broadcastable(av.shape, value(mask).shape))
    throw std::invalid_argument("masked_sq_err: mask " + shape_str(value(mask).shape) +
                                " not broadcastable to " + shape_str(av.shape));
  if (nodes_[static_cast<std::size_t>(mask)].op != Op::Constant)
    throw std::invalid_argument("masked_sq_err: mask must be a constant leaf");
  Node n{Op::MaskedSqErr, {a, b, mask}, {}};
  n.norm = norm;
  n.value = eval(n);
  return push(std::move(n));
}

Tensor Graph::eval(const Node& n) const {
  switch (n.op) {
    case Op::Input:
    case Op::Constant:
      return n.value;
    case Op::Affine: {
      const Tensor& x = value(n.in[0]);
      const Tensor& w = value(n.in[1]);
      const Tensor& b = value(n.in[2]);
      std::size_t B = x.shape[0], in = x.shape[1], out = w.shape[0];
      Tensor y = Tensor::zeros({B, out});
      for (std::size_t r = 0; r < B; ++r) {
        const double* xr = x.data.data() + r * in;
        double* yr = y.data.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] = dot(xr, w.data.data() + o * in, in) + b.data[o];
      }
      return y;
    }
    case Op::MatMul: {
      const Tensor& a = value(n.in[0]);
      const Tensor& b = value(n.in[1]);
      std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
      Tensor c = Tensor::zeros({m, p});
      fairmoo::matmul(a.data.data(), b.data.data(), c.data.data(), m, k, p);
      return c;
    }
    case Op::Tanh: {
      Tensor y = value(n.in[0]);
      for (double& v : y.data) v = std::tanh(v);
      return y;
    }
    case Op::Relu: {
      Tensor y = value(n.in[0]);
      for (double& v : y.data) v = v > 0.0 ? v : 0.0;
      return y;
    }
    case Op::Add: {
      Tensor y = value(n.in[0]);
      const Tensor& b = value(n.in[1]);
      for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.data[i];
      return y;
    }
    case Op::Mul: {
      Tensor y = value(n.in[0]);
      const Tensor& b = value(n.in[1]);
      for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= b.data[i];
      return y;
    }
    case Op::Scale: {
      Tensor y = value(n.in[0]);
      for (double& v : y.data) v *= n.scalar;
      return y;
    }
    case Op::Sum: {
      NeumaierSum acc;
      for (double v : value(n.in[0]).data) acc.add(v);
      return Tensor::scalar(acc.value());
    }
    case Op::Mean: {
      const Tensor& x = value(n.in[0]);
      NeumaierSum acc;
      for (double v : x.data) acc.add(v);
      return Tensor::scalar(acc.value() / static_cast<double>(x.size()));
    }
    case Op::SqErr:
      return Tensor::scalar(sq_err_kernel(value(n.in[0]), value(n.in[1])));
    case Op::MaskedSqErr:
      return Tensor::scalar(masked_sq_err_kernel(value(n.in[0]), value(n.in[1]), value(n.in[2]), n.norm));
  }
  throw std::logic_error("graph: unreachable op");
}

double Graph::replay_deviation() const {
  double worst = 0.0;
  for (const Node& n : nodes_) {
    if (n.op == Op::Input || n.op == Op::Constant) continue;
    Tensor again = eval(n);
    for (std::size_t i = 0; i < again.size(); ++i)
      worst = std::max(worst, std::fabs(again.data[i] - n.value.data[i]));
  }
  return worst;
}

std::vector<Tensor> Graph::gradients(NodeId out, const std::vector<NodeId>& wrt) const {
  const Node& root = nodes_.at(static_cast<std::size_t>(out));
  if (root.value.size() != 1) throw std::invalid_argument("gradients: output must be scalar");
  for (NodeId id : wrt)
    if (nodes_.at(static_cast<std::size_t>(id)).op != Op::Input)
      throw std::invalid_argument("gradients: wrt nodes must be Input leaves");

  std::vector<std::optional<Tensor>> grad(nodes_.size());
  grad[static_cast<std::size_t>(out)] = Tensor(root.value.shape, {1.0});

  auto is_const = [&](NodeId id) { return nodes_[static_cast<std::size_t>(id)].op == Op::Constant; };
  auto bump = [&](NodeId id, Tensor g) {
    if (is_const(id)) return;  // constants never need adjoints
    auto& slot = grad[static_cast<std::size_t>(id)];
    if (!slot) {
      slot = std::move(g);
    } else {
      for (std::size_t i = 0; i < slot->size(); ++i) slot->data[i] += g.data[i];
    }
  };

  for (NodeId id = out; id >= 0; --id) {
    const auto& slot = grad[static_cast<std::size_t>(id)];
    if (!slot) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Tensor& g = *slot;
    switch (n.op) {
      case Op::Input:
      case Op::Constant:
        break;
      case Op::Affine: {
        const Tensor& x = value(n.in[0]);
        const Tensor& w = value(n.in[1]);
        std::size_t B = x.shape[0], in = x.shape[1], out_d = w.shape[0];
        bool need_dx = !is_const(n.in[0]);
        bool need_dw = !is_const(n.in[1]);
        bool need_db = !is_const(n.in[2]);
        Tensor dx = need_dx ? Tensor::zeros(x.shape) : Tensor{};
        Tensor dw = need_dw ? Tensor::zeros(w.shape) : Tensor{};
        Tensor db = need_db ? Tensor::zeros({out_d}) : Tensor{};
        for (std::size_t r = 0; r < B; ++r) {
          const double* grow = g.data.data() + r * out_d;
          const double* xrow = x.data.data() + r * in;
          for (std::size_t o = 0; o < out_d; ++o) {
            double go = grow[o];
            if (go == 0.0) continue;
            if (need_dx) axpy(go, w.data.data() + o * in, dx.data.data() + r * in, in);
            if (need_dw) axpy(go, xrow, dw.data.data() + o * in, in);
            if (need_db) db.data[o] += go;
          }
        }
        if (need_dx) bump(n.in[0], std::move(dx));
        if (need_dw) bump(n.in[1], std::move(dw));
        if (need_db) bump(n.in[2], std::move(db));
        break;
      }
      case Op::MatMul: {
        const Tensor& a = value(n.in[0]);
        const Tensor& b = value(n.in[1]);
        std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
        if (!is_const(n.in[0])) {
          Tensor da = Tensor::zeros(a.shape);  // dA = G * B^T
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = g.data.data() + i * p;
            double* darow = da.data.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) darow[j] = dot(grow, b.data.data() + j * p, p);
          }
          bump(n.in[0], std::move(da));
        }
        if (!is_const(n.in[1])) {
          Tensor db = Tensor::zeros(b.shape);  // dB = A^T * G
          for (std::size_t j = 0; j < k; ++j) {
            double* dbrow = db.data.data() + j * p;
            for (std::size_t i = 0; i < m; ++i) axpy(a.data[i * k + j], g.data.data() + i * p, dbrow, p);
          }
          bump(n.in[1], std::move(db));
        }
        break;
      }
      case Op::Tanh: {
        Tensor dx = Tensor::zeros(n.value.shape);
        for (std::size_t i = 0; i < dx.size(); ++i) {
          double y = n.value.data[i];
          dx.data[i] = g.data[i] * (1.0 - y * y);
        }
        bump(n.in[0], std::move(dx));
        break;
      }
      case Op::Relu: {
        const Tensor& x = value(n.in[0]);
        Tensor dx = Tensor::zeros(x.shape);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] = x.data[i] > 0.0 ? g.data[i] : 0.0;
        bump(n.in[0], std::move(dx));
        break;
      }
      case Op::Add: {
        bump(n.in[0], g);
        bump(n.in[1], g);
        break;
      }
      case Op::Mul: {
        const Tensor& a = value(n.in[0]);
        const Tensor& b = value(n.in[1]);
        Tensor da = Tensor::zeros(a.shape);
        Tensor db = Tensor::zeros(b.shape);
        for (std::size_t i = 0; i < a.size(); ++i) {
          da.data[i] = g.data[i] * b.data[i];
          db.data[i] = g.data[i] * a.data[i];
        }
        bump(n.in[0], std::move(da));
        bump(n.in[1], std::move(db));
        break;
      }
      case Op::Scale: {
        Tensor dx = g;
        for (double& v : dx.data) v *= n.scalar;
        bump(n.in[0], std::move(dx));
        break;
      }
      case Op::Sum: {
        const Tensor& x = value(n.in[0]);
        bump(n.in[0], Tensor::full(x.shape, g.data[0]));
        break;
      }
      case Op::Mean: {
        const Tensor& x = value(n.in[0]);
        bump(n.in[0], Tensor::full(x.shape, g.data[0] / static_cast<double>(x.size())));
        break;
      }
      case Op::SqErr: {
        const Tensor& a = value(n.in[0]);
        const Tensor& b = value(n.in[1]);
        double c = 2.0 * g.data[0] / static_cast<double>(a.size());
        Tensor da = Tensor::zeros(a.shape);
        for (std::size_t i = 0; i < a.size(); ++i) da.data[i] = c * (a.data[i] - b.data[i]);
        Tensor db = da;
        for (double& v : db.data) v = -v;
        bump(n.in[0], std::move(da));
        bump(n.in[1], std::move(db));
        break;
      }
      case Op::MaskedSqErr: {
        const Tensor& a = value(n.in[0]);
        const Tensor& b = value(n.in[1]);
        const Tensor& m = value(n.in[2]);
        MaskIndexer idx(a.shape, m.shape);
        double divisor = static_cast<double>(a.size());
        if (n.norm == MaskNorm::MaskedCount) {
          std::size_t active = 0;
          for (std::size_t e = 0; e < a.size(); ++e)
            if (m.data[idx(e)] != 0.0) ++active;
          if (active == 0) break;  // loss identically zero
          divisor = static_cast<double>(active);
        }
        double c = 2.0 * g.data[0] / divisor;
        Tensor da = Tensor::zeros(a.shape);
        for (std::size_t e = 0; e < a.size(); ++e) {
          double mv = m.data[idx(e)];
          da.data[e] = c * mv * mv * (a.data[e] - b.data[e]);
        }
        Tensor db = da;
        for (double& v : db.data) v = -v;
        bump(n.in[0], std::move(da));
        bump(n.in[1], std::move(db));
        break;
      }
    }
  }

  std::vector<Tensor> out_grads;
  out_grads.reserve(wrt.size());
  for (NodeId id : wrt) {
    const auto& slot = grad[static_cast<std::size_t>(id)];
    out_grads.push_back(slot ? *slot : Tensor::zeros(value(id).shape));
  }
  return out_grads;
}

std::pair<double, ParamVector> value_and_grad(const ScalarFn& f, const ParamVector& theta) {
  Graph g;
  std::vector<NodeId> leaves;
  leaves.reserve(theta.layout->segments().size());
  for (std::size_t i = 0; i < theta.layout->segments().size(); ++i) leaves.push_back(g.input(theta.segment(i)));
  NodeId out = f(g, leaves);
  double val = g.scalar_value(out);
  std::vector<Tensor> grads = g.gradients(out, leaves);
  ParamVector gv = ParamVector::zeros(theta.layout);
  for (std::size_t i = 0; i < grads.size(); ++i) gv.set_segment(i, grads[i]);
  return {val, std::move(gv)};
}

double evaluate(const ScalarFn& f, const ParamVector& theta) {
  Graph g;
  std::vector<NodeId> leaves;
  leaves.reserve(theta.layout->segments().size());
  for (std::size_t i = 0; i < theta.layout->segments().size(); ++i) leaves.push_back(g.input(theta.segment(i)));
  return g.scalar_value(f(g, leaves));
}

ParamVector finite_diff(const ScalarFn& f, const ParamVector& theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff: h must be positive");
  ParamVector grad = ParamVector::zeros(theta.layout);
  ParamVector probe = theta;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    double saved = probe.data[j];
    probe.data[j] = saved + h;
    double fp = evaluate(f, probe);
    probe.data[j] = saved - h;
    double fm = evaluate(f, probe);
    probe.data[j] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff: non-finite evaluation at coordinate " + std::to_string(j));
    grad.data[j] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double masked_mse(const Tensor& pred, const Tensor& target, const Tensor& mask, MaskNorm norm) {
  if (!pred.same_shape(target)) throw std::invalid_argument("masked_mse: shape mismatch");
  if (!mask_broadcastable(pred.shape, mask.shape))
    throw std::invalid_argument("masked_mse: mask not broadcastable");
  return masked_sq_err_kernel(pred, target, mask, norm);
}

}  // namespace fairmoo::ad
