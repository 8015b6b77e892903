#include "skyfall/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "skyfall/errors.hpp"

namespace skyfall::diff {

namespace {

double logistic_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
    throw std::logic_error("tape: handle does not belong to this tape");
  return nodes_[v.idx];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

Var Tape::push(Node&& n, const char* name) {
  if (!n.value.allFinite())
    throw NumericError(std::string("non-finite values produced by '") + name + "'");
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::input(Mat value) {
  Node n;
  n.value = std::move(value);
  n.op = Op::kInput;
  return push(std::move(n), "input");
}

const Mat& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!backward_run_) throw std::logic_error("tape: grad read before backward");
  return n.grad;
}

namespace {
void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("tape: shape mismatch in '") + op + "'");
}
}  // namespace

Var Tape::add(Var a, Var b) {
  const Mat& va = node(a).value;
  const Mat& vb = node(b).value;
  require_same_shape(va, vb, "add");
  Node n;
  n.value = va + vb;
  n.op = Op::kAdd;
  n.a = a.idx;
  n.b = b.idx;
  return push(std::move(n), "add");
}

Var Tape::sub(Var a, Var b) {
  const Mat& va = node(a).value;
  const Mat& vb = node(b).value;
  require_same_shape(va, vb, "sub");
  Node n;
  n.value = va - vb;
  n.op = Op::kSub;
  n.a = a.idx;
  n.b = b.idx;
  return push(std::move(n), "sub");
}

Var Tape::mul(Var a, Var b) {
  const Mat& va = node(a).value;
  const Mat& vb = node(b).value;
  require_same_shape(va, vb, "mul");
  Node n;
  n.value = va.cwiseProduct(vb);
  n.op = Op::kMul;
  n.a = a.idx;
  n.b = b.idx;
  return push(std::move(n), "mul");
}

Var Tape::cmin(Var a, Var b) {
  const Mat& va = node(a).value;
  const Mat& vb = node(b).value;
  require_same_shape(va, vb, "min");
  Node n;
  n.value = va.cwiseMin(vb);
  n.op = Op::kMin;
  n.a = a.idx;
  n.b = b.idx;
  return push(std::move(n), "min");
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.value = node(a).value * s;
  n.op = Op::kScale;
  n.a = a.idx;
  n.scalar = s;
  return push(std::move(n), "scale");
}

Var Tape::matmul(Var a, Var b) {
  const Mat& va = node(a).value;
  const Mat& vb = node(b).value;
  if (va.cols() != vb.rows())
    throw std::invalid_argument("tape: shape mismatch in 'matmul'");
  Node n;
  n.value.noalias() = va * vb;
  n.op = Op::kMatmul;
  n.a = a.idx;
  n.b = b.idx;
  return push(std::move(n), "matmul");
}

Var Tape::affine(Var w, Var b, Var x) {
  const Mat& vw = node(w).value;
  const Mat& vb = node(b).value;
  const Mat& vx = node(x).value;
  if (vw.cols() != vx.rows() || vb.rows() != vw.rows() || vb.cols() != 1)
    throw std::invalid_argument("tape: shape mismatch in 'affine'");
  Node n;
  n.value.noalias() = vw * vx;
  n.value.colwise() += vb.col(0);
  n.op = Op::kAffine;
  n.a = w.idx;
  n.b = b.idx;
  n.c = x.idx;
  return push(std::move(n), "affine");
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("tape: concat_rows of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = node(parts.front()).value.cols();
  for (Var p : parts) {
    const Mat& v = node(p).value;
    if (v.cols() != cols) throw std::invalid_argument("tape: shape mismatch in 'concat_rows'");
    rows += v.rows();
  }
  Node n;
  n.value.resize(rows, cols);
  n.parts.reserve(parts.size());
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Mat& v = node(p).value;
    n.value.middleRows(at, v.rows()) = v;
    at += v.rows();
    n.parts.push_back(p.idx);
  }
  n.op = Op::kConcatRows;
  return push(std::move(n), "concat_rows");
}

Var Tape::rows(Var a, Eigen::Index first, Eigen::Index count) {
  const Mat& va = node(a).value;
  if (first < 0 || count < 0 || first + count > va.rows())
    throw std::invalid_argument("tape: row range out of bounds in 'rows'");
  Node n;
  n.value = va.middleRows(first, count);
  n.op = Op::kRows;
  n.a = a.idx;
  n.row0 = first;
  return push(std::move(n), "rows");
}

Var Tape::tanh(Var a) {
  Node n;
  n.value = node(a).value.array().tanh();
  n.op = Op::kTanh;
  n.a = a.idx;
  return push(std::move(n), "tanh");
}

Var Tape::logistic(Var a) {
  Node n;
  n.value = node(a).value.unaryExpr([](double x) { return logistic_scalar(x); });
  n.op = Op::kLogistic;
  n.a = a.idx;
  return push(std::move(n), "logistic");
}

Var Tape::relu(Var a) {
  Node n;
  n.value = node(a).value.cwiseMax(0.0);
  n.op = Op::kRelu;
  n.a = a.idx;
  return push(std::move(n), "relu");
}

Var Tape::leaky_relu(Var a, double slope) {
  Node n;
  n.value = node(a).value.unaryExpr(
      [slope](double x) { return x > 0.0 ? x : slope * x; });
  n.op = Op::kLeakyRelu;
  n.a = a.idx;
  n.scalar = slope;
  return push(std::move(n), "leaky_relu");
}

Var Tape::sum(Var a) {
  Node n;
  n.value = Mat::Constant(1, 1, node(a).value.sum());
  n.op = Op::kSum;
  n.a = a.idx;
  return push(std::move(n), "sum");
}

Var Tape::mean(Var a) {
  Node n;
  n.value = Mat::Constant(1, 1, node(a).value.mean());
  n.op = Op::kMean;
  n.a = a.idx;
  return push(std::move(n), "mean");
}

Var Tape::colwise_sumsq(Var a) {
  Node n;
  n.value = node(a).value.colwise().squaredNorm();
  n.op = Op::kColSumsq;
  n.a = a.idx;
  return push(std::move(n), "colwise_sumsq");
}

Var Tape::sumsq(Var a) {
  Node n;
  n.value = Mat::Constant(1, 1, node(a).value.squaredNorm());
  n.op = Op::kSumsq;
  n.a = a.idx;
  return push(std::move(n), "sumsq");
}

Var Tape::bce_with_logits(Var logits, double label) {
  const Mat& x = node(logits).value;
  // softplus(x) - x*label, evaluated as max(x,0) - x*label + log1p(exp(-|x|)).
  const double total =
      x.unaryExpr([label](double v) {
         return std::max(v, 0.0) - v * label + std::log1p(std::exp(-std::fabs(v)));
       }).sum();
  Node n;
  n.value = Mat::Constant(1, 1, total / static_cast<double>(x.size()));
  n.op = Op::kBceLogits;
  n.a = logits.idx;
  n.scalar = label;
  return push(std::move(n), "bce_with_logits");
}

Mat& Tape::grad_buffer(std::int32_t idx) {
  Node& n = nodes_[idx];
  if (!n.touched) {
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.touched = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  Node& l = node(loss);
  if (backward_run_)
    throw std::logic_error("tape: backward called twice without reset");
  if (l.value.rows() != 1 || l.value.cols() != 1)
    throw std::invalid_argument("tape: backward requires a scalar (1x1) loss");
  backward_run_ = true;

  grad_buffer(loss.idx)(0, 0) = 1.0;
  for (std::int32_t i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.touched) backprop(n);
  }
  // Untouched nodes still expose a well-defined (zero) gradient.
  for (auto& n : nodes_)
    if (!n.touched) n.grad.setZero(n.value.rows(), n.value.cols());
}

void Tape::backprop(Node& n) {
  const Mat& g = n.grad;
  switch (n.op) {
    case Op::kInput:
      break;
    case Op::kAdd:
      grad_buffer(n.a) += g;
      grad_buffer(n.b) += g;
      break;
    case Op::kSub:
      grad_buffer(n.a) += g;
      grad_buffer(n.b) -= g;
      break;
    case Op::kMul:
      grad_buffer(n.a) += g.cwiseProduct(nodes_[n.b].value);
      grad_buffer(n.b) += g.cwiseProduct(nodes_[n.a].value);
      break;
    case Op::kMin: {
      const Mat& va = nodes_[n.a].value;
      const Mat& vb = nodes_[n.b].value;
      const auto mask = (va.array() <= vb.array()).cast<double>();
      grad_buffer(n.a).array() += g.array() * mask;
      grad_buffer(n.b).array() += g.array() * (1.0 - mask);
      break;
    }
    case Op::kScale:
      grad_buffer(n.a) += n.scalar * g;
      break;
    case Op::kMatmul:
      grad_buffer(n.a).noalias() += g * nodes_[n.b].value.transpose();
      grad_buffer(n.b).noalias() += nodes_[n.a].value.transpose() * g;
      break;
    case Op::kAffine:
      grad_buffer(n.a).noalias() += g * nodes_[n.c].value.transpose();
      grad_buffer(n.b).col(0) += g.rowwise().sum();
      grad_buffer(n.c).noalias() += nodes_[n.a].value.transpose() * g;
      break;
    case Op::kConcatRows: {
      Eigen::Index at = 0;
      for (std::int32_t p : n.parts) {
        const Eigen::Index r = nodes_[p].value.rows();
        grad_buffer(p) += g.middleRows(at, r);
        at += r;
      }
      break;
    }
    case Op::kRows:
      grad_buffer(n.a).middleRows(n.row0, n.value.rows()) += g;
      break;
    case Op::kTanh:
      grad_buffer(n.a).array() += g.array() * (1.0 - n.value.array().square());
      break;
    case Op::kLogistic:
      grad_buffer(n.a).array() += g.array() * n.value.array() * (1.0 - n.value.array());
      break;
    case Op::kRelu:
      grad_buffer(n.a).array() +=
          g.array() * (nodes_[n.a].value.array() > 0.0).cast<double>();
      break;
    case Op::kLeakyRelu: {
      const double slope = n.scalar;
      grad_buffer(n.a).array() +=
          g.array() * nodes_[n.a].value.unaryExpr([slope](double x) {
                              return x > 0.0 ? 1.0 : slope;
                            }).array();
      break;
    }
    case Op::kSum:
      grad_buffer(n.a).array() += g(0, 0);
      break;
    case Op::kMean:
      grad_buffer(n.a).array() += g(0, 0) / static_cast<double>(nodes_[n.a].value.size());
      break;
    case Op::kColSumsq: {
      Mat& ga = grad_buffer(n.a);
      const Mat& va = nodes_[n.a].value;
      for (Eigen::Index c = 0; c < va.cols(); ++c) ga.col(c) += 2.0 * g(0, c) * va.col(c);
      break;
    }
    case Op::kSumsq:
      grad_buffer(n.a) += 2.0 * g(0, 0) * nodes_[n.a].value;
      break;
    case Op::kBceLogits: {
      const double label = n.scalar;
      const Mat& x = nodes_[n.a].value;
      const double inv = g(0, 0) / static_cast<double>(x.size());
      grad_buffer(n.a) += inv * x.unaryExpr([label](double v) {
                                   return logistic_scalar(v) - label;
                                 });
      break;
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_run_ = false;
}

}  // namespace skyfall::diff
