#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace skyfall::diff {

using Mat = Eigen::MatrixXd;

// Handle to a tape node.
struct Var {
  std::int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over dense 2-D values. Values are matrices whose
// columns are batch elements; a vector is a single-column matrix.
// Forward ops record nodes in program order; backward walks them in
// reverse, accumulating gradients additively (a node consumed at many
// time steps receives one contribution per use).
class Tape {
 public:
  Tape() = default;

  Var input(Mat value);

  const Mat& value(Var v) const { return node(v).value; }
  // Valid after backward(); zero for nodes the loss does not reach.
  const Mat& grad(Var v) const;

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var cmin(Var a, Var b); // elementwise minimum, ties route to a
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);
  Var affine(Var w, Var b, Var x);  // w*x + b, bias broadcast over columns
  Var concat_rows(std::span<const Var> parts);
  Var rows(Var a, Eigen::Index first, Eigen::Index count);

  Var tanh(Var a);
  Var logistic(Var a);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope = 0.01);

  Var sum(Var a);                // 1x1
  Var mean(Var a);               // 1x1
  Var colwise_sumsq(Var a);      // 1xN row of per-column squared norms
  Var sumsq(Var a);              // 1x1 squared Frobenius norm

  // Mean over all entries of the binary cross-entropy on logits against
  // a constant label, computed in the stable softplus form.
  Var bce_with_logits(Var logits, double label);

  // Seeds the reverse pass from a 1x1 loss. Calling it twice without
  // reset, or with a handle from another tape, is an error.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void reset();

 private:
  enum class Op : std::uint8_t {
    kInput, kAdd, kSub, kMul, kMin, kScale, kMatmul, kAffine, kConcatRows,
    kRows, kTanh, kLogistic, kRelu, kLeakyRelu, kSum, kMean, kColSumsq,
    kSumsq, kBceLogits,
  };

  struct Node {
    Mat value;
    Mat grad;
    Op op = Op::kInput;
    std::int32_t a = -1, b = -1, c = -1;
    double scalar = 0.0;
    Eigen::Index row0 = 0;
    std::vector<std::int32_t> parts;  // concat only
    bool touched = false;             // reached by the reverse pass
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Node&& n, const char* op_name);
  Mat& grad_buffer(std::int32_t idx);
  void backprop(Node& n);

  std::vector<Node> nodes_;
  bool backward_run_ = false;
};

}  // namespace skyfall::diff
