#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

namespace shipid::ad {

using Matrix = Eigen::MatrixXd;

// Handle to a node on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Columns are independent batch items.
//
// Each operation appends a node holding its forward value; backward() walks the
// nodes in reverse and accumulates adjoints. Only nodes that (transitively)
// depend on a parameter carry gradients.
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  Var constant(Matrix value);
  Var parameter(Matrix value);

  // a^T b
  Var matmul_tn(Var a, Var b);
  Var add(Var a, Var b);
  // y + alpha * x
  Var axpy(Var y, double alpha, Var x);
  // diag(scale) * a
  Var row_scale(Var a, const Eigen::VectorXd& scale);
  Var vstack(std::initializer_list<Var> parts);
  Var rows(Var a, Eigen::Index start, Eigen::Index count);

  // tanh(pre + bias) - tanh(bias), bias is a column broadcast over the batch.
  // `extra`, when valid, is added to `pre` first.
  Var centered_tanh(Var pre, Var bias, Var extra = {});

  // Explicit Euler step of planar kinematics. pose rows (X, Y, psi),
  // vel rows (u, vm, r).
  Var euler_pose(Var pose, Var vel, double dt);

  // sum_i weight_i * sum_b (pred(i, b) - target(i, b))^2, a 1x1 node.
  Var weighted_sq_error(Var pred, const Matrix& target, const Eigen::VectorXd& weight);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  // Zero-sized until backward() has reached the node.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  enum class Op : std::uint8_t {
    Leaf,
    MatMulTN,
    Add,
    Axpy,
    RowScale,
    VStack,
    Rows,
    CenteredTanh,
    EulerPose,
    WeightedSqError,
  };

  struct Node {
    Op op = Op::Leaf;
    bool needs_grad = false;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::int32_t c = -1;
    double scalar = 0.0;
    Eigen::Index offset = 0;
    Matrix value;
    Matrix grad;
    Matrix aux;
    Eigen::VectorXd weight;
    std::vector<std::int32_t> parts;
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  Var push(Node n);
  void accumulate(std::int32_t id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(std::int32_t id, const Expr& g);

  std::vector<Node> nodes_;
};

}  // namespace shipid::ad
