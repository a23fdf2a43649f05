#include "shipid/tape.hpp"

#include <cmath>

#include "shipid/error.hpp"
#include "shipid/fastmath.hpp"

namespace shipid::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) {
    throw NumericError(std::string("tape: ") + what);
  }
}

}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(std::int32_t id, const Matrix& g) { accumulate_expr(id, g); }

template <typename Expr>
void Tape::accumulate_expr(std::int32_t id, const Expr& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) {
    return;
  }
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::matmul_tn(Var a, Var b) {
  require(value(a).rows() == value(b).rows(), "matmul_tn shape mismatch");
  Node n;
  n.op = Op::MatMulTN;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = needs_grad(a) || needs_grad(b);
  n.value.noalias() = value(a).transpose() * value(b);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "add shape mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = needs_grad(a) || needs_grad(b);
  n.value = value(a) + value(b);
  return push(std::move(n));
}

Var Tape::axpy(Var y, double alpha, Var x) {
  require(value(y).rows() == value(x).rows() && value(y).cols() == value(x).cols(),
          "axpy shape mismatch");
  Node n;
  n.op = Op::Axpy;
  n.a = y.id;
  n.b = x.id;
  n.scalar = alpha;
  n.needs_grad = needs_grad(y) || needs_grad(x);
  n.value = value(y) + alpha * value(x);
  return push(std::move(n));
}

Var Tape::row_scale(Var a, const Eigen::VectorXd& scale) {
  require(scale.size() == value(a).rows(), "row_scale shape mismatch");
  Node n;
  n.op = Op::RowScale;
  n.a = a.id;
  n.weight = scale;
  n.needs_grad = needs_grad(a);
  n.value = scale.asDiagonal() * value(a);
  return push(std::move(n));
}

Var Tape::vstack(std::initializer_list<Var> parts) {
  require(parts.size() > 0, "vstack of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(*parts.begin()).cols();
  Node n;
  n.op = Op::VStack;
  for (Var p : parts) {
    require(value(p).cols() == cols, "vstack column mismatch");
    rows += value(p).rows();
    n.parts.push_back(p.id);
    n.needs_grad = n.needs_grad || needs_grad(p);
  }
  n.value.resize(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    n.value.middleRows(off, value(p).rows()) = value(p);
    off += value(p).rows();
  }
  return push(std::move(n));
}

Var Tape::rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= value(a).rows(), "rows out of range");
  Node n;
  n.op = Op::Rows;
  n.a = a.id;
  n.offset = start;
  n.needs_grad = needs_grad(a);
  n.value = value(a).middleRows(start, count);
  return push(std::move(n));
}

Var Tape::centered_tanh(Var pre, Var bias, Var extra) {
  const Matrix& p = value(pre);
  const Matrix& b = value(bias);
  require(b.cols() == 1 && b.rows() == p.rows(), "centered_tanh bias shape mismatch");
  Node n;
  n.op = Op::CenteredTanh;
  n.a = pre.id;
  n.b = bias.id;
  n.needs_grad = needs_grad(pre) || needs_grad(bias);
  if (extra.valid()) {
    require(value(extra).rows() == p.rows() && value(extra).cols() == p.cols(),
            "centered_tanh extra shape mismatch");
    n.c = extra.id;
    n.needs_grad = n.needs_grad || needs_grad(extra);
    n.aux = tanh_array(((p + value(extra)).colwise() + b.col(0)).array()).matrix();
  } else {
    n.aux = tanh_array((p.colwise() + b.col(0)).array()).matrix();
  }
  n.weight = tanh_array(b.col(0).array()).matrix();
  n.value = n.aux.colwise() - n.weight;
  return push(std::move(n));
}

Var Tape::euler_pose(Var pose, Var vel, double dt) {
  const Matrix& p = value(pose);
  const Matrix& v = value(vel);
  require(p.rows() == 3 && v.rows() == 3 && p.cols() == v.cols(), "euler_pose shape mismatch");
  Node n;
  n.op = Op::EulerPose;
  n.a = pose.id;
  n.b = vel.id;
  n.scalar = dt;
  n.needs_grad = needs_grad(pose) || needs_grad(vel);
  // aux rows: cos(psi), sin(psi)
  n.aux.resize(2, p.cols());
  n.aux.row(0) = p.row(2).array().cos();
  n.aux.row(1) = p.row(2).array().sin();
  n.value.resize(3, p.cols());
  const auto c = n.aux.row(0).array();
  const auto s = n.aux.row(1).array();
  const auto u = v.row(0).array();
  const auto vm = v.row(1).array();
  n.value.row(0) = p.row(0).array() + dt * (u * c - vm * s);
  n.value.row(1) = p.row(1).array() + dt * (u * s + vm * c);
  n.value.row(2) = p.row(2).array() + dt * v.row(2).array();
  return push(std::move(n));
}

Var Tape::weighted_sq_error(Var pred, const Matrix& target, const Eigen::VectorXd& weight) {
  const Matrix& p = value(pred);
  require(p.rows() == target.rows() && p.cols() == target.cols() && weight.size() == p.rows(),
          "weighted_sq_error shape mismatch");
  Node n;
  n.op = Op::WeightedSqError;
  n.a = pred.id;
  n.needs_grad = needs_grad(pred);
  n.aux = p - target;
  n.weight = weight;
  n.value.resize(1, 1);
  n.value(0, 0) = (weight.asDiagonal() * n.aux.cwiseAbs2()).sum();
  return push(std::move(n));
}

void Tape::backward(Var root) {
  require(value(root).size() == 1, "backward needs a scalar root");
  for (auto& n : nodes_) {
    n.grad.resize(0, 0);
  }
  if (!needs_grad(root)) {
    return;
  }
  node(root).grad = Matrix::Ones(1, 1);

  for (std::size_t k = nodes_.size(); k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.needs_grad || n.grad.size() == 0) {
      continue;
    }
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMulTN: {
        const Matrix& a = nodes_[static_cast<std::size_t>(n.a)].value;
        const Matrix& b = nodes_[static_cast<std::size_t>(n.b)].value;
        if (nodes_[static_cast<std::size_t>(n.a)].needs_grad) {
          Matrix ga;
          ga.noalias() = b * g.transpose();
          accumulate(n.a, ga);
        }
        if (nodes_[static_cast<std::size_t>(n.b)].needs_grad) {
          Matrix gb;
          gb.noalias() = a * g;
          accumulate(n.b, gb);
        }
        break;
      }
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Axpy:
        accumulate(n.a, g);
        accumulate_expr(n.b, n.scalar * g);
        break;
      case Op::RowScale:
        accumulate_expr(n.a, n.weight.asDiagonal() * g);
        break;
      case Op::VStack: {
        Eigen::Index off = 0;
        for (std::int32_t id : n.parts) {
          const Eigen::Index r = nodes_[static_cast<std::size_t>(id)].value.rows();
          accumulate_expr(id, g.middleRows(off, r));
          off += r;
        }
        break;
      }
      case Op::Rows: {
        Node& src = nodes_[static_cast<std::size_t>(n.a)];
        if (src.needs_grad) {
          if (src.grad.size() == 0) {
            src.grad = Matrix::Zero(src.value.rows(), src.value.cols());
          }
          src.grad.middleRows(n.offset, g.rows()) += g;
        }
        break;
      }
      case Op::CenteredTanh: {
        const Matrix gpre = (g.array() * (1.0 - n.aux.array().square())).matrix();
        accumulate(n.a, gpre);
        if (n.c >= 0) {
          accumulate(n.c, gpre);
        }
        if (nodes_[static_cast<std::size_t>(n.b)].needs_grad) {
          const Eigen::VectorXd dtanh_b = 1.0 - n.weight.array().square();
          const Eigen::VectorXd gb =
              gpre.rowwise().sum() - (g.rowwise().sum().array() * dtanh_b.array()).matrix();
          accumulate(n.b, gb);
        }
        break;
      }
      case Op::EulerPose: {
        const double dt = n.scalar;
        const Matrix& v = nodes_[static_cast<std::size_t>(n.b)].value;
        const auto c = n.aux.row(0).array();
        const auto s = n.aux.row(1).array();
        const auto u = v.row(0).array();
        const auto vm = v.row(1).array();
        const auto gX = g.row(0).array();
        const auto gY = g.row(1).array();
        const auto gpsi = g.row(2).array();
        if (nodes_[static_cast<std::size_t>(n.a)].needs_grad) {
          Matrix gp(3, g.cols());
          gp.row(0) = gX;
          gp.row(1) = gY;
          gp.row(2) = gpsi + dt * (gX * (-u * s - vm * c) + gY * (u * c - vm * s));
          accumulate(n.a, gp);
        }
        if (nodes_[static_cast<std::size_t>(n.b)].needs_grad) {
          Matrix gv(3, g.cols());
          gv.row(0) = dt * (gX * c + gY * s);
          gv.row(1) = dt * (-gX * s + gY * c);
          gv.row(2) = dt * gpsi;
          accumulate(n.b, gv);
        }
        break;
      }
      case Op::WeightedSqError:
        accumulate_expr(n.a, (2.0 * g(0, 0)) * (n.weight.asDiagonal() * n.aux));
        break;
    }
  }
}

}  // namespace shipid::ad
