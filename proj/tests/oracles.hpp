// Independent reference solutions for solver tests.
#pragma once

#include <timeopt/conic.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// min 1/2 x'Px + q'x  s.t.  Cx <= d, Ex = e
struct Qp
{
  MatrixXd P;
  VectorXd q;
  MatrixXd C;
  VectorXd d;
  MatrixXd E;
  VectorXd e;
};

struct QpSolution
{
  VectorXd x;
  double objective;
};

inline MatrixXd random_matrix(std::mt19937& rng, int r, int c)
{
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      M(i, j) = g(rng);
  return M;
}

inline Qp random_qp(std::mt19937& rng, int n, int m, int p)
{
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Qp qp;
  const MatrixXd M = random_matrix(rng, n, n);
  qp.P = M.transpose() * M + 0.1 * MatrixXd::Identity(n, n);
  qp.q = random_matrix(rng, n, 1) * 3.0;
  const VectorXd x0 = random_matrix(rng, n, 1);
  qp.C = random_matrix(rng, m, n);
  qp.d = qp.C * x0;
  for (int i = 0; i < m; ++i)
    qp.d[i] += u(rng);
  qp.E = random_matrix(rng, p, n);
  qp.e = qp.E * x0;
  return qp;
}

/// Enumerates every active set of the inequality rows and keeps the best KKT
/// point that is primal and dual feasible.
inline std::optional<QpSolution> solve_qp_active_set(const Qp& qp)
{
  const auto n = qp.P.rows(), m = qp.C.rows(), p = qp.E.rows();
  std::optional<QpSolution> best;
  for (long mask = 0; mask < (1L << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1L << i))
        act.push_back(i);
    const auto k = static_cast<long>(act.size());
    if (k + p > n)
      continue;
    MatrixXd K = MatrixXd::Zero(n + k + p, n + k + p);
    VectorXd rhs = VectorXd::Zero(n + k + p);
    K.topLeftCorner(n, n) = qp.P;
    rhs.head(n) = -qp.q;
    for (long i = 0; i < k; ++i) {
      K.block(n + i, 0, 1, n) = qp.C.row(act[static_cast<std::size_t>(i)]);
      K.block(0, n + i, n, 1) = qp.C.row(act[static_cast<std::size_t>(i)]).transpose();
      rhs[n + i] = qp.d[act[static_cast<std::size_t>(i)]];
    }
    K.block(n + k, 0, p, n) = qp.E;
    K.block(0, n + k, n, p) = qp.E.transpose();
    rhs.tail(p) = qp.e;
    const Eigen::FullPivLU<MatrixXd> lu(K);
    if (!lu.isInvertible())
      continue;
    const VectorXd sol = lu.solve(rhs);
    const VectorXd x = sol.head(n);
    if (k > 0 && sol.segment(n, k).minCoeff() < -1e-9)
      continue;
    if (m > 0 && (qp.C * x - qp.d).maxCoeff() > 1e-9)
      continue;
    const double obj = 0.5 * x.dot(qp.P * x) + qp.q.dot(x);
    if (!best || obj < best->objective)
      best = QpSolution{x, obj};
  }
  return best;
}

inline timeopt::ConicProgram qp_as_socp(const Qp& qp)
{
  using timeopt::AffineExpr;
  timeopt::ProgramBuilder pb;
  const auto n = static_cast<int>(qp.P.rows());
  for (int j = 0; j < n; ++j)
    pb.add_variable("x" + std::to_string(j));
  const MatrixXd Lt = Eigen::LLT<MatrixXd>(qp.P).matrixU(); // P = Lt' Lt
  std::vector<AffineExpr> r(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      r[static_cast<std::size_t>(i)] += AffineExpr::variable(j, Lt(i, j));
  pb.add_squared_norm_cost(r, 0.5, "t");
  for (int j = 0; j < n; ++j)
    pb.add_cost(AffineExpr::variable(j, qp.q[j]));
  for (int i = 0; i < qp.C.rows(); ++i) {
    AffineExpr row(qp.d[i]);
    for (int j = 0; j < n; ++j)
      row += AffineExpr::variable(j, -qp.C(i, j));
    pb.add_nonneg(row);
  }
  for (int i = 0; i < qp.E.rows(); ++i) {
    AffineExpr row(-qp.e[i]);
    for (int j = 0; j < n; ++j)
      row += AffineExpr::variable(j, qp.E(i, j));
    pb.add_equality(row);
  }
  return pb.build();
}

struct KnownProgram
{
  timeopt::ConicProgram program;
  double objective;
};

/// min c'x s.t. |x - x0| <= r, optimum c'x0 - r|c|.
inline KnownProgram random_ball_lp(std::mt19937& rng, int n)
{
  using timeopt::AffineExpr;
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const VectorXd c = random_matrix(rng, n, 1);
  const VectorXd x0 = random_matrix(rng, n, 1);
  const double r = u(rng);
  timeopt::ProgramBuilder pb;
  std::vector<AffineExpr> cone{AffineExpr(r)};
  for (int j = 0; j < n; ++j) {
    pb.add_variable("x" + std::to_string(j));
    pb.add_cost(AffineExpr::variable(j, c[j]));
    cone.push_back(AffineExpr::variable(j) - x0[j]);
  }
  pb.add_soc(cone);
  // a loose box that never binds
  for (int j = 0; j < n; ++j)
    pb.add_nonneg(AffineExpr::variable(j) - x0[j] + r + 1.0);
  return {pb.build(), c.dot(x0) - r * c.norm()};
}

/// Constructed infeasible instances; `kind` selects the contradiction.
inline timeopt::ConicProgram random_infeasible(std::mt19937& rng, int kind)
{
  using timeopt::AffineExpr;
  const int n = 4 + kind % 3;
  const VectorXd a = random_matrix(rng, n, 1);
  const VectorXd c = random_matrix(rng, n, 1);
  timeopt::ProgramBuilder pb;
  AffineExpr ax;
  for (int j = 0; j < n; ++j) {
    pb.add_variable("x" + std::to_string(j));
    pb.add_cost(AffineExpr::variable(j, c[j]));
    ax += AffineExpr::variable(j, a[j]);
  }
  const auto ball = [&](const VectorXd& center, double r) {
    std::vector<AffineExpr> cone{AffineExpr(r)};
    for (int j = 0; j < n; ++j)
      cone.push_back(AffineExpr::variable(j) - center[j]);
    pb.add_soc(cone);
  };
  switch (kind % 4) {
  case 0: // a'x >= 1 and a'x <= -1
    pb.add_nonneg(ax - 1.0);
    pb.add_nonneg(-ax - 1.0);
    ball(VectorXd::Zero(n), 10.0);
    break;
  case 1: // |x| <= 1 and a'x >= 2|a|
    ball(VectorXd::Zero(n), 1.0);
    pb.add_nonneg(ax - 2.0 * a.norm());
    break;
  case 2: // |x| <= 1 and a'x = 3|a|
    ball(VectorXd::Zero(n), 1.0);
    pb.add_equality(ax - 3.0 * a.norm());
    break;
  default: { // two disjoint balls
    const VectorXd c1 = random_matrix(rng, n, 1);
    VectorXd dir = random_matrix(rng, n, 1);
    dir.normalize();
    ball(c1, 1.0);
    ball(c1 + 3.0 * dir, 1.0);
    break;
  }
  }
  return pb.build();
}

/// Largest violation of the Farkas conditions A'y + G'z = 0, z in K*,
/// b'y + h'z = -1.
inline double certificate_error(const timeopt::ConicProgram& prog, const timeopt::ConicSolution& sol)
{
  double err = 0.0;
  VectorXd r = VectorXd::Zero(prog.num_vars());
  if (prog.A.rows() > 0)
    r += prog.A.transpose() * sol.y;
  if (prog.G.rows() > 0)
    r += prog.G.transpose() * sol.z;
  err = std::max(err, r.lpNorm<Eigen::Infinity>());
  err = std::max(err, std::abs(prog.b.dot(sol.y) + prog.h.dot(sol.z) + 1.0));
  for (int i = 0; i < prog.cones.nonneg; ++i)
    err = std::max(err, -sol.z[i]);
  int off = prog.cones.nonneg;
  for (int d : prog.cones.soc) {
    const double t = sol.z[off];
    const double nrm = d > 1 ? sol.z.segment(off + 1, d - 1).norm() : 0.0;
    err = std::max(err, nrm - t);
    off += d;
  }
  return err;
}

} // namespace oracle
