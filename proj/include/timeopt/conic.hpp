#pragma once

#include <timeopt/expr.hpp>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace timeopt {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/// Nonnegative orthant rows first, then second-order cones in order. A cone
/// block (t, u) means |u| <= t.
struct ConeLayout
{
  int nonneg = 0;
  std::vector<int> soc;

  int rows() const;
  /// Degree of the cone (orthant rows + number of SOCs).
  int degree() const { return nonneg + static_cast<int>(soc.size()); }
  friend bool operator==(const ConeLayout&, const ConeLayout&) = default;
};

/// min c^T x + c0  s.t.  A x = b,  G x + s = h,  s in K.
struct ConicProgram
{
  std::vector<std::string> names;
  Eigen::VectorXd c;
  double c0 = 0.0;
  SpMat A;
  Eigen::VectorXd b;
  SpMat G;
  Eigen::VectorXd h;
  ConeLayout cones;

  int num_vars() const { return static_cast<int>(c.size()); }
  /// Throws std::invalid_argument when dimensions or the layout disagree.
  void check() const;
};

enum class SolveStatus { Optimal, PrimalInfeasible, DualInfeasible, MaxIter, NumericalFailure };

std::string_view to_string(SolveStatus status);

struct SolverSettings
{
  double tol = 1e-7;
  int max_iter = 100;
  double static_reg = 1e-9;
  /// On numerical failure the solve is repeated once with this static
  /// regularization; 0 disables the retry.
  double retry_reg = 1e-7;
  int refine_steps = 8;
  bool equilibrate = true;
  /// When the iteration stalls, the best iterate is still reported optimal
  /// (with `inaccurate` set) if its residuals and relative gap meet these.
  double reduced_tol = 1e-6;
  double reduced_gap_tol = 1e-5;
  bool verbose = false; ///< one line per iteration on stderr
};

/// For infeasibility statuses, (y, z) or (x, s) hold the normalized
/// certificate and the objectives are not meaningful.
struct ConicSolution
{
  Eigen::VectorXd x, y, z, s;
  SolveStatus status = SolveStatus::NumericalFailure;
  double pres = 0.0;
  double dres = 0.0;
  double gap = 0.0;
  double pobj = 0.0;
  double dobj = 0.0;
  int iterations = 0;
  double solve_time = 0.0;
  bool inaccurate = false; ///< optimal only to SolverSettings::reduced_tol
};

class ConicBackend
{
public:
  virtual ~ConicBackend() = default;
  virtual std::string name() const = 0;
  virtual ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings) = 0;
};

/// Primal-dual interior point method on the homogeneous self-dual embedding
/// with Nesterov-Todd scaling and Mehrotra correction.
class InteriorPointBackend : public ConicBackend
{
public:
  std::string name() const override { return "ipm"; }
  ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings) override;
};

ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings = {});
ConicSolution solve(const ConicProgram& prog, double tol, int max_iter);

struct KktStats
{
  long variables = 0;
  long lin_eq = 0;
  long lin_ineq = 0;
  long soc_count = 0;
  long kkt_size = 0;
  long kkt_nnz = 0;
  friend bool operator==(const KktStats&, const KktStats&) = default;
};

/// Size of the KKT system [0 A' G'; A 0 0; G 0 -W^2] counted on the upper
/// triangle with a full diagonal and dense SOC scaling blocks.
KktStats kkt_stats(const ConicProgram& prog);

void write_program(std::ostream& out, const ConicProgram& prog);
ConicProgram read_program(std::istream& in);

/// Accumulates affine rows over a VariablePool and emits a ConicProgram.
class ProgramBuilder
{
public:
  int add_variable(std::string name) { return pool_.add(std::move(name)); }
  VariablePool& pool() { return pool_; }
  const VariablePool& pool() const { return pool_; }

  void add_cost(const AffineExpr& e);
  /// e == 0
  void add_equality(const AffineExpr& e);
  /// e >= 0
  void add_nonneg(const AffineExpr& e);
  /// e[0] >= |e[1..]|
  void add_soc(const std::vector<AffineExpr>& e);
  /// Adds t >= |e|^2 as a rotated cone and weight * t to the cost. Returns t.
  int add_squared_norm_cost(const std::vector<AffineExpr>& e, double weight, const std::string& name);

  int num_equalities() const { return static_cast<int>(eq_.size()); }
  int num_nonneg() const { return static_cast<int>(nonneg_.size()); }
  int num_soc() const { return static_cast<int>(soc_.size()); }

  ConicProgram build() const;

private:
  VariablePool pool_;
  AffineExpr cost_;
  std::vector<AffineExpr> eq_;
  std::vector<AffineExpr> nonneg_;
  std::vector<std::vector<AffineExpr>> soc_;
};

} // namespace timeopt
