#include <doctest.h>

#include <timeopt/conic.hpp>

#include <Eigen/Dense>

#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace timeopt;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("min x s.t. x >= 1")
{
  ProgramBuilder pb;
  const int x = pb.add_variable("x");
  pb.add_cost(AffineExpr::variable(x));
  pb.add_nonneg(AffineExpr::variable(x) - 1.0);
  const auto sol = solve(pb.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.pobj == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("min t s.t. (t, 3, 4) in SOC3")
{
  ProgramBuilder pb;
  const int t = pb.add_variable("t");
  pb.add_cost(AffineExpr::variable(t));
  pb.add_soc({AffineExpr::variable(t), AffineExpr(3.0), AffineExpr(4.0)});
  const auto prog = pb.build();
  const auto sol = solve(prog);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(5.0).epsilon(1e-7));

  const auto st = kkt_stats(prog);
  CHECK(st.variables == 1);
  CHECK(st.lin_eq == 0);
  CHECK(st.lin_ineq == 0);
  CHECK(st.soc_count == 1);
  CHECK(st.kkt_size == 4);
  CHECK(st.kkt_nnz == 8);
}

TEST_CASE("kkt_stats of the empty program")
{
  ConicProgram prog;
  prog.c.resize(0);
  prog.A.resize(0, 0);
  prog.b.resize(0);
  prog.G.resize(0, 0);
  prog.h.resize(0);
  CHECK(kkt_stats(prog) == KktStats{});
}

TEST_CASE("equality constrained least squares")
{
  // min |x - (1,2,3)|^2 s.t. x0 + x1 + x2 = 0 -> x = (1,2,3) - 2
  ProgramBuilder pb;
  std::vector<AffineExpr> r;
  AffineExpr sum;
  for (int i = 0; i < 3; ++i) {
    const int x = pb.add_variable("x");
    r.push_back(AffineExpr::variable(x) - (i + 1.0));
    sum += AffineExpr::variable(x);
  }
  pb.add_equality(sum);
  pb.add_squared_norm_cost(r, 1.0, "t");
  const auto sol = solve(pb.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  for (int i = 0; i < 3; ++i)
    CHECK(sol.x[i] == doctest::Approx(i - 1.0).epsilon(1e-6));
  CHECK(sol.pobj == doctest::Approx(12.0).epsilon(1e-7));
}

TEST_CASE("random QPs against the active-set oracle")
{
  std::mt19937 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const auto qp = oracle::random_qp(rng, 10, 6, 2);
    const auto want = oracle::solve_qp_active_set(qp);
    REQUIRE(want.has_value());
    const auto prog = oracle::qp_as_socp(qp);
    const auto sol = solve(prog);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(std::abs(sol.pobj - want->objective) <= 1e-6 * std::max(1.0, std::abs(want->objective)));
    CHECK(sol.pobj >= sol.dobj - 1e-6);
  }
}

TEST_CASE("random ball-constrained linear programs")
{
  std::mt19937 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const auto inst = oracle::random_ball_lp(rng, 8);
    const auto sol = solve(inst.program);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(std::abs(sol.pobj - inst.objective) <= 1e-6 * std::max(1.0, std::abs(inst.objective)));
  }
}

TEST_CASE("primal infeasibility certificates")
{
  std::mt19937 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto prog = oracle::random_infeasible(rng, trial);
    const auto sol = solve(prog);
    REQUIRE(sol.status == SolveStatus::PrimalInfeasible);
    CHECK(oracle::certificate_error(prog, sol) <= 1e-6);
  }
}

TEST_CASE("dual infeasibility")
{
  // min -x s.t. x >= 0 is unbounded
  ProgramBuilder pb;
  const int x = pb.add_variable("x");
  pb.add_cost(AffineExpr::variable(x, -1.0));
  pb.add_nonneg(AffineExpr::variable(x));
  const auto prog = pb.build();
  const auto sol = solve(prog);
  REQUIRE(sol.status == SolveStatus::DualInfeasible);
  CHECK(prog.c.dot(sol.x) == doctest::Approx(-1.0));
  CHECK(sol.x[0] > 0.0);
}

TEST_CASE("property: weak duality at optimal status")
{
  std::mt19937 rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const auto qp = oracle::random_qp(rng, 6, 4, 1);
    const auto sol = solve(oracle::qp_as_socp(qp));
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.pobj >= sol.dobj - 1e-7 * std::max(1.0, std::abs(sol.pobj)));
  }
}

TEST_CASE("property: determinism")
{
  std::mt19937 rng(31);
  const auto qp = oracle::random_qp(rng, 10, 6, 2);
  const auto prog = oracle::qp_as_socp(qp);
  const auto a = solve(prog);
  const auto b = solve(prog);
  CHECK(a.iterations == b.iterations);
  CHECK(a.x == b.x);
  CHECK(a.z == b.z);
}

TEST_CASE("program dump round-trip")
{
  std::mt19937 rng(37);
  const auto prog = oracle::qp_as_socp(oracle::random_qp(rng, 5, 3, 1));
  std::stringstream ss;
  write_program(ss, prog);
  const auto back = read_program(ss);
  CHECK(back.names == prog.names);
  CHECK(back.c == prog.c);
  CHECK(back.c0 == prog.c0);
  CHECK(back.b == prog.b);
  CHECK(back.h == prog.h);
  CHECK(back.cones == prog.cones);
  CHECK(MatrixXd(back.A) == MatrixXd(prog.A));
  CHECK(MatrixXd(back.G) == MatrixXd(prog.G));

  std::stringstream bad("conic_program 1\ndims 1 0 0\nvar 3 x 1\nend\n");
  CHECK_THROWS(read_program(bad));
}

TEST_CASE("program check rejects inconsistent layouts")
{
  ProgramBuilder pb;
  const int x = pb.add_variable("x");
  pb.add_nonneg(AffineExpr::variable(x));
  auto prog = pb.build();
  CHECK_NOTHROW(prog.check());
  prog.cones.soc.push_back(3);
  CHECK_THROWS_AS(prog.check(), std::invalid_argument);
}

TEST_CASE("builder emits the documented row signs")
{
  ProgramBuilder pb;
  const int x = pb.add_variable("x"), y = pb.add_variable("y");
  pb.add_equality(AffineExpr::variable(x) + AffineExpr::variable(y) - 2.0);
  pb.add_nonneg(AffineExpr::variable(x, 3.0) + 1.0);
  const auto prog = pb.build();
  CHECK(prog.A.coeff(0, 0) == 1.0);
  CHECK(prog.b[0] == 2.0);
  CHECK(prog.G.coeff(0, 0) == -3.0);
  CHECK(prog.h[0] == 1.0);
  CHECK(prog.cones.nonneg == 1);
}
