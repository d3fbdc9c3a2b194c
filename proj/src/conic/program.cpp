#include <timeopt/conic.hpp>

#include <fmt/format.h>

#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace timeopt {

int ConeLayout::rows() const { return nonneg + std::accumulate(soc.begin(), soc.end(), 0); }

std::string_view to_string(SolveStatus status)
{
  switch (status) {
  case SolveStatus::Optimal: return "optimal";
  case SolveStatus::PrimalInfeasible: return "primal_infeasible";
  case SolveStatus::DualInfeasible: return "dual_infeasible";
  case SolveStatus::MaxIter: return "max_iter";
  case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

void ConicProgram::check() const
{
  const auto n = c.size();
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != n)
    throw std::invalid_argument("name table size differs from variable count");
  if (A.cols() != n || G.cols() != n)
    throw std::invalid_argument("A or G column count differs from variable count");
  if (A.rows() != b.size())
    throw std::invalid_argument("A rows differ from b");
  if (G.rows() != h.size())
    throw std::invalid_argument("G rows differ from h");
  if (cones.rows() != G.rows())
    throw std::invalid_argument(fmt::format("cone layout covers {} rows, G has {}", cones.rows(), G.rows()));
  if (cones.nonneg < 0)
    throw std::invalid_argument("negative orthant size");
  for (int d : cones.soc)
    if (d < 1)
      throw std::invalid_argument("second-order cone of dimension < 1");
}

KktStats kkt_stats(const ConicProgram& prog)
{
  KktStats s;
  s.variables = prog.num_vars();
  s.lin_eq = prog.A.rows();
  s.lin_ineq = prog.cones.nonneg;
  s.soc_count = static_cast<long>(prog.cones.soc.size());
  s.kkt_size = prog.num_vars() + prog.A.rows() + prog.G.rows();
  s.kkt_nnz = prog.A.nonZeros() + prog.G.nonZeros() + s.kkt_size;
  for (int d : prog.cones.soc)
    s.kkt_nnz += static_cast<long>(d) * (d - 1) / 2;
  return s;
}

namespace {

void write_sparse(std::ostream& out, char tag, const SpMat& M)
{
  for (int j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it)
      out << fmt::format("{} {} {} {}\n", tag, it.row(), it.col(), it.value());
}

} // namespace

void write_program(std::ostream& out, const ConicProgram& prog)
{
  prog.check();
  out << "conic_program 1\n";
  out << fmt::format("dims {} {} {}\n", prog.num_vars(), prog.A.rows(), prog.G.rows());
  out << fmt::format("cones {} {}", prog.cones.nonneg, prog.cones.soc.size());
  for (int d : prog.cones.soc)
    out << ' ' << d;
  out << '\n';
  out << fmt::format("c0 {}\n", prog.c0);
  for (int j = 0; j < prog.num_vars(); ++j) {
    const std::string name = prog.names.empty() ? fmt::format("x{}", j) : prog.names[static_cast<std::size_t>(j)];
    out << fmt::format("var {} {} {}\n", j, name, prog.c[j]);
  }
  write_sparse(out, 'A', prog.A);
  for (int i = 0; i < prog.b.size(); ++i)
    if (prog.b[i] != 0.0)
      out << fmt::format("b {} {}\n", i, prog.b[i]);
  write_sparse(out, 'G', prog.G);
  for (int i = 0; i < prog.h.size(); ++i)
    if (prog.h[i] != 0.0)
      out << fmt::format("h {} {}\n", i, prog.h[i]);
  out << "end\n";
}

ConicProgram read_program(std::istream& in)
{
  ConicProgram prog;
  std::string line;
  int line_no = 0;
  long n = -1, p = 0, m = 0;
  std::vector<Eigen::Triplet<double>> at, gt;
  bool ended = false;
  const auto fail = [&](const std::string& msg) {
    throw std::runtime_error(fmt::format("program dump line {}: {}", line_no, msg));
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#')
      continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "conic_program") {
      int version = 0;
      ls >> version;
      if (version != 1)
        fail("unsupported version");
    } else if (tag == "dims") {
      ls >> n >> p >> m;
      if (!ls || n < 0 || p < 0 || m < 0)
        fail("bad dims");
      prog.c = Eigen::VectorXd::Zero(n);
      prog.b = Eigen::VectorXd::Zero(p);
      prog.h = Eigen::VectorXd::Zero(m);
      prog.names.assign(static_cast<std::size_t>(n), "");
    } else if (tag == "cones") {
      std::size_t nsoc = 0;
      ls >> prog.cones.nonneg >> nsoc;
      prog.cones.soc.resize(nsoc);
      for (auto& d : prog.cones.soc)
        ls >> d;
      if (!ls)
        fail("bad cone line");
    } else if (tag == "c0") {
      ls >> prog.c0;
    } else if (n < 0) {
      fail("dims must precede data");
    } else if (tag == "var") {
      long j = 0;
      std::string name;
      double cj = 0.0;
      ls >> j >> name >> cj;
      if (!ls || j < 0 || j >= n)
        fail("bad var line");
      prog.names[static_cast<std::size_t>(j)] = name;
      prog.c[j] = cj;
    } else if (tag == "A" || tag == "G") {
      long i = 0, j = 0;
      double v = 0.0;
      ls >> i >> j >> v;
      const long rows = tag == "A" ? p : m;
      if (!ls || i < 0 || i >= rows || j < 0 || j >= n)
        fail("bad matrix entry");
      (tag == "A" ? at : gt).emplace_back(static_cast<int>(i), static_cast<int>(j), v);
    } else if (tag == "b" || tag == "h") {
      long i = 0;
      double v = 0.0;
      ls >> i >> v;
      auto& vec = tag == "b" ? prog.b : prog.h;
      if (!ls || i < 0 || i >= vec.size())
        fail("bad vector entry");
      vec[i] = v;
    } else if (tag == "end") {
      ended = true;
      break;
    } else {
      fail(fmt::format("unknown tag '{}'", tag));
    }
  }
  if (n < 0 || !ended)
    throw std::runtime_error("program dump truncated");
  prog.A.resize(p, n);
  prog.A.setFromTriplets(at.begin(), at.end());
  prog.G.resize(m, n);
  prog.G.setFromTriplets(gt.begin(), gt.end());
  prog.check();
  return prog;
}

// ---------------------------------------------------------------------------

void ProgramBuilder::add_cost(const AffineExpr& e) { cost_ += e; }

void ProgramBuilder::add_equality(const AffineExpr& e) { eq_.push_back(e.compressed()); }

void ProgramBuilder::add_nonneg(const AffineExpr& e) { nonneg_.push_back(e.compressed()); }

void ProgramBuilder::add_soc(const std::vector<AffineExpr>& e)
{
  std::vector<AffineExpr> block;
  block.reserve(e.size());
  for (const auto& r : e)
    block.push_back(r.compressed());
  soc_.push_back(std::move(block));
}

int ProgramBuilder::add_squared_norm_cost(const std::vector<AffineExpr>& e, double weight, const std::string& name)
{
  // t >= |e|^2  <=>  |(2e, t - 1)| <= t + 1
  const int t = pool_.add(name);
  std::vector<AffineExpr> block;
  block.push_back(AffineExpr::variable(t) + 1.0);
  block.push_back(AffineExpr::variable(t) - 1.0);
  for (const auto& r : e)
    block.push_back(r * 2.0);
  add_soc(block);
  add_cost(AffineExpr::variable(t, weight));
  return t;
}

ConicProgram ProgramBuilder::build() const
{
  ConicProgram prog;
  const int n = pool_.size();
  prog.names = pool_.names();
  prog.c = Eigen::VectorXd::Zero(n);
  const auto cost = cost_.compressed();
  for (const auto& [j, v] : cost.terms)
    prog.c[j] += v;
  prog.c0 = cost.constant;

  std::vector<Eigen::Triplet<double>> trip;
  prog.b.resize(static_cast<Eigen::Index>(eq_.size()));
  for (std::size_t i = 0; i < eq_.size(); ++i) {
    // a x + k = 0  ->  a x = -k
    for (const auto& [j, v] : eq_[i].terms)
      trip.emplace_back(static_cast<int>(i), j, v);
    prog.b[static_cast<Eigen::Index>(i)] = -eq_[i].constant;
  }
  prog.A.resize(static_cast<Eigen::Index>(eq_.size()), n);
  prog.A.setFromTriplets(trip.begin(), trip.end());

  // s = a x + k in K  ->  -a x + s = k
  trip.clear();
  std::vector<double> h;
  const auto push_row = [&](const AffineExpr& e) {
    const int i = static_cast<int>(h.size());
    for (const auto& [j, v] : e.terms)
      trip.emplace_back(i, j, -v);
    h.push_back(e.constant);
  };
  for (const auto& e : nonneg_)
    push_row(e);
  prog.cones.nonneg = static_cast<int>(nonneg_.size());
  for (const auto& block : soc_) {
    for (const auto& e : block)
      push_row(e);
    prog.cones.soc.push_back(static_cast<int>(block.size()));
  }
  prog.G.resize(static_cast<Eigen::Index>(h.size()), n);
  prog.G.setFromTriplets(trip.begin(), trip.end());
  prog.h = Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
  prog.A.prune(0.0);
  prog.G.prune(0.0);
  return prog;
}

} // namespace timeopt
