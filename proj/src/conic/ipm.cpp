#include <timeopt/conic.hpp>

#include <Eigen/SparseCholesky>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace timeopt {

namespace {

using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cones
{
  int l = 0;
  std::vector<int> dim;
  std::vector<int> start;
  int m = 0;

  explicit Cones(const ConeLayout& layout) : l(layout.nonneg), dim(layout.soc)
  {
    int off = l;
    for (int d : dim) {
      start.push_back(off);
      off += d;
    }
    m = off;
  }
  int degree() const { return l + static_cast<int>(dim.size()); }
};

/// (u0 - |u1|)(u0 + |u1|) without cancellation near the boundary.
double jnorm_sq(const VectorXd& u, int off, int d)
{
  const double t = u[off];
  const double r = d > 1 ? u.segment(off + 1, d - 1).norm() : 0.0;
  return (t - r) * (t + r);
}

/// Largest alpha with u + alpha * e still outside the interior; negative when
/// u is interior.
double cone_violation(const Cones& K, const VectorXd& u)
{
  double worst = -kInf;
  for (int i = 0; i < K.l; ++i)
    worst = std::max(worst, -u[i]);
  for (std::size_t c = 0; c < K.dim.size(); ++c) {
    const int off = K.start[c], d = K.dim[c];
    const double r = d > 1 ? u.segment(off + 1, d - 1).norm() : 0.0;
    worst = std::max(worst, r - u[off]);
  }
  return worst;
}

void add_identity(const Cones& K, VectorXd& u, double a)
{
  for (int i = 0; i < K.l; ++i)
    u[i] += a;
  for (int off : K.start)
    u[off] += a;
}

void shift_into_cone(const Cones& K, VectorXd& u)
{
  const double v = cone_violation(K, u);
  if (v >= -1e-8)
    add_identity(K, u, 1.0 + std::max(v, 0.0));
}

/// Nesterov-Todd scaling point. W is block diagonal; for an SOC block
/// W = eta [w0 w1'; w1 I + w1 w1'/(1 + w0)].
struct Scaling
{
  VectorXd wl; // orthant: sqrt(s/z)
  std::vector<double> eta;
  std::vector<VectorXd> wbar;
  VectorXd lambda;
};

bool compute_scaling(const Cones& K, const VectorXd& s, const VectorXd& z, Scaling& W)
{
  W.wl.resize(K.l);
  W.lambda.resize(K.m);
  for (int i = 0; i < K.l; ++i) {
    if (!(s[i] > 0.0 && z[i] > 0.0))
      return false;
    W.wl[i] = std::sqrt(s[i] / z[i]);
    W.lambda[i] = std::sqrt(s[i] * z[i]);
  }
  const auto nc = K.dim.size();
  W.eta.resize(nc);
  W.wbar.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const int off = K.start[c], d = K.dim[c];
    const double sres = jnorm_sq(s, off, d), zres = jnorm_sq(z, off, d);
    if (!(sres > 0.0 && zres > 0.0 && s[off] > 0.0 && z[off] > 0.0))
      return false;
    const double sn = std::sqrt(sres), zn = std::sqrt(zres);
    const VectorXd sb = s.segment(off, d) / sn;
    const VectorXd zb = z.segment(off, d) / zn;
    const double gamma = std::sqrt(std::max((1.0 + sb.dot(zb)) / 2.0, 0.0));
    if (!(gamma > 0.0))
      return false;
    VectorXd w(d);
    w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
    if (d > 1)
      w.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
    W.eta[c] = std::sqrt(sn / zn);
    W.wbar[c] = std::move(w);
  }
  // lambda = W z
  VectorXd lam(K.m);
  for (std::size_t c = 0; c < nc; ++c) {
    const int off = K.start[c], d = K.dim[c];
    const auto& w = W.wbar[c];
    const double z0 = z[off];
    if (d == 1) {
      W.lambda[off] = W.eta[c] * w[0] * z0;
      continue;
    }
    const auto z1 = z.segment(off + 1, d - 1);
    const auto w1 = w.tail(d - 1);
    const double wz = w1.dot(z1);
    W.lambda[off] = W.eta[c] * (w[0] * z0 + wz);
    W.lambda.segment(off + 1, d - 1) = W.eta[c] * (z0 * w1 + z1 + (wz / (1.0 + w[0])) * w1);
  }
  return true;
}

VectorXd apply_w(const Cones& K, const Scaling& W, const VectorXd& v, bool inverse)
{
  VectorXd out(K.m);
  for (int i = 0; i < K.l; ++i)
    out[i] = inverse ? v[i] / W.wl[i] : v[i] * W.wl[i];
  for (std::size_t c = 0; c < K.dim.size(); ++c) {
    const int off = K.start[c], d = K.dim[c];
    const auto& w = W.wbar[c];
    const double eta = inverse ? 1.0 / W.eta[c] : W.eta[c];
    const double sg = inverse ? -1.0 : 1.0;
    const double v0 = v[off];
    if (d == 1) {
      out[off] = eta * w[0] * v0;
      continue;
    }
    const auto v1 = v.segment(off + 1, d - 1);
    const auto w1 = w.tail(d - 1);
    const double wv = w1.dot(v1);
    out[off] = eta * (w[0] * v0 + sg * wv);
    out.segment(off + 1, d - 1) = eta * (sg * v0 * w1 + v1 + (wv / (1.0 + w[0])) * w1);
  }
  return out;
}

VectorXd jordan_prod(const Cones& K, const VectorXd& u, const VectorXd& v)
{
  VectorXd out(K.m);
  for (int i = 0; i < K.l; ++i)
    out[i] = u[i] * v[i];
  for (std::size_t c = 0; c < K.dim.size(); ++c) {
    const int off = K.start[c], d = K.dim[c];
    out[off] = u.segment(off, d).dot(v.segment(off, d));
    if (d > 1)
      out.segment(off + 1, d - 1) = u[off] * v.segment(off + 1, d - 1) + v[off] * u.segment(off + 1, d - 1);
  }
  return out;
}

/// Solves lambda o x = v.
VectorXd jordan_div(const Cones& K, const VectorXd& lam, const VectorXd& v)
{
  VectorXd out(K.m);
  for (int i = 0; i < K.l; ++i)
    out[i] = v[i] / lam[i];
  for (std::size_t c = 0; c < K.dim.size(); ++c) {
    const int off = K.start[c], d = K.dim[c];
    const double l0 = lam[off];
    if (d == 1) {
      out[off] = v[off] / l0;
      continue;
    }
    const auto l1 = lam.segment(off + 1, d - 1);
    const auto v1 = v.segment(off + 1, d - 1);
    const double det = jnorm_sq(lam, off, d);
    const double x0 = (l0 * v[off] - l1.dot(v1)) / det;
    out[off] = x0;
    out.segment(off + 1, d - 1) = (v1 - x0 * l1) / l0;
  }
  return out;
}

/// Largest alpha with u + alpha d in the cone (u interior).
double max_step(const Cones& K, const VectorXd& u, const VectorXd& d)
{
  double alpha = kInf;
  for (int i = 0; i < K.l; ++i)
    if (d[i] < 0.0)
      alpha = std::min(alpha, -u[i] / d[i]);
  for (std::size_t c = 0; c < K.dim.size(); ++c) {
    const int off = K.start[c], dim = K.dim[c];
    const double un = std::sqrt(std::max(jnorm_sq(u, off, dim), 0.0));
    if (!(un > 0.0))
      return 0.0;
    const double ub0 = u[off] / un;
    const double db0 = d[off] / un;
    if (dim == 1) {
      if (db0 < 0.0)
        alpha = std::min(alpha, -ub0 / db0);
      continue;
    }
    const VectorXd ub1 = u.segment(off + 1, dim - 1) / un;
    const VectorXd db1 = d.segment(off + 1, dim - 1) / un;
    const double rho0 = ub0 * db0 - ub1.dot(db1);
    const VectorXd rho1 = db1 - ((db0 + rho0) / (ub0 + 1.0)) * ub1;
    const double den = rho1.norm() - rho0;
    if (den > 0.0)
      alpha = std::min(alpha, 1.0 / den);
  }
  return alpha;
}

/// Quasi-definite KKT system [D1 A' G'; A -D2 0; G 0 -W^2 - D3] stored as its
/// upper triangle; the symbolic analysis is done once.
class KktSystem
{
public:
  KktSystem(const SpMat& A, const SpMat& G, const Cones& K, double reg) : A_(A), G_(G), K_(K), reg_(reg)
  {
    n_ = static_cast<int>(A.cols());
    p_ = static_cast<int>(A.rows());
    const int N = n_ + p_ + K.m;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(A.nonZeros() + G.nonZeros() + N));
    for (int j = 0; j < N; ++j)
      trip.emplace_back(j, j, 0.0);
    for (int j = 0; j < A.outerSize(); ++j)
      for (SpMat::InnerIterator it(A, j); it; ++it)
        trip.emplace_back(j, n_ + static_cast<int>(it.row()), it.value());
    for (int j = 0; j < G.outerSize(); ++j)
      for (SpMat::InnerIterator it(G, j); it; ++it)
        trip.emplace_back(j, n_ + p_ + static_cast<int>(it.row()), it.value());
    for (std::size_t c = 0; c < K.dim.size(); ++c) {
      const int off = n_ + p_ + K.start[c];
      for (int a = 0; a < K.dim[c]; ++a)
        for (int b = a + 1; b < K.dim[c]; ++b)
          trip.emplace_back(off + a, off + b, 0.0);
    }
    M_.resize(N, N);
    M_.setFromTriplets(trip.begin(), trip.end());
    M_.makeCompressed();

    diag_.resize(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j)
      diag_[static_cast<std::size_t>(j)] = value_index(j, j);
    for (std::size_t c = 0; c < K.dim.size(); ++c) {
      const int off = n_ + p_ + K.start[c];
      std::vector<int> idx;
      for (int a = 0; a < K.dim[c]; ++a)
        for (int b = a + 1; b < K.dim[c]; ++b)
          idx.push_back(value_index(off + a, off + b));
      block_.push_back(std::move(idx));
    }
    ldlt_.analyzePattern(M_);
  }

  /// Retries with a larger static regularization when a pivot vanishes or
  /// has the wrong sign; refinement against the exact K absorbs the
  /// perturbation.
  bool factor(const Scaling& W)
  {
    W_ = &W;
    for (double reg = reg_; reg <= kMaxReg; reg *= 10.0) {
      fill(W, reg);
      ldlt_.factorize(M_);
      if (ldlt_.info() == Eigen::Success && signs_ok())
        return true;
    }
    return false;
  }

  /// K v without regularization.
  VectorXd multiply(const VectorXd& v) const
  {
    const auto vx = v.head(n_);
    const auto vy = v.segment(n_, p_);
    const VectorXd vz = v.tail(K_.m);
    VectorXd out(v.size());
    out.head(n_) = A_.transpose() * vy + G_.transpose() * vz;
    out.segment(n_, p_) = A_ * vx;
    const VectorXd w2 = apply_w(K_, *W_, apply_w(K_, *W_, vz, false), false);
    out.tail(K_.m) = G_ * vx - w2;
    return out;
  }

  VectorXd solve(const VectorXd& rhs, int refine_steps)
  {
    VectorXd x = ldlt_.solve(rhs);
    const double bnorm = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
    for (int k = 0; k < refine_steps; ++k) {
      const VectorXd r = rhs - multiply(x);
      if (!(r.lpNorm<Eigen::Infinity>() > 1e-14 * bnorm))
        break;
      x += ldlt_.solve(r);
    }
    residual_ = (rhs - multiply(x)).lpNorm<Eigen::Infinity>() / bnorm;
    return x;
  }

private:
  static constexpr double kMaxReg = 1e-3;

  /// Quasi-definiteness: positive pivots on the primal block, negative on
  /// the rest.
  bool signs_ok() const
  {
    const VectorXd& d = ldlt_.vectorD();
    const auto& perm = ldlt_.permutationP().indices();
    for (int j = 0; j < perm.size(); ++j) {
      const double dj = d[perm[j]];
      if (!(j < n_ ? dj > 0.0 : dj < 0.0))
        return false;
    }
    return true;
  }

  void fill(const Scaling& W, double reg)
  {
    double* val = M_.valuePtr();
    for (int j = 0; j < n_; ++j)
      val[diag_[static_cast<std::size_t>(j)]] = reg;
    for (int j = n_; j < n_ + p_; ++j)
      val[diag_[static_cast<std::size_t>(j)]] = -reg;
    for (int i = 0; i < K_.l; ++i)
      val[diag_[static_cast<std::size_t>(n_ + p_ + i)]] = -W.wl[i] * W.wl[i] - reg;
    for (std::size_t c = 0; c < K_.dim.size(); ++c) {
      // W^2 = eta^2 (2 w w' - J)
      const int off = K_.start[c], d = K_.dim[c];
      const auto& w = W.wbar[c];
      const double e2 = W.eta[c] * W.eta[c];
      for (int a = 0; a < d; ++a) {
        const double jaa = a == 0 ? 1.0 : -1.0;
        val[diag_[static_cast<std::size_t>(n_ + p_ + off + a)]] = -e2 * (2.0 * w[a] * w[a] - jaa) - reg;
      }
      std::size_t k = 0;
      for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b)
          val[block_[c][k++]] = -e2 * 2.0 * w[a] * w[b];
    }
  }

  int value_index(int row, int col) { return static_cast<int>(&M_.coeffRef(row, col) - M_.valuePtr()); }

  const SpMat& A_;
  const SpMat& G_;
  const Cones& K_;
  double reg_;
  int n_ = 0, p_ = 0;
  SpMat M_;
  std::vector<int> diag_;
  std::vector<std::vector<int>> block_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Upper> ldlt_;
  const Scaling* W_ = nullptr;
  double residual_ = 0.0;

public:
  /// Relative residual of the last solve after refinement.
  double residual() const { return residual_; }
};

/// Ruiz equilibration of [A; G]; one shared factor per SOC block keeps the
/// cone invariant.
struct Equilibration
{
  VectorXd D;  // columns
  VectorXd EA; // rows of A
  VectorXd EG; // rows of G
};

Equilibration equilibrate(SpMat& A, SpMat& G, const Cones& K, bool enabled)
{
  Equilibration eq{VectorXd::Ones(A.cols()), VectorXd::Ones(A.rows()), VectorXd::Ones(G.rows())};
  if (!enabled)
    return eq;
  for (int iter = 0; iter < 15; ++iter) {
    VectorXd cn = VectorXd::Zero(A.cols());
    VectorXd ra = VectorXd::Zero(A.rows());
    VectorXd rg = VectorXd::Zero(G.rows());
    for (int j = 0; j < A.outerSize(); ++j)
      for (SpMat::InnerIterator it(A, j); it; ++it) {
        const double a = std::abs(it.value());
        cn[j] = std::max(cn[j], a);
        ra[it.row()] = std::max(ra[it.row()], a);
      }
    for (int j = 0; j < G.outerSize(); ++j)
      for (SpMat::InnerIterator it(G, j); it; ++it) {
        const double a = std::abs(it.value());
        cn[j] = std::max(cn[j], a);
        rg[it.row()] = std::max(rg[it.row()], a);
      }
    for (std::size_t c = 0; c < K.dim.size(); ++c) {
      const int off = K.start[c], d = K.dim[c];
      const double mx = rg.segment(off, d).maxCoeff();
      rg.segment(off, d).setConstant(mx);
    }
    const auto fac = [](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; };
    const VectorXd dc = cn.unaryExpr(fac), da = ra.unaryExpr(fac), dg = rg.unaryExpr(fac);
    if ((dc.array() - 1.0).abs().maxCoeff() < 1e-3 && (A.rows() == 0 || (da.array() - 1.0).abs().maxCoeff() < 1e-3) &&
        (G.rows() == 0 || (dg.array() - 1.0).abs().maxCoeff() < 1e-3))
      break;
    A = da.asDiagonal() * A * dc.asDiagonal();
    G = dg.asDiagonal() * G * dc.asDiagonal();
    eq.D.array() *= dc.array();
    eq.EA.array() *= da.array();
    eq.EG.array() *= dg.array();
  }
  return eq;
}

struct Metrics
{
  double pres, dres, gap, pobj, dobj;
};

} // namespace

ConicSolution InteriorPointBackend::solve(const ConicProgram& prog, const SolverSettings& st)
{
  const auto t_start = std::chrono::steady_clock::now();
  prog.check();
  const Cones K(prog.cones);
  const int n = prog.num_vars();
  const int p = static_cast<int>(prog.A.rows());
  const int m = K.m;

  SpMat A = prog.A, G = prog.G;
  const Equilibration eq = equilibrate(A, G, K, st.equilibrate);
  const VectorXd c = eq.D.cwiseProduct(prog.c);
  const VectorXd b = eq.EA.cwiseProduct(prog.b);
  const VectorXd h = eq.EG.cwiseProduct(prog.h);

  ConicSolution sol;
  const auto finish = [&](ConicSolution& out) -> ConicSolution {
    out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
  };

  const double bn = 1.0 + prog.b.lpNorm<Eigen::Infinity>();
  const double hn = 1.0 + prog.h.lpNorm<Eigen::Infinity>();
  const double cn = 1.0 + prog.c.lpNorm<Eigen::Infinity>();

  // Unscaled iterate (without division by tau).
  const auto unscale = [&](const VectorXd& x, const VectorXd& y, const VectorXd& z, const VectorXd& s, VectorXd& xu,
                           VectorXd& yu, VectorXd& zu, VectorXd& su) {
    xu = eq.D.cwiseProduct(x);
    yu = eq.EA.cwiseProduct(y);
    zu = eq.EG.cwiseProduct(z);
    su = s.cwiseQuotient(eq.EG);
  };
  const auto metrics = [&](const VectorXd& xu, const VectorXd& yu, const VectorXd& zu, const VectorXd& su) {
    Metrics mt{};
    mt.pres = 0.0;
    if (p > 0)
      mt.pres = (prog.A * xu - prog.b).lpNorm<Eigen::Infinity>() / bn;
    if (m > 0)
      mt.pres = std::max(mt.pres, (prog.G * xu + su - prog.h).lpNorm<Eigen::Infinity>() / hn);
    VectorXd rd = prog.c;
    if (p > 0)
      rd += prog.A.transpose() * yu;
    if (m > 0)
      rd += prog.G.transpose() * zu;
    mt.dres = rd.lpNorm<Eigen::Infinity>() / cn;
    mt.pobj = prog.c.dot(xu) + prog.c0;
    mt.dobj = -prog.b.dot(yu) - prog.h.dot(zu) + prog.c0;
    mt.gap = su.dot(zu);
    return mt;
  };
  const auto gap_ok = [&](const Metrics& mt) {
    return std::abs(mt.gap) <= st.tol * std::max(1.0, std::min(std::abs(mt.pobj), std::abs(mt.dobj)));
  };

  KktSystem kkt(A, G, K, st.static_reg);

  // Initial point.
  Scaling W;
  W.wl = VectorXd::Ones(K.l);
  for (std::size_t c2 = 0; c2 < K.dim.size(); ++c2) {
    W.eta.push_back(1.0);
    VectorXd e = VectorXd::Zero(K.dim[c2]);
    e[0] = 1.0;
    W.wbar.push_back(e);
  }
  if (!kkt.factor(W)) {
    sol.status = SolveStatus::NumericalFailure;
    return finish(sol);
  }
  VectorXd rhs(n + p + m);
  rhs << VectorXd::Zero(n), b, h;
  VectorXd v = kkt.solve(rhs, st.refine_steps);
  VectorXd x = v.head(n);
  VectorXd s = -v.tail(m);
  shift_into_cone(K, s);
  rhs << -c, VectorXd::Zero(p), VectorXd::Zero(m);
  v = kkt.solve(rhs, st.refine_steps);
  VectorXd y = v.segment(n, p);
  VectorXd z = v.tail(m);
  shift_into_cone(K, z);
  double tau = 1.0, kap = 1.0;

  // Best feasible-looking iterate for fallback.
  double best_score = kInf;
  ConicSolution best;

  const double D1 = K.degree() + 1.0;
  for (int it = 0; it <= st.max_iter; ++it) {
    sol.iterations = it;
    // Residuals of the embedding.
    VectorXd rx = c * tau;
    if (p > 0)
      rx += A.transpose() * y;
    if (m > 0)
      rx += G.transpose() * z;
    VectorXd ry = b * tau - A * x;
    VectorXd rz = h * tau - G * x - s;
    const double rt = -c.dot(x) - b.dot(y) - h.dot(z) - kap;

    VectorXd xu, yu, zu, su;
    unscale(x, y, z, s, xu, yu, zu, su);
    const Metrics mt = metrics(xu / tau, yu / tau, zu / tau, su / tau);
    if (!std::isfinite(mt.pres) || !std::isfinite(mt.dres) || !std::isfinite(tau)) {
      sol.status = SolveStatus::NumericalFailure;
      break;
    }
    {
      const double score = std::max({mt.pres, mt.dres, std::abs(mt.gap) / std::max(1.0, std::abs(mt.pobj))});
      if (score < best_score) {
        best_score = score;
        best.x = xu / tau;
        best.y = yu / tau;
        best.z = zu / tau;
        best.s = su / tau;
        best.pres = mt.pres;
        best.dres = mt.dres;
        best.gap = mt.gap;
        best.pobj = mt.pobj;
        best.dobj = mt.dobj;
        best.iterations = it;
      }
    }
    if (mt.pres <= st.tol && mt.dres <= st.tol && gap_ok(mt)) {
      sol.x = xu / tau;
      sol.y = yu / tau;
      sol.z = zu / tau;
      sol.s = su / tau;
      sol.pres = mt.pres;
      sol.dres = mt.dres;
      sol.gap = mt.gap;
      sol.pobj = mt.pobj;
      sol.dobj = mt.dobj;
      sol.status = SolveStatus::Optimal;
      return finish(sol);
    }

    if (st.verbose)
      fmt::print(stderr, "{:3d} pobj {:+.6e} dobj {:+.6e} pres {:.1e} dres {:.1e} gap {:.1e} tau {:.1e} kap {:.1e}\n", it,
                 mt.pobj, mt.dobj, mt.pres, mt.dres, mt.gap, tau, kap);
    // Infeasibility certificates.
    const double byhz = prog.b.dot(yu) + prog.h.dot(zu);
    if (byhz < 0.0 && tau < kap) {
      VectorXd ray = VectorXd::Zero(n);
      if (p > 0)
        ray += prog.A.transpose() * yu;
      if (m > 0)
        ray += prog.G.transpose() * zu;
      if (ray.lpNorm<Eigen::Infinity>() / -byhz <= st.tol) {
        sol.status = SolveStatus::PrimalInfeasible;
        sol.y = yu / -byhz;
        sol.z = zu / -byhz;
        sol.x = VectorXd::Zero(n);
        sol.s = VectorXd::Zero(m);
        sol.pres = ray.lpNorm<Eigen::Infinity>() / -byhz;
        return finish(sol);
      }
    }
    const double cx = prog.c.dot(xu);
    if (cx < 0.0 && tau < kap) {
      double r = 0.0;
      if (p > 0)
        r = (prog.A * xu).lpNorm<Eigen::Infinity>();
      if (m > 0)
        r = std::max(r, (prog.G * xu + su).lpNorm<Eigen::Infinity>());
      if (r / -cx <= st.tol) {
        sol.status = SolveStatus::DualInfeasible;
        sol.x = xu / -cx;
        sol.s = su / -cx;
        sol.y = VectorXd::Zero(p);
        sol.z = VectorXd::Zero(m);
        sol.dres = r / -cx;
        return finish(sol);
      }
    }
    if (it == st.max_iter) {
      sol.status = SolveStatus::MaxIter;
      break;
    }

    if (!compute_scaling(K, s, z, W) || !kkt.factor(W)) {
      if (st.verbose)
        fmt::print(stderr, "scaling or factorization failed\n");
      sol.status = SolveStatus::NumericalFailure;
      break;
    }
    const VectorXd& lam = W.lambda;

    rhs << -c, b, h;
    const VectorXd sol1 = kkt.solve(rhs, st.refine_steps);
    const auto x1 = sol1.head(n);
    const auto y1 = sol1.segment(n, p);
    const auto z1 = sol1.tail(m);
    const double den_base = -c.dot(x1) - b.dot(y1) - h.dot(z1);

    struct Dir
    {
      VectorXd dx, dy, dz, ds;
      double dtau, dkap;
    };
    const auto direction = [&](double eta_r, const VectorXd& dsv, double dkv) {
      const VectorXd lds = jordan_div(K, lam, -dsv);
      VectorXd r2(n + p + m);
      r2 << -eta_r * rx, eta_r * ry, eta_r * rz - apply_w(K, W, lds, false);
      const VectorXd sol2 = kkt.solve(r2, st.refine_steps);
      Dir d;
      const auto x2 = sol2.head(n);
      const auto y2 = sol2.segment(n, p);
      const auto z2 = sol2.tail(m);
      d.dtau = (-eta_r * rt + c.dot(x2) + b.dot(y2) + h.dot(z2) - dkv / tau) / (kap / tau + den_base);
      d.dx = x2 + d.dtau * x1;
      d.dy = y2 + d.dtau * y1;
      d.dz = z2 + d.dtau * z1;
      d.ds = apply_w(K, W, lds - apply_w(K, W, d.dz, false), false);
      d.dkap = (-dkv - kap * d.dtau) / tau;
      return d;
    };
    const auto step_len = [&](const Dir& d) {
      double a = std::min(max_step(K, s, d.ds), max_step(K, z, d.dz));
      if (d.dtau < 0.0)
        a = std::min(a, -tau / d.dtau);
      if (d.dkap < 0.0)
        a = std::min(a, -kap / d.dkap);
      return a;
    };

    const double mu = (s.dot(z) + tau * kap) / D1;
    const VectorXd ll = jordan_prod(K, lam, lam);
    const Dir aff = direction(1.0, ll, kap * tau);
    const double a_aff = std::min(1.0, step_len(aff));
    const double sigma = std::clamp(std::pow(1.0 - a_aff, 3.0), 0.0, 1.0);

    VectorXd dsc = ll + jordan_prod(K, apply_w(K, W, aff.ds, true), apply_w(K, W, aff.dz, false));
    add_identity(K, dsc, -sigma * mu);
    const double dkc = kap * tau + aff.dkap * aff.dtau - sigma * mu;
    const Dir cor = direction(1.0 - sigma, dsc, dkc);
    const double alpha = std::min(1.0, 0.99 * step_len(cor));
    if (st.verbose)
      fmt::print(stderr, "    sigma {:.1e} alpha {:.1e} kkt residual {:.1e}\n", sigma, alpha, kkt.residual());
    if (!std::isfinite(alpha) || alpha < 1e-12 || !cor.dx.allFinite()) {
      sol.status = SolveStatus::NumericalFailure;
      break;
    }
    x += alpha * cor.dx;
    y += alpha * cor.dy;
    z += alpha * cor.dz;
    s += alpha * cor.ds;
    tau += alpha * cor.dtau;
    kap += alpha * cor.dkap;
  }

  if (best.x.size() == n) {
    const auto status = sol.status;
    const int iters = sol.iterations;
    sol = best;
    sol.status = status;
    sol.iterations = iters;
    if (sol.pres <= st.reduced_tol && sol.dres <= st.reduced_tol &&
        std::abs(sol.gap) <= st.reduced_gap_tol * std::max(1.0, std::min(std::abs(sol.pobj), std::abs(sol.dobj)))) {
      sol.status = SolveStatus::Optimal;
      sol.inaccurate = true;
    }
  } else {
    sol.x = VectorXd::Zero(n);
    sol.y = VectorXd::Zero(p);
    sol.z = VectorXd::Zero(m);
    sol.s = VectorXd::Zero(m);
  }
  return finish(sol);
}

ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings)
{
  InteriorPointBackend backend;
  ConicSolution sol = backend.solve(prog, settings);
  if (sol.status != SolveStatus::NumericalFailure || !(settings.retry_reg > settings.static_reg))
    return sol;
  SolverSettings st = settings;
  st.static_reg = settings.retry_reg;
  const double first_time = sol.solve_time;
  const int first_iters = sol.iterations;
  sol = backend.solve(prog, st);
  sol.solve_time += first_time;
  sol.iterations += first_iters;
  return sol;
}

ConicSolution solve(const ConicProgram& prog, double tol, int max_iter)
{
  SolverSettings st;
  st.tol = tol;
  st.max_iter = max_iter;
  return solve(prog, st);
}

} // namespace timeopt
