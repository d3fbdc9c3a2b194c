#include <timeopt/dc.hpp>

#include <fmt/format.h>

#include <stdexcept>

namespace timeopt {

namespace {

DcPair make_pair(std::vector<AffineExpr> plus, std::vector<AffineExpr> minus, VariablePool& pool,
                 const std::string& name, double scale)
{
  DcPair p;
  for (auto& e : plus)
    p.plus.push_back(e.compressed());
  for (auto& e : minus)
    p.minus.push_back(e.compressed());
  p.pbar = pool.add(name + ".pbar");
  p.qbar = pool.add(name + ".qbar");
  p.scale = scale;
  return p;
}

const char* const kAxis[3] = {"x", "y", "z"};

} // namespace

DcPair split_scalar_product(std::span<const AffineExpr> x, std::span<const AffineExpr> y, VariablePool& pool,
                            const std::string& name)
{
  if (x.size() != y.size())
    throw std::invalid_argument(fmt::format("split_scalar_product: dimension {} vs {}", x.size(), y.size()));
  std::vector<AffineExpr> plus, minus;
  for (std::size_t i = 0; i < x.size(); ++i) {
    plus.push_back(x[i] + y[i]);
    minus.push_back(x[i] - y[i]);
  }
  return make_pair(std::move(plus), std::move(minus), pool, name, 1.0);
}

std::array<DcPair, 3> decompose_cross_product(const Vec3Expr& ell, const Vec3Expr& f, VariablePool& pool,
                                              const std::string& name, double alpha)
{
  const auto L = [&](int i) { return ell[static_cast<std::size_t>(i)] * alpha; };
  const auto F = [&](int i) { return f[static_cast<std::size_t>(i)] * (1.0 / alpha); };
  // (ell x f)_x = -lz fy + ly fz, (ell x f)_y = lz fx - lx fz, (ell x f)_z = -ly fx + lx fy
  const std::array<std::array<AffineExpr, 2>, 3> a = {{{-L(2), L(1)}, {L(2), -L(0)}, {-L(1), L(0)}}};
  const std::array<std::array<AffineExpr, 2>, 3> d = {{{F(1), F(2)}, {F(0), F(2)}, {F(0), F(1)}}};
  std::array<DcPair, 3> out;
  for (std::size_t i = 0; i < 3; ++i)
    out[i] = split_scalar_product(a[i], d[i], pool, fmt::format("{}.{}", name, kAxis[i]));
  return out;
}

std::array<DcPair, 3> decompose_time_bilinear(const Vec3Expr& v, const AffineExpr& dt, VariablePool& pool,
                                              const std::string& name, double sv, double sdt)
{
  std::array<DcPair, 3> out;
  const AffineExpr ds = dt * (1.0 / sdt);
  for (std::size_t i = 0; i < 3; ++i) {
    const AffineExpr vs = v[i] * (1.0 / sv);
    out[i] = make_pair({vs + ds}, {vs - ds}, pool, fmt::format("{}.{}", name, kAxis[i]), sv * sdt);
  }
  return out;
}

double squared_norm(const std::vector<AffineExpr>& e, std::span<const double> x)
{
  double s = 0.0;
  for (const auto& c : e) {
    const double v = c.evaluate(x);
    s += v * v;
  }
  return s;
}

double dc_value(const DcPair& pair, std::span<const double> x)
{
  return pair.scale * 0.25 * (squared_norm(pair.plus, x) - squared_norm(pair.minus, x));
}

double relaxed_value(const DcPair& pair, std::span<const double> x)
{
  return pair.scale * 0.25 * (x[static_cast<std::size_t>(pair.pbar)] - x[static_cast<std::size_t>(pair.qbar)]);
}

AffineExpr relaxed_expr(const DcPair& pair)
{
  return AffineExpr::variable(pair.pbar, 0.25 * pair.scale) + AffineExpr::variable(pair.qbar, -0.25 * pair.scale);
}

AffineExpr linearize_squared_norm(const std::vector<AffineExpr>& e, std::span<const double> x0)
{
  // |e0|^2 + 2 e0^T (e - e0) = 2 e0^T e - |e0|^2
  AffineExpr out;
  for (const auto& c : e) {
    const double v = c.evaluate(x0);
    out += c * (2.0 * v);
    out.constant -= v * v;
  }
  return out.compressed();
}

AffineExpr linearized_product(const DcPair& pair, std::span<const double> x0)
{
  return ((linearize_squared_norm(pair.plus, x0) - linearize_squared_norm(pair.minus, x0)) * (0.25 * pair.scale))
      .compressed();
}

} // namespace timeopt
