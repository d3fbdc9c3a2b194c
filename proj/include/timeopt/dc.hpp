#pragma once

#include <timeopt/expr.hpp>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace timeopt {

/// x^T y = scale * 1/4 * (|plus|^2 - |minus|^2), with pbar >= |plus|^2 and
/// qbar >= |minus|^2 as auxiliary variables.
struct DcPair
{
  std::vector<AffineExpr> plus;
  std::vector<AffineExpr> minus;
  int pbar = -1;
  int qbar = -1;
  double scale = 1.0;

  int dim() const { return static_cast<int>(plus.size()); }
};

using Vec3Expr = std::array<AffineExpr, 3>;

/// Splits x^T y. Throws std::invalid_argument on dimension mismatch.
DcPair split_scalar_product(std::span<const AffineExpr> x, std::span<const AffineExpr> y, VariablePool& pool,
                            const std::string& name);

/// Component i of ell x f as a scalar product of 2-vectors. `alpha` rescales
/// the pair to (alpha*ell, f/alpha); the product is unchanged.
std::array<DcPair, 3> decompose_cross_product(const Vec3Expr& ell, const Vec3Expr& f, VariablePool& pool,
                                              const std::string& name, double alpha = 1.0);

/// Component i of v * dt, split as p = v_i/sv + dt/sdt, q = v_i/sv - dt/sdt,
/// scale = sv * sdt.
std::array<DcPair, 3> decompose_time_bilinear(const Vec3Expr& v, const AffineExpr& dt, VariablePool& pool,
                                              const std::string& name, double sv = 1.0, double sdt = 1.0);

double squared_norm(const std::vector<AffineExpr>& e, std::span<const double> x);

/// Exact bilinear value from the affine parts.
double dc_value(const DcPair& pair, std::span<const double> x);

/// Value implied by the auxiliaries: scale/4 * (pbar - qbar).
double relaxed_value(const DcPair& pair, std::span<const double> x);
AffineExpr relaxed_expr(const DcPair& pair);

/// First-order expansion of |e|^2 around the point x0.
AffineExpr linearize_squared_norm(const std::vector<AffineExpr>& e, std::span<const double> x0);

/// First-order expansion of the bilinear product around x0.
AffineExpr linearized_product(const DcPair& pair, std::span<const double> x0);

} // namespace timeopt
