#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace timeopt {

/// Affine function of decision variables: sum_i coef_i * x[var_i] + constant.
/// Terms may repeat a variable; consumers that need a canonical form call
/// `compressed()`.
struct AffineExpr
{
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  AffineExpr() = default;
  AffineExpr(double c) : constant(c) {}

  static AffineExpr variable(int index, double coef = 1.0)
  {
    AffineExpr e;
    e.terms.emplace_back(index, coef);
    return e;
  }

  double evaluate(std::span<const double> x) const;

  /// Merges duplicate variables, drops exact zeros, sorts by index.
  AffineExpr compressed() const;

  AffineExpr& operator+=(const AffineExpr& other);
  AffineExpr& operator-=(const AffineExpr& other);
  AffineExpr& operator*=(double s);
};

AffineExpr operator+(AffineExpr a, const AffineExpr& b);
AffineExpr operator-(AffineExpr a, const AffineExpr& b);
AffineExpr operator-(AffineExpr a);
AffineExpr operator*(AffineExpr a, double s);
AffineExpr operator*(double s, AffineExpr a);

/// Sequential registry of named scalar decision variables.
class VariablePool
{
public:
  int add(std::string name)
  {
    names_.push_back(std::move(name));
    return static_cast<int>(names_.size()) - 1;
  }

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }

private:
  std::vector<std::string> names_;
};

} // namespace timeopt
