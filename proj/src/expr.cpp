#include <timeopt/expr.hpp>

#include <algorithm>

namespace timeopt {

double AffineExpr::evaluate(std::span<const double> x) const
{
  double v = constant;
  for (const auto& [index, coef] : terms)
    v += coef * x[static_cast<std::size_t>(index)];
  return v;
}

AffineExpr AffineExpr::compressed() const
{
  AffineExpr out;
  out.constant = constant;
  auto sorted = terms;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [index, coef] : sorted) {
    if (!out.terms.empty() && out.terms.back().first == index)
      out.terms.back().second += coef;
    else
      out.terms.emplace_back(index, coef);
  }
  std::erase_if(out.terms, [](const auto& t) { return t.second == 0.0; });
  return out;
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& other)
{
  terms.insert(terms.end(), other.terms.begin(), other.terms.end());
  constant += other.constant;
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& other)
{
  for (const auto& [index, coef] : other.terms)
    terms.emplace_back(index, -coef);
  constant -= other.constant;
  return *this;
}

AffineExpr& AffineExpr::operator*=(double s)
{
  for (auto& t : terms)
    t.second *= s;
  constant *= s;
  return *this;
}

AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
AffineExpr operator-(AffineExpr a) { return a *= -1.0; }
AffineExpr operator*(AffineExpr a, double s) { return a *= s; }
AffineExpr operator*(double s, AffineExpr a) { return a *= s; }

} // namespace timeopt
