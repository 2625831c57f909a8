#pragma once

#include <cstddef>
#include <initializer_list>
#include <utility>
#include <vector>

namespace etcoord {

/// Univariate polynomial c0 + c1 x + c2 x^2 + ... with ascending coefficients.
/// Trailing zero coefficients are dropped so degree() is exact.
template <typename Scalar>
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<Scalar> coefficients) : coeffs_(std::move(coefficients)) { trim(); }
  Polynomial(std::initializer_list<Scalar> coefficients) : coeffs_(coefficients) { trim(); }

  Scalar operator()(Scalar x) const { return horner(coeffs_, x); }

  Scalar derivative(Scalar x) const {
    Scalar acc = 0;
    for (std::size_t k = coeffs_.size(); k-- > 1;) acc = acc * x + static_cast<Scalar>(k) * coeffs_[k];
    return acc;
  }

  Scalar second_derivative(Scalar x) const {
    Scalar acc = 0;
    for (std::size_t k = coeffs_.size(); k-- > 2;) {
      acc = acc * x + static_cast<Scalar>(k * (k - 1)) * coeffs_[k];
    }
    return acc;
  }

  Polynomial differentiated() const {
    std::vector<Scalar> d;
    for (std::size_t k = 1; k < coeffs_.size(); ++k) d.push_back(static_cast<Scalar>(k) * coeffs_[k]);
    return Polynomial(std::move(d));
  }

  /// -1 for the zero polynomial.
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }

  /// Coefficient of x^k, zero beyond the degree.
  Scalar coefficient(std::size_t k) const { return k < coeffs_.size() ? coeffs_[k] : Scalar(0); }

  const std::vector<Scalar>& coefficients() const { return coeffs_; }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;

 private:
  static Scalar horner(const std::vector<Scalar>& c, Scalar x) {
    Scalar acc = 0;
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * x + c[k];
    return acc;
  }

  void trim() {
    while (!coeffs_.empty() && coeffs_.back() == Scalar(0)) coeffs_.pop_back();
  }

  std::vector<Scalar> coeffs_;
};

}  // namespace etcoord
