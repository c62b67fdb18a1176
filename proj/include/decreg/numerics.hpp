#pragma once

#include <cstdint>
#include <functional>

namespace decreg {

// Regularized incomplete beta function I_x(a, b) via Lentz's continued
// fraction, accurate to ~1e-13 for moderate a, b.
double regularized_incomplete_beta(double a, double b, double x);

// Standard normal CDF.
double normal_cdf(double x);

// Integral of f over [a, b] with n-panel composite 16-point Gauss-Legendre.
double gauss_legendre(const std::function<double(double)>& f, double a, double b, int panels = 1);

// Adaptive Simpson quadrature to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-8);

// Integer power by binary exponentiation (exact whenever the result is).
double ipow(double base, int64_t exponent);

}  // namespace decreg
