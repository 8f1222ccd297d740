#pragma once

// Special functions behind the angular Gaussian kernel.
//
//     I_n(r) = int_0^inf z^{n-1} exp(-(z - r)^2 / 2) dz
//
// All values are returned on the log scale.

namespace fab {

// log Phi(x), accurate in the far lower tail.
double log_normal_cdf(double x);

// log I_n(r) through the ratio recurrence h_k = I_k / I_{k-1}. Runs forward
// when it is stable (r >= 0 or |r| sqrt(n) small) and backward from a deep
// starting index otherwise. Throws std::invalid_argument for n < 1 or
// non-finite r.
double log_In(int n, double r);

// (n/2 - 1) log 2 + lgamma(n/2) + sqrt(n) r - r^2 / 4. Requires n >= 2.
double log_In_approx(int n, double r);

// log int_0^inf z^{n-1} exp(-z^2/2 + s z) dz by adaptive Gauss-Kronrod
// quadrature around the mode of the integrand. Independent of the
// recurrence; log_In(n, r) = log_In_quadrature(n, r) - r^2 / 2.
double log_In_quadrature(int n, double s);

}  // namespace fab
