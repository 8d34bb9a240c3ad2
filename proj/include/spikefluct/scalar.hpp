#pragma once

// Scalar Cauchy transforms and the scalar subordination fixed point.

#include <cmath>
#include <complex>
#include <string>

#include "spikefluct/error.hpp"
#include "spikefluct/linmat.hpp"
#include "spikefluct/measure.hpp"

namespace spikefluct {

/// Cauchy transform of the standard semicircle law on [-2, 2].
/// sqrt(z-2) sqrt(z+2) with principal roots is the branch of sqrt(z^2-4)
/// that behaves like z at infinity, so g ~ 1/z there.
inline cplx semicircle_g(cplx z) {
  if (z.imag() == 0.0 && z.real() > -2.0 && z.real() < 2.0) {
    throw Error(ErrorKind::invalid_input, "semicircle_g: z lies on the support (-2, 2)");
  }
  const cplx root = std::sqrt(z - 2.0) * std::sqrt(z + 2.0);
  return 0.5 * (z - root);
}

/// Cauchy transform of the Marchenko-Pastur law with parameter 1 on [0, 4].
inline cplx mp_g(cplx z) {
  if (z.imag() == 0.0 && z.real() >= 0.0 && z.real() < 4.0) {
    throw Error(ErrorKind::invalid_input, "mp_g: z lies on the support [0, 4)");
  }
  const cplx root = std::sqrt(z) * std::sqrt(z - 4.0);
  return (z - root) / (2.0 * z);
}

/// Cauchy transform of an atomic measure, g(z) = sum w / (z - t).
inline cplx cauchy_transform(const SpectralMeasure& mu, cplx z) {
  return mu.integrate([z](double t) { return 1.0 / (z - t); });
}

struct ScalarSubordination {
  cplx omega1;
  cplx omega2;
  cplx g;  // Cauchy transform of mu boxplus nu at z
  int iterations = 0;
};

/// omega1(z) as the attracting fixed point of
///   w -> F_nu(F_mu(w) - w + z) - (F_mu(w) - w),   F = 1/g.
inline ScalarSubordination scalar_subordination(const SpectralMeasure& mu, const SpectralMeasure& nu, cplx z,
                                                double tol = 1e-13, int max_iter = 100000) {
  if (!(z.imag() > 0.0)) throw Error(ErrorKind::invalid_input, "scalar_subordination: need Im z > 0");
  auto f_mu = [&](cplx w) { return 1.0 / cauchy_transform(mu, w); };
  auto f_nu = [&](cplx w) { return 1.0 / cauchy_transform(nu, w); };
  cplx w = z;
  for (int it = 1; it <= max_iter; ++it) {
    const cplx h = f_mu(w) - w;
    const cplx next = f_nu(h + z) - h;
    const double step = std::abs(next - w);
    w = next;
    if (step < tol) {
      ScalarSubordination out;
      out.omega1 = w;
      out.omega2 = f_mu(w) - w + z;
      out.g = cauchy_transform(mu, w);
      out.iterations = it;
      return out;
    }
  }
  throw Error(ErrorKind::non_convergence, "scalar_subordination: iteration cap reached");
}

}  // namespace spikefluct
