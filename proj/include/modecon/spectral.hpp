#pragma once

#include "modecon/network.hpp"

namespace modecon {

/// Largest singular value by power iteration on A^T A from a fixed seeded start.
///
/// Stops once the eigen-residual ||A^T A v - s^2 v|| translates into an error
/// below `tol` on s (relative to max(1, s)). Throws NumericalError reporting the
/// last residual if that does not happen within `max_iters`.
double spectral_norm(const Matrix& a, double tol = 1e-12, int max_iters = 200000);

}  // namespace modecon
