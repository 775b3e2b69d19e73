#include "modecon/spectral.hpp"

#include "modecon/error.hpp"
#include "modecon/rng.hpp"

#include <algorithm>
#include <cmath>

namespace modecon {

double spectral_norm(const Matrix& a, double tol, int max_iters) {
  if (a.size() == 0) throw DimensionError("spectral norm of an empty matrix");
  if (!a.allFinite()) throw NumericalError("spectral norm of a matrix with non-finite entries");
  const Matrix gram = a.transpose() * a;
  Rng rng(0x5eedULL + static_cast<std::uint64_t>(a.rows()) * 131 + static_cast<std::uint64_t>(a.cols()));
  Vector v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  v.normalize();

  double residual = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector w = gram * v;
    double lambda = v.dot(w);
    if (lambda <= 0.0) {
      if (w.norm() == 0.0) return 0.0;  // v in the null space; restart from the image
      v = w.normalized();
      continue;
    }
    residual = (w - lambda * v).norm();
    double sigma = std::sqrt(lambda);
    // |d sigma| ~ |d lambda| / (2 sigma); Bauer-Fike bounds |d lambda| by the residual.
    if (residual / (2.0 * sigma) <= tol * std::max(1.0, sigma)) return sigma;
    v = w / w.norm();
  }
  throw NumericalError("power iteration did not converge; residual " + std::to_string(residual));
}

}  // namespace modecon
