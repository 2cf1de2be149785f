#ifndef HYMLAB_KRYLOV_HPP
#define HYMLAB_KRYLOV_HPP

// Restarted GMRES with right preconditioning, matrix-free.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

namespace hymlab {

using LinearMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct GmresOptions {
  int restart = 40;
  int max_iterations = 400;
  double relative_tolerance = 1e-6;
};

struct GmresResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 1.0;
  bool converged = false;
};

/// Solves A x = b with x = M y, starting from zero. `precond` may be empty.
inline GmresResult gmres(const LinearMap& A, const Eigen::VectorXd& b, const LinearMap& precond,
                         const GmresOptions& opts) {
  GmresResult out;
  const Eigen::Index n = b.size();
  out.x = Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    out.relative_residual = 0.0;
    return out;
  }
  const int m = opts.restart;
  auto M = [&](const Eigen::VectorXd& v) { return precond ? precond(v) : v; };

  Eigen::VectorXd r = b;
  double beta = bnorm;
  while (out.iterations < opts.max_iterations) {
    std::vector<Eigen::VectorXd> V;
    V.reserve(m + 1);
    V.push_back(r / beta);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
    Eigen::VectorXd cs = Eigen::VectorXd::Zero(m), sn = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m + 1);
    g(0) = beta;
    int k = 0;
    for (; k < m && out.iterations < opts.max_iterations; ++k) {
      ++out.iterations;
      Eigen::VectorXd w = A(M(V[k]));
      for (int i = 0; i <= k; ++i) {
        H(i, k) = w.dot(V[i]);
        w -= H(i, k) * V[i];
      }
      // one reorthogonalization pass keeps the basis orthonormal at tight tolerances
      for (int i = 0; i <= k; ++i) {
        const double c = w.dot(V[i]);
        H(i, k) += c;
        w -= c * V[i];
      }
      H(k + 1, k) = w.norm();
      for (int i = 0; i < k; ++i) {
        const double tmp = cs(i) * H(i, k) + sn(i) * H(i + 1, k);
        H(i + 1, k) = -sn(i) * H(i, k) + cs(i) * H(i + 1, k);
        H(i, k) = tmp;
      }
      const double denom = std::hypot(H(k, k), H(k + 1, k));
      cs(k) = denom == 0.0 ? 1.0 : H(k, k) / denom;
      sn(k) = denom == 0.0 ? 0.0 : H(k + 1, k) / denom;
      const double hk1 = H(k + 1, k);
      H(k, k) = cs(k) * H(k, k) + sn(k) * hk1;
      H(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      out.relative_residual = std::abs(g(k + 1)) / bnorm;
      const bool breakdown = hk1 <= 1e-14 * beta;
      if (!breakdown) V.push_back(w / hk1);
      if (out.relative_residual <= opts.relative_tolerance || breakdown) {
        ++k;
        break;
      }
    }
    const Eigen::VectorXd y =
        H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    Eigen::VectorXd update = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < k; ++i) update += y(i) * V[i];
    out.x += M(update);
    if (out.relative_residual <= opts.relative_tolerance) break;
    r = b - A(out.x);
    beta = r.norm();
    out.relative_residual = beta / bnorm;
    if (out.relative_residual <= opts.relative_tolerance) break;
  }
  out.converged = out.relative_residual <= opts.relative_tolerance;
  return out;
}

}  // namespace hymlab

#endif  // HYMLAB_KRYLOV_HPP
