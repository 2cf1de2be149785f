#ifndef HYMLAB_TESTS_ORACLES_HPP
#define HYMLAB_TESTS_ORACLES_HPP

// Test-only helpers: random smooth fields and independent reference solutions.

#include "hymlab/bundle.hpp"
#include "hymlab/matfun.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using namespace hymlab;

inline const double pi = std::numbers::pi;

inline Eigen::MatrixXcd random_hermitian(int r, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd m(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) m(i, j) = cplx(g(rng), g(rng));
  return (m + m.adjoint()) * (0.5 * scale);
}

/// Smooth periodic Hermitian matrix field H(x) = sum_m A_m cos(2 pi m.x) + B_m sin(2 pi m.x)
/// over the low modes m in {-1,0,1}^{2n} (plus a couple of second harmonics).
class SmoothHermitian {
 public:
  SmoothHermitian(int axes, int r, double amplitude, std::uint64_t seed) : r_(r) {
    std::mt19937_64 rng(seed);
    const int count = static_cast<int>(std::pow(3, axes));
    for (int c = 1; c < count; ++c) {
      std::vector<int> m(axes);
      int x = c;
      for (int a = 0; a < axes; ++a) {
        m[a] = x % 3 - 1;
        x /= 3;
      }
      modes_.push_back(m);
    }
    std::vector<int> h2(axes, 0);
    h2[0] = 2;
    modes_.push_back(h2);
    const double s = amplitude / std::sqrt(static_cast<double>(modes_.size()));
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      A_.push_back(random_hermitian(r, rng, s));
      B_.push_back(random_hermitian(r, rng, s));
    }
  }

  Eigen::MatrixXcd operator()(const Eigen::VectorXd& x) const {
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(r_, r_);
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      double phase = 0.0;
      for (std::size_t a = 0; a < modes_[i].size(); ++a) phase += modes_[i][a] * x(a);
      phase *= 2 * pi;
      h += A_[i] * std::cos(phase) + B_[i] * std::sin(phase);
    }
    return h;
  }

 private:
  int r_;
  std::vector<std::vector<int>> modes_;
  std::vector<Eigen::MatrixXcd> A_, B_;
};

/// Metric with periodic form exp(H): K = g^* exp(H) g.
inline MetricField random_metric(const BundlePtr& b, double amplitude, std::uint64_t seed) {
  const Torus& t = b->torus();
  SmoothHermitian H(t.num_axes(), b->rank(), amplitude, seed);
  MatrixField K(b->torus_ptr(), b->rank(), b->form_twist());
  for (Eigen::Index p = 0; p < t.num_points(); ++p) {
    const SmallMat g = b->gauge(p);
    const SmallMat E = exp_hermitian(SmallMat(H(t.lattice_point(p))));
    K.set(p, hermitian_part(SmallMat(g.adjoint() * E * g)));
  }
  return MetricField(b, std::move(K));
}

/// Smooth K-Hermitian endomorphism u = C U C^{-1} with U Hermitian periodic.
inline EndoField random_direction(const MetricField& h, double amplitude, std::uint64_t seed) {
  const Torus& t = h.torus();
  SmoothHermitian U(t.num_axes(), h.rank(), amplitude, seed);
  EndoField u(h.matrix().torus_ptr(), h.rank(), h.bundle().endo_twist());
  for (Eigen::Index p = 0; p < t.num_points(); ++p) {
    const SmallMat C = h.orthonormal_frame(p);
    u.set(p, C * SmallMat(U(t.lattice_point(p))) * C.inverse());
  }
  return u;
}

/// Scalar smooth real periodic function with a few modes.
inline ScalarField smooth_scalar(const TorusPtr& t, double amplitude, std::uint64_t seed) {
  SmoothHermitian H(t->num_axes(), 1, amplitude, seed);
  return ScalarField::from_function(t, [&](const Eigen::VectorXd& x) { return cplx(H(x)(0, 0).real(), 0.0); });
}

/// Independent FFT solver for the scalar determinant equation on a square
/// n = 1 torus: find u with (kappa + u_zzbar)/kappa = a0 exp(lambda u) (lambda > 0),
/// or kappa + u_zzbar = kappa f with mean(f) = 1 (lambda = 0, mean(u) = 0).
/// u_zzbar = Laplacian/4 uses the exact spectral symbol -(pi |m|)^2 for a unit square.
class ScalarMongeAmpere {
 public:
  explicit ScalarMongeAmpere(int N) : N_(N) {}

  std::vector<double> symbol() const {
    std::vector<double> s(N_ * N_);
    for (int j = 0; j < N_; ++j)
      for (int i = 0; i < N_; ++i) {
        const int mi = i <= N_ / 2 ? i : i - N_;
        const int mj = j <= N_ / 2 ? j : j - N_;
        s[i + N_ * j] = -pi * pi * (mi * mi + mj * mj);
      }
    return s;
  }

  /// Solve kappa + L u = kappa * a0 * exp(lambda u) by damped Picard
  /// iteration (c - L) u_new = c u - kappa (a0 e^{lambda u} - 1) with c >= lambda*kappa*max(a0 e^{lambda u}).
  Eigen::VectorXd solve(const Eigen::VectorXd& a0, double lambda, double kappa, int iterations = 4000,
                        double tol = 1e-14) const {
    const auto sym = symbol();
    const int P = N_ * N_;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(P);
    Eigen::FFT<double> fft;
    for (int it = 0; it < iterations; ++it) {
      Eigen::VectorXd f(P);
      double fmax = 0.0;
      for (int p = 0; p < P; ++p) {
        f(p) = kappa * (a0(p) * std::exp(lambda * u(p)) - 1.0);
        fmax = std::max(fmax, lambda * kappa * a0(p) * std::exp(lambda * u(p)));
      }
      const double c = 1.2 * fmax + 1e-300;
      Eigen::VectorXd rhs = c * u - f;
      std::vector<cplx> F = transform(rhs, fft, true);
      for (int p = 0; p < P; ++p) {
        const double d = c - sym[p];
        F[p] = d != 0.0 ? F[p] / d : 0.0;
      }
      Eigen::VectorXd next = inverse(F, fft);
      const double change = (next - u).cwiseAbs().maxCoeff();
      u = next;
      if (change < tol) break;
    }
    return u;
  }

  /// Solve kappa + L u = kappa f (mean f = 1) with mean(u) = 0.
  Eigen::VectorXd solve_linear(const Eigen::VectorXd& f, double kappa) const {
    const auto sym = symbol();
    Eigen::FFT<double> fft;
    Eigen::VectorXd rhs = kappa * (f.array() - 1.0).matrix();
    std::vector<cplx> F = transform(rhs, fft, true);
    for (int p = 0; p < N_ * N_; ++p) F[p] = sym[p] != 0.0 ? F[p] / sym[p] : 0.0;
    return inverse(F, fft);
  }

  /// Spectral u_zzbar.
  Eigen::VectorXd ddbar(const Eigen::VectorXd& u) const {
    const auto sym = symbol();
    Eigen::FFT<double> fft;
    std::vector<cplx> F = transform(u, fft, true);
    for (int p = 0; p < N_ * N_; ++p) F[p] *= sym[p];
    return inverse(F, fft);
  }

 private:
  std::vector<cplx> transform(const Eigen::VectorXd& v, Eigen::FFT<double>& fft, bool) const {
    // 2D transform: rows along x (index i fastest), then along y.
    std::vector<cplx> a(v.data(), v.data() + v.size());
    std::vector<cplx> in(N_), out(N_);
    for (int j = 0; j < N_; ++j) {
      for (int i = 0; i < N_; ++i) in[i] = a[i + N_ * j];
      fft.fwd(out, in);
      for (int i = 0; i < N_; ++i) a[i + N_ * j] = out[i];
    }
    for (int i = 0; i < N_; ++i) {
      for (int j = 0; j < N_; ++j) in[j] = a[i + N_ * j];
      fft.fwd(out, in);
      for (int j = 0; j < N_; ++j) a[i + N_ * j] = out[j];
    }
    return a;
  }

  Eigen::VectorXd inverse(std::vector<cplx> a, Eigen::FFT<double>& fft) const {
    std::vector<cplx> in(N_), out(N_);
    for (int i = 0; i < N_; ++i) {
      for (int j = 0; j < N_; ++j) in[j] = a[i + N_ * j];
      fft.inv(out, in);
      for (int j = 0; j < N_; ++j) a[i + N_ * j] = out[j];
    }
    Eigen::VectorXd v(N_ * N_);
    for (int j = 0; j < N_; ++j) {
      for (int i = 0; i < N_; ++i) in[i] = a[i + N_ * j];
      fft.inv(out, in);
      for (int i = 0; i < N_; ++i) v(i + N_ * j) = out[i].real();
    }
    return v;
  }

  int N_;
};

}  // namespace oracle

#endif  // HYMLAB_TESTS_ORACLES_HPP
