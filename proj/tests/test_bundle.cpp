#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "hymlab/bundle.hpp"
#include "hymlab/matfun.hpp"

#include <unsupported/Eigen/MatrixFunctions>

using namespace hymlab;

namespace {

BundlePtr split_bundle(int r, int d, int N = 16) {
  return Bundle::create(TorusParams::square(1, N), BundleSpec::split(r, d));
}

BundlePtr extension_bundle(int r = 2, int d = 1, int N = 16) {
  return Bundle::create(TorusParams::square(1, N), BundleSpec::extension(r, d));
}

}  // namespace

TEST_CASE("reference metric in the split model is the identity") {
  auto b = split_bundle(2, 1);
  auto h = reference_metric(b);
  CHECK(b->form_twist().periodic());
  for (Eigen::Index p = 0; p < h.matrix().num_points(); ++p)
    CHECK((h.at(p) - SmallMat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("extension reference metric satisfies the twist rule exactly") {
  auto b = extension_bundle();
  const SmallMat N = b->nilpotent();
  const SmallMat A = SmallMat::Identity(2, 2) + N;
  const SmallMat Ainv = SmallMat::Identity(2, 2) - N;
  for (double x : {0.0, 0.25, 0.7}) {
    auto Bx = [&](double s) {
      const SmallMat g = SmallMat::Identity(2, 2) - s * N;
      return SmallMat(g.adjoint() * g);
    };
    CHECK((Bx(x + 1) - Ainv.adjoint() * Bx(x) * Ainv).cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::abs(Bx(x).determinant() - 1.0) < 1e-15);
  }
  auto h = reference_metric(b);
  for (Eigen::Index p = 0; p < h.matrix().num_points(); ++p)
    CHECK(std::abs(h.at(p).determinant() - 1.0) < 1e-14);
  CHECK_THROWS_AS(Bundle::create(TorusParams::square(1, 16),
                                 [] {
                                   auto s = BundleSpec::extension(2, 1);
                                   s.nilpotent(1, 0) = 1.0;
                                   return s;
                                 }()),
                  ConfigError);
}

TEST_CASE("form_to_endo defining identity") {
  auto b = extension_bundle();
  auto h = oracle::random_metric(b, 0.6, 3);
  auto id = form_to_endo(h.matrix(), h);
  MatrixField twice = h.matrix();
  twice *= 2.0;
  auto two = form_to_endo(twice, h);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  MatrixField q(h.matrix().torus_ptr(), 2, b->form_twist());
  for (Eigen::Index p = 0; p < q.num_points(); ++p)
    q.set(p, oracle::random_hermitian(2, rng));
  auto qt = form_to_endo(q, h);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < q.num_points(); ++p) {
    CHECK((id.at(p) - SmallMat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((two.at(p) - 2.0 * SmallMat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-13);
    for (int s = 0; s < 10; ++s) {
      SmallVec v(2), w(2);
      v << cplx(g(rng), g(rng)), cplx(g(rng), g(rng));
      w << cplx(g(rng), g(rng)), cplx(g(rng), g(rng));
      // <a, b>_K = b^* K a
      const cplx lhs = w.dot(h.at(p) * (qt.at(p) * v));
      const cplx rhs = w.dot(q.at(p) * v);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("trace-free split reassembles") {
  auto b = split_bundle(3, 1);
  std::mt19937_64 rng(1);
  EndoField u(b->torus_ptr(), 3);
  for (Eigen::Index p = 0; p < u.num_points(); ++p) u.set(p, oracle::random_hermitian(3, rng));
  auto [tau, circ] = trace_free_split(u);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < u.num_points(); ++p) {
    CHECK(std::abs(circ.at(p).trace()) < 1e-14);
    const SmallMat back = tau[p] * SmallMat::Identity(3, 3) + circ.at(p);
    worst = std::max(worst, (back - u.at(p)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-14);
  auto [t1, c1] = trace_free_split(EndoField::identity(b->torus_ptr(), 3));
  CHECK((t1.values().array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK(c1.sup_norm() == 0.0);
}

TEST_CASE("normalized endomorphism has unit determinant and trace-free logarithm") {
  for (auto b : {split_bundle(2, 1), extension_bundle(), extension_bundle(3, 1)}) {
    auto h0 = reference_metric(b);
    auto id = normalized_endo(h0);
    CHECK((id.data() - EndoField::identity(b->torus_ptr(), b->rank()).data()).cwiseAbs().maxCoeff() < 1e-14);
    MatrixField scaled = h0.matrix();
    scaled *= 3.5;
    auto id2 = normalized_endo(MetricField(b, scaled));
    CHECK((id2.data() - id.data()).cwiseAbs().maxCoeff() < 1e-14);

    auto h = oracle::random_metric(b, 0.8, 11);
    auto hn = normalized_endo(h);
    auto lg = log_normalized_endo(h);
    for (Eigen::Index p = 0; p < hn.num_points(); ++p) {
      CHECK(std::abs(hn.at(p).determinant() - 1.0) < 1e-12);
      CHECK(std::abs(lg.at(p).trace()) < 1e-10);
    }
    CHECK(lg.twist().same_as(b->endo_twist()));
  }
}

TEST_CASE("matrix logarithm and its differential") {
  auto b = split_bundle(2, 1, 8);
  auto I = EndoField::identity(b->torus_ptr(), 2);
  CHECK(log_herm(I).sup_norm() == 0.0);
  std::mt19937_64 rng(9);
  EndoField v(b->torus_ptr(), 2);
  for (Eigen::Index p = 0; p < v.num_points(); ++p) v.set(p, oracle::random_hermitian(2, rng));
  CHECK((dlog_herm(I, v).data() - v.data()).cwiseAbs().maxCoeff() < 1e-15);

  SmallMat d = SmallMat::Zero(2, 2);
  d(0, 0) = std::exp(1.0);
  d(1, 1) = std::exp(2.0);
  const SmallMat L = log_hermitian(d);
  CHECK(std::abs(L(0, 0) - 1.0) < 1e-15);
  CHECK(std::abs(L(1, 1) - 2.0) < 1e-15);

  for (int s = 0; s < 10; ++s) {
    const Eigen::MatrixXcd Q = oracle::random_hermitian(3, rng, 0.4);
    const SmallMat u = exp_hermitian(SmallMat(Q));
    const SmallMat w = oracle::random_hermitian(3, rng);
    const double eps = 1e-5;
    const SmallMat fd = (log_hermitian(SmallMat(u + eps * w)) - log_hermitian(SmallMat(u - eps * w))) / (2 * eps);
    const SmallMat an = dlog_hermitian(u, w);
    CHECK((fd - an).norm() / an.norm() < 1e-7);
    // integral formula int_0^1 ((1-t)I + t u)^{-1} w ((1-t)I + t u)^{-1} dt by Gauss-Legendre
    SmallMat quad = SmallMat::Zero(3, 3);
    const double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                             0.9061798459386640};
    const double weights[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                               0.4786286704993665, 0.2369268850561891};
    for (int seg = 0; seg < 40; ++seg)
      for (int q = 0; q < 5; ++q) {
        const double t = (seg + 0.5 + 0.5 * nodes[q]) / 40.0;
        const SmallMat m = ((1 - t) * SmallMat::Identity(3, 3) + t * u).inverse();
        quad += (weights[q] * 0.5 / 40.0) * (m * w * m);
      }
    CHECK((quad - an).norm() / an.norm() < 1e-10);
  }

  for (double cond : {1e2, 1e6}) {
    SmallMat diag = SmallMat::Zero(3, 3);
    diag(0, 0) = 1.0;
    diag(1, 1) = std::sqrt(cond);
    diag(2, 2) = cond;
    const SmallMat Qr = exp_hermitian(SmallMat(oracle::random_hermitian(3, rng)));
    Eigen::HouseholderQR<SmallMat> qr(Qr);
    const SmallMat U = qr.householderQ();
    const SmallMat m = U * diag * U.adjoint();
    CHECK((exp_hermitian(log_hermitian(m)) - m).norm() / m.norm() < 1e-10);
  }
  SmallMat bad = SmallMat::Identity(2, 2);
  bad(1, 1) = -1.0;
  CHECK_THROWS_AS(log_hermitian(bad), PositivityError);
}

TEST_CASE("Chern numbers") {
  CHECK(chern_numbers(BundleSpec::split(2, 3), 1).c1_top == 6);
  CHECK(chern_numbers(BundleSpec::split(1, 1), 1).c1_top == 1);
  CHECK(chern_numbers(BundleSpec::extension(2, 4), 1).c1_top == 8);
  const auto c = chern_numbers(BundleSpec::split(2, 3), 2);
  CHECK(c.c1_top == 36);
  CHECK(c.per_factor == std::vector<long long>{9, 9});
}

TEST_CASE("exponential metric update equals K exp(u)") {
  auto b = extension_bundle();
  auto h = oracle::random_metric(b, 0.5, 2);
  auto u = oracle::random_direction(h, 0.5, 4);
  auto h2 = h.exp_update(u, 0.3);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < h.matrix().num_points(); ++p) {
    const Eigen::MatrixXcd su = 0.3 * Eigen::MatrixXcd(u.at(p));
    const Eigen::MatrixXcd direct = Eigen::MatrixXcd(h.at(p)) * su.exp();
    worst = std::max(worst, (direct - Eigen::MatrixXcd(h2.at(p))).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
  CHECK(h2.min_eigenvalue() > 0.0);
  auto h3 = h.exp_update(u, 0.0);
  CHECK((h3.matrix().data() - h.matrix().data()).cwiseAbs().maxCoeff() < 1e-13);
}
