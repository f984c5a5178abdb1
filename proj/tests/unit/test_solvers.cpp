#include <set>

#include <Eigen/Dense>

#include "doctest.h"
#include "rps/operators.hpp"
#include "rps/solvers.hpp"
#include "rps/transforms.hpp"
#include "rps/verification.hpp"
#include "test_util.hpp"

using namespace rps;

namespace {

double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

MeasurementOperator random_walsh_subset(Index side, Index rows, std::uint64_t seed) {
  Rng rng(seed);
  std::set<Index> pick = {0};
  while (static_cast<Index>(pick.size()) < rows) pick.insert(static_cast<Index>(rng.below(side * side)));
  return MeasurementOperator::walsh_indices(side, {pick.begin(), pick.end()});
}

// Every support/sign pattern of the l1 optimality system, kept if consistent.
std::vector<Vector> enumerate_l1_minimisers(const Matrix& A, const Vector& y, double alpha) {
  const Index n = A.cols();
  std::vector<Vector> found;
  std::vector<int> s(static_cast<std::size_t>(n), -1);
  for (;;) {
    std::vector<Index> support;
    for (Index i = 0; i < n; ++i)
      if (s[i] != 0) support.push_back(i);
    Vector x = Vector::Zero(n);
    bool ok = true;
    if (!support.empty()) {
      const Index k = static_cast<Index>(support.size());
      Matrix As(A.rows(), k);
      Vector sg(k);
      for (Index j = 0; j < k; ++j) {
        As.col(j) = A.col(support[j]);
        sg[j] = s[support[j]];
      }
      const Vector xs = (As.transpose() * As).ldlt().solve(As.transpose() * y - alpha * sg);
      for (Index j = 0; j < k; ++j) {
        ok = ok && xs[j] * sg[j] > 0.0;
        x[support[j]] = xs[j];
      }
    }
    if (ok) {
      const Vector corr = A.transpose() * (y - A * x);
      for (Index i = 0; i < n; ++i)
        if (s[i] == 0) ok = ok && std::abs(corr[i]) <= alpha * (1.0 + 1e-12);
    }
    if (ok) found.push_back(x);
    Index i = 0;
    while (i < n && s[i] == 1) s[i++] = -1;
    if (i == n) break;
    ++s[i];
  }
  return found;
}

}  // namespace

TEST_CASE("BPDN: zero data gives the zero image") {
  const auto A = random_walsh_subset(16, 100, 1);
  SolverOptions o;
  o.gamma = 5.0;
  const auto r = solve_analysis_bpdn(A, TransformSpec{TransformKind::DWT_DB8, 2}, Vector::Zero(100), o);
  CHECK(r.solution.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("BPDN with identity operator is soft thresholding") {
  const Vector y = (Vector(8) << 0.9, -0.02, 0.3, -0.7, 0.049, 0.051, -0.25, 0.0).finished();
  const double gamma = 10.0;
  SolverOptions o;
  o.gamma = gamma;
  o.tol = 1e-12;
  const DenseOperator I(Matrix::Identity(8, 8));
  const SparsityTransform W({TransformKind::Identity, 1}, 8, 1);
  const auto r = solve_analysis_bpdn(I, W, y, o);
  for (Index i = 0; i < 8; ++i) CHECK(r.solution[i] == doctest::Approx(soft(y[i], 1.0 / (2.0 * gamma))).epsilon(1e-7));
  // The closed form is no worse than anything nearby.
  Vector closed(8);
  for (Index i = 0; i < 8; ++i) closed[i] = soft(y[i], 1.0 / (2.0 * gamma));
  CHECK(bpdn_objective(I, W, y, gamma, r.solution) <= bpdn_objective(I, W, y, gamma, closed) + 1e-10);
}

TEST_CASE("BPDN recovers a wavelet-sparse image from half the Walsh coefficients") {
  const Index side = 32;
  const SparsityTransform W({TransformKind::DWT_Haar, 3}, side, side);
  Rng rng(11);
  Vector c = Vector::Zero(side * side);
  c[0] = 8.0;
  for (int k = 1; k < 10; ++k) c[1 + static_cast<Index>(rng.below(side * side - 1))] = 2.0 * rng.normal();
  REQUIRE((c.array() != 0.0).count() == 10);
  const Vector x = W.synthesis(c);
  const auto A = random_walsh_subset(side, side * side / 2, 12);
  const Vector y = A.apply(x);
  SolverOptions o;
  o.tol = 1e-10;
  const auto r = solve_analysis_bpdn(A, W, y, o);
  const double err = (r.solution - x).squaredNorm() / x.squaredNorm();
  CHECK(err <= 1e-4);
}

TEST_CASE("Analysis+TV: a huge residual ball returns zero") {
  const auto A = random_walsh_subset(16, 60, 2);
  const Vector y = A.apply(test::random_image(16, 16, 3).data());
  SolverOptions o;
  o.eta = 1e6 * y.squaredNorm();
  const auto r = solve_analysis_tv(A, TransformSpec{TransformKind::DWT_DB8, 2}, y, o);
  CHECK(r.solution.norm() <= 1e-12);
}

TEST_CASE("Analysis+TV: full Walsh sampling pins down a piecewise-constant image") {
  const Index side = 16;
  Image x(side, side, 0.2);
  for (Index r = 4; r < 12; ++r)
    for (Index c = 3; c < 10; ++c) x(r, c) = 0.8;
  const auto A = build_walsh_operator(design_sampling_map(side, side * side, {1.0, 0.0, 0.0}, 1));
  const Vector y = A.apply(x.data());
  SolverOptions o;
  o.tol = 1e-9;
  const auto r = solve_analysis_tv(A, TransformSpec{TransformKind::DWT_DB8, 2}, y, o);
  CHECK((r.solution - x.data()).squaredNorm() / x.data().squaredNorm() <= 1e-6);
}

TEST_CASE("Analysis+TV without the TV term matches BPDN at the same residual") {
  const Index side = 16;
  const SparsityTransform W({TransformKind::DWT_Haar, 2}, side, side);
  const Image truth = test::random_image(side, side, 21);
  const auto A = random_walsh_subset(side, 120, 22);
  const Vector y = A.apply(truth.data());
  for (double gamma : {2.0, 10.0, 50.0}) {
    SolverOptions b;
    b.gamma = gamma;
    b.tol = 1e-10;
    const auto bp = solve_analysis_bpdn(A, W, y, b);
    const double res2 = (y - A.apply(bp.solution)).squaredNorm();
    SolverOptions t;
    t.beta1 = 1.0;
    t.beta2 = 0.0;
    t.eta = res2;
    t.tol = 1e-8;
    const auto tv = solve_analysis_tv(A, W, y, t);
    const double l1_bp = W.analysis(bp.solution).lpNorm<1>();
    const double l1_tv = W.analysis(tv.solution).lpNorm<1>();
    CHECK(std::abs(l1_tv - l1_bp) <= 0.01 * l1_bp);
    CHECK((y - A.apply(tv.solution)).squaredNorm() <= res2 * (1.0 + 1e-3) + 1e-12);
  }
}

TEST_CASE("solver reports are finite and json-serialisable") {
  const auto A = random_walsh_subset(16, 80, 5);
  const Vector y = A.apply(test::random_image(16, 16, 6).data());
  SolverOptions o;
  o.max_iters = 50;
  const auto r = solve_analysis_tv(A, TransformSpec{TransformKind::DWT_DB8, 2}, y, o);
  CHECK(r.solution.allFinite());
  CHECK(r.iterations_used <= 50);
  const auto j = r.to_json();
  CHECK(j.contains("iterations_used"));
  CHECK(j.at("residual_norm").get<double>() == doctest::Approx((y - A.apply(r.solution)).norm()));

  SolverOptions bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SolverOptions{};
  bad.eta = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const auto round = SolverOptions::from_json(o.to_json());
  CHECK(round.max_iters == 50);
  CHECK(round.beta2 == o.beta2);
}

TEST_CASE("reference solver: alpha zero is least squares") {
  Rng rng(3);
  const Matrix A = gaussian_matrix(6, 6, rng);
  const Vector y = test::random_vector(6, 4);
  const auto ref = high_precision_reference_solve(A, Matrix::Identity(6, 6), y, 0.0);
  CHECK(test::rel_diff(ref.x, A.lu().solve(y)) <= 1e-10);
}

TEST_CASE("reference solver: scalar problem") {
  const Matrix A = Matrix::Constant(1, 1, 1.0);
  const Vector y = Vector::Constant(1, 3.0);
  const auto ref = high_precision_reference_solve(A, Matrix::Identity(1, 1), y, 1.0);
  CHECK(ref.x[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ref.subgradient[0] == doctest::Approx(1.0));
  const auto zero = high_precision_reference_solve(A, Matrix::Identity(1, 1), Vector::Constant(1, 0.4), 1.0);
  CHECK(zero.x[0] == 0.0);
}

TEST_CASE("reference solver matches exhaustive sign-pattern enumeration") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const Matrix A = gaussian_matrix(10, 8, rng);
    const Vector y = test::random_vector(10, seed + 100);
    for (double alpha : {0.05, 0.3, 1.0}) {
      const auto brute = enumerate_l1_minimisers(A, y, alpha);
      REQUIRE(brute.size() == 1);
      const auto ref = high_precision_reference_solve(A, Matrix::Identity(8, 8), y, alpha);
      CHECK((ref.x - brute[0]).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK(ref.optimality_residual <= 1e-10);
    }
  }
}

TEST_CASE("reference solver with an orthonormal analysis transform") {
  Rng rng(8);
  const Matrix A = gaussian_matrix(10, 8, rng);
  const Matrix W = dct_matrix_dense(8);
  const Vector y = test::random_vector(10, 9);
  const auto ref = high_precision_reference_solve(A, W, y, 0.2);
  // Synthesis form: z = W x solves the identity-transform problem with A W^T.
  const auto brute = enumerate_l1_minimisers(A * W.transpose(), y, 0.2);
  REQUIRE(brute.size() == 1);
  CHECK((ref.coefficients - brute[0]).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(test::rel_diff(W * ref.x, ref.coefficients) <= 1e-12);
  CHECK_THROWS(high_precision_reference_solve(Matrix::Identity(300, 300), Matrix::Identity(300, 300),
                                              Vector::Zero(300), 0.1));
}

TEST_CASE("cgls returns the least-squares solution") {
  Rng rng(12);
  const Matrix M = gaussian_matrix(30, 12, rng);
  const Vector r = test::random_vector(30, 13);
  const Vector d = cgls(DenseOperator(M), r, 200, 1e-14);
  const Vector expected = M.colPivHouseholderQr().solve(r);
  CHECK(test::rel_diff(d, expected) <= 1e-9);
}
