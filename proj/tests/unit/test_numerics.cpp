#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_dec_float.hpp>
#include <gtest/gtest.h>

#include "hovefl/error.hpp"
#include "hovefl/numerics.hpp"
#include "hovefl/rng.hpp"
#include "test_helpers.hpp"

namespace hovefl {
namespace {

using boost::multiprecision::cpp_dec_float_50;

TEST(Dot, HandSum) {
  EXPECT_EQ(dot(Vector{1, 2, 3}, Vector{4, 5, 6}), 32.0);
}

TEST(Dot, ZeroVector) {
  RngStream rng(3, 0);
  const Vector v = gaussian(rng, 17);
  EXPECT_EQ(dot(v, Vector(17)), 0.0);
}

TEST(Dot, DimensionMismatchThrows) {
  try {
    dot(Vector{1, 2}, Vector{1, 2, 3});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Dot, MatchesFiftyDigitResummation) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RngStream rng(seed, 11);
    const Vector a = gaussian(rng, 100);
    const Vector b = gaussian(rng, 100);
    cpp_dec_float_50 exact = 0;
    cpp_dec_float_50 abs_sum = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      const cpp_dec_float_50 term = cpp_dec_float_50(a[i]) * cpp_dec_float_50(b[i]);
      exact += term;
      abs_sum += abs(term);
    }
    const double got = dot(a, b);
    const double err = static_cast<double>(abs(cpp_dec_float_50(got) - exact));
    // Relative to the magnitude of the summands so near-cancelling sums are
    // not penalized for unavoidable rounding.
    EXPECT_LE(err / static_cast<double>(abs_sum), 1e-12) << "seed " << seed;
    if (abs(exact) > abs_sum / 10) {
      EXPECT_LE(err / static_cast<double>(abs(exact)), 1e-12);
    }
  }
}

TEST(Dot, SequentialOrder) {
  // 1e16 + 1 - 1e16 is 0 with left-to-right summation.
  EXPECT_EQ(dot(Vector{1e16, 1, -1e16}, Vector{1, 1, 1}), 0.0);
}

TEST(VectorOps, AxpyAndArithmetic) {
  Vector y{1, 1, 1};
  axpy(2.0, Vector{1, 2, 3}, y);
  EXPECT_EQ(y, (Vector{3, 5, 7}));
  EXPECT_EQ(Vector({1, 2}) + Vector({3, 4}), (Vector{4, 6}));
  EXPECT_EQ(Vector({1, 2}) - Vector({3, 4}), (Vector{-2, -2}));
  EXPECT_EQ(2.0 * Vector({1, -2}), (Vector{2, -4}));
  EXPECT_DOUBLE_EQ(norm(Vector{3, 4}), 5.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(Vector{1, 2}, Vector{1.5, 0}), 2.0);
}

TEST(VectorOps, AllFinite) {
  EXPECT_TRUE(all_finite(Vector{1, 2}));
  EXPECT_FALSE(all_finite(Vector{1, std::numeric_limits<double>::quiet_NaN()}));
  EXPECT_FALSE(all_finite(Vector{std::numeric_limits<double>::infinity()}));
}

TEST(Matrix, MatvecAgainstEigen) {
  RngStream rng(5, 1);
  Matrix m(4, 3);
  Eigen::MatrixXd em(4, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) em(r, c) = m(r, c) = rng.normal();
  }
  const Vector v = gaussian(rng, 3);
  const Eigen::VectorXd ev = em * Eigen::Map<const Eigen::VectorXd>(v.values().data(), 3);
  const Vector got = matvec(m, v);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(got[r], ev[r], 1e-14);
}

TEST(Cholesky, SolvesSpdSystem) {
  RngStream rng(9, 2);
  const std::size_t n = 6;
  Eigen::MatrixXd b(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) b(r, c) = rng.normal();
  }
  const Eigen::MatrixXd spd = b * b.transpose() + Eigen::MatrixXd::Identity(n, n);
  Matrix a(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) a(r, c) = spd(r, c);
  }
  const Vector rhs = gaussian(rng, n);
  const Vector x = cholesky_solve(a, rhs);
  const Eigen::VectorXd expect =
      spd.ldlt().solve(Eigen::Map<const Eigen::VectorXd>(rhs.values().data(), n));
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(x[i], expect[i], 1e-10);
}

TEST(Cholesky, SingularThrows) {
  Matrix a(2, 2, std::vector<double>{1, 1, 1, 1});
  try {
    cholesky_solve(a, Vector{1, 1});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularSystem);
  }
}

TEST(SymmetricEigenvalues, MatchEigen) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RngStream rng(seed, 3);
    const std::size_t n = 7;
    Eigen::MatrixXd e(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c <= r; ++c) e(r, c) = e(c, r) = rng.normal();
    }
    Matrix m(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) m(r, c) = e(r, c);
    }
    const auto got = symmetric_eigenvalues(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e);
    ASSERT_EQ(got.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(got[i], solver.eigenvalues()[i], 1e-10);
  }
}

TEST(FiniteDiff, Quadratic) {
  const Vector g = finite_diff_gradient([](const Vector& x) { return dot(x, x); }, Vector{1, 2},
                                        1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FiniteDiff, ConstantIsZero) {
  const Vector g = finite_diff_gradient([](const Vector&) { return 4.2; }, Vector{3, -1, 8});
  EXPECT_EQ(g, Vector(3));
}

TEST(FiniteDiff, NonFiniteNamesCoordinate) {
  const auto f = [](const Vector& x) {
    return x[1] > 0.5 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  try {
    finite_diff_gradient(f, Vector{0, 0.5});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos) << e.what();
  }
}

TEST(FiniteDiff, LogisticLossMatchesAnalytic) {
  const Dataset ds = generate_classification(30, 4, 3, 1.0, 8);
  const ModelLayout layout = make_layout(ModelKind::kLogistic, ds.task, 4, 3);
  const auto fv = testing::full_view(ds, layout);
  RngStream rng(8, 4);
  for (int p = 0; p < 10; ++p) {
    const ModelParams params{gaussian(rng, layout.dim()), layout};
    const Vector analytic = local_gradient(params, fv.view(ds), 0.0);
    const Vector numeric = finite_diff_gradient(
        [&](const Vector& t) { return local_objective({t, layout}, fv.view(ds), 0.0).total; },
        params.theta);
    EXPECT_LT(testing::relative_error(analytic, numeric), 1e-5);
  }
}

}  // namespace
}  // namespace hovefl
