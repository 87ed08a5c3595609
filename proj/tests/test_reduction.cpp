#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fusemb/error.hpp"
#include "fusemb/reduction.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fusemb;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected fusemb::Error";
  return ErrorCode::StateError;
}

double frob_sq(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += squared_distance(a.row(i), b.row(i));
  return s;
}

// Rows with a decaying spectrum so components are well separated.
Matrix anisotropic(std::size_t n, std::size_t d, std::uint64_t seed) {
  auto rows = oracle::random_rows(n, d, seed);
  for (auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) r[j] *= std::pow(0.9, static_cast<double>(j)) * 5.0 + 0.1;
  return testutil::to_matrix(rows);
}

}  // namespace

TEST(Pca, CollinearPoints) {
  Matrix x(3, 2);
  for (std::size_t i = 0; i < 3; ++i) x(i, 0) = x(i, 1) = static_cast<double>(i + 1);
  const auto m = pca_fit(x, 1);
  EXPECT_NEAR(m.components(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.components(0, 1), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.explained_variance[0], 2.0, 1e-12);
  EXPECT_NEAR(m.mean[0], 2.0, 1e-15);
  const auto z = pca_transform(m, x);
  EXPECT_NEAR(z(0, 0), -std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(z(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(z(2, 0), std::sqrt(2.0), 1e-12);
}

TEST(Pca, FullRankIsLossless) {
  const auto x = anisotropic(60, 6, 1);
  const auto m = pca_fit(x, 6);
  const auto back = pca_inverse_transform(m, pca_transform(m, x));
  EXPECT_LT(frob_sq(x, back), 1e-18 * 60 * 6 * 100);
}

TEST(Pca, ComponentsOrthonormalAndSignFixed) {
  const auto x = anisotropic(200, 20, 2);
  const auto m = pca_fit(x, 10);
  for (std::size_t a = 0; a < 10; ++a) {
    std::size_t arg = 0;
    for (std::size_t j = 0; j < 20; ++j) {
      if (std::abs(m.components(a, j)) > std::abs(m.components(a, arg))) arg = j;
    }
    EXPECT_GT(m.components(a, arg), 0.0);
    for (std::size_t b = 0; b < 10; ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 20; ++j) dot += m.components(a, j) * m.components(b, j);
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-10);
    }
    if (a) EXPECT_GE(m.explained_variance[a - 1], m.explained_variance[a]);
  }
}

TEST(Pca, AgreesWithCovarianceEigenOracle) {
  const auto rows = testutil::to_rows(anisotropic(150, 12, 3));
  const auto [values, vectors] = oracle::jacobi_eigen(oracle::covariance(rows));
  const auto m = pca_fit(testutil::to_matrix(rows), 12);
  for (std::size_t a = 0; a < 12; ++a) {
    EXPECT_NEAR(m.explained_variance[a], values[a], 1e-8 * values[0]);
    double dot = 0.0;
    for (std::size_t j = 0; j < 12; ++j) dot += m.components(a, j) * vectors[a][j];
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-6) << "component " << a;
  }
}

TEST(Pca, ReconstructionErrorShrinksWithRank) {
  const auto x = anisotropic(120, 16, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t r : {1, 2, 4, 8, 16}) {
    const auto m = pca_fit(x, r);
    const double err = frob_sq(x, pca_inverse_transform(m, pca_transform(m, x)));
    EXPECT_LE(err, prev * (1 + 1e-12));
    prev = err;
  }
}

TEST(Pca, Deterministic) {
  const auto x = anisotropic(80, 10, 5);
  const auto a = pca_fit(x, 5), b = pca_fit(x, 5);
  EXPECT_EQ(a.components, b.components);
  EXPECT_EQ(a.explained_variance, b.explained_variance);
  const auto sa = pca_fit(x, 5, {40, 9}), sb = pca_fit(x, 5, {40, 9});
  EXPECT_EQ(sa.components, sb.components);
  EXPECT_EQ(sa.fitted_on, 40u);
  EXPECT_EQ(a.fitted_on, 80u);
}

TEST(Pca, Errors) {
  const auto x = anisotropic(10, 4, 6);
  EXPECT_EQ(code_of([&] { pca_fit(x, 0); }), ErrorCode::RankError);
  EXPECT_EQ(code_of([&] { pca_fit(x, 5); }), ErrorCode::RankError);
  EXPECT_EQ(code_of([&] { pca_fit(anisotropic(3, 8, 1), 4); }), ErrorCode::RankError);
  EXPECT_EQ(code_of([&] { pca_fit(Matrix(1, 4), 1); }), ErrorCode::InvalidInput);
  EXPECT_EQ(code_of([&] { pca_fit(Matrix(5, 3, 2.5), 1); }), ErrorCode::DegenerateData);
  const auto m = pca_fit(x, 2);
  EXPECT_EQ(code_of([&] { pca_transform(m, Matrix(2, 3)); }), ErrorCode::DimensionMismatch);
}

TEST(Project2D, CsvExport) {
  const auto x = anisotropic(5, 4, 7);
  const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
  const auto pts = project_2d(x, ids);
  ASSERT_EQ(pts.size(), 5u);
  const auto m = pca_fit(x, 2);
  const auto z = pca_transform(m, x);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(pts[i].x, z(i, 0), 1e-12);
    EXPECT_NEAR(pts[i].y, z(i, 1), 1e-12);
  }
  std::ostringstream out;
  const std::vector<int> labels{0, 1, 0, 1, 1};
  write_projection_csv(out, pts, labels);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "post_id,x,y,label");
  std::size_t count = 0;
  while (std::getline(in, line)) ++count;
  EXPECT_EQ(count, 5u);

  std::ostringstream unlabeled;
  write_projection_csv(unlabeled, pts);
  EXPECT_NE(unlabeled.str().find(",-1\n"), std::string::npos);

  EXPECT_EQ(code_of([&] { project_2d(Matrix(2, 3), std::span(ids).first(2)); }), ErrorCode::DegenerateData);
}
