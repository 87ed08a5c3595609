#include "fusemb/reduction.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fusemb/error.hpp"
#include "fusemb/format.hpp"
#include "fusemb/rng.hpp"

namespace fusemb {

namespace {

std::vector<std::size_t> sample_rows(std::size_t n, const PcaOptions& options) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (options.sample == 0 || options.sample >= n) return idx;
  Rng rng(options.seed);
  for (std::size_t i = 0; i < options.sample; ++i)
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(options.sample);
  std::ranges::sort(idx);
  return idx;
}

}  // namespace

PcaModel pca_fit(const Matrix& rows, std::size_t r, const PcaOptions& options) {
  const auto picked = sample_rows(rows.rows(), options);
  const std::size_t n = picked.size();
  const std::size_t d = rows.cols();
  if (n < 2) fail(ErrorCode::InvalidInput, "PCA needs at least two rows");
  if (r == 0 || r > std::min(n, d))
    fail(ErrorCode::RankError, "cannot fit " + std::to_string(r) + " components to " +
                                   std::to_string(n) + " x " + std::to_string(d) + " data");

  PcaModel model;
  model.fitted_on = n;
  model.mean.assign(d, 0.0);
  for (std::size_t i : picked)
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += rows(i, j);
  for (double& m : model.mean) m /= static_cast<double>(n);

  Eigen::MatrixXd centered(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows(picked[i], j) - model.mean[j];
  if (centered.squaredNorm() == 0.0)
    fail(ErrorCode::DegenerateData, "data has zero variance");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const auto& v = svd.matrixV();

  model.components = Matrix(r, d);
  model.explained_variance.resize(r);
  for (std::size_t c = 0; c < r; ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    std::size_t peak = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(v(static_cast<Eigen::Index>(j), col)) >
          std::abs(v(static_cast<Eigen::Index>(peak), col)))
        peak = j;
    const double sign = v(static_cast<Eigen::Index>(peak), col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j)
      model.components(c, j) = sign * v(static_cast<Eigen::Index>(j), col);
    model.explained_variance[c] = sv(col) * sv(col) / static_cast<double>(n - 1);
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& rows) {
  const std::size_t d = model.input_dim();
  if (rows.cols() != d)
    fail(ErrorCode::DimensionMismatch, "rows have dimension " + std::to_string(rows.cols()) +
                                           ", model expects " + std::to_string(d));
  const std::size_t r = model.output_dim();
  Matrix out(rows.rows(), r);
  std::vector<double> centered(d);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = rows(i, j) - model.mean[j];
    for (std::size_t c = 0; c < r; ++c) {
      const auto axis = model.components.row(c);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += centered[j] * axis[j];
      out(i, c) = s;
    }
  }
  return out;
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced) {
  const std::size_t r = model.output_dim();
  if (reduced.cols() != r)
    fail(ErrorCode::DimensionMismatch, "reduced rows have dimension " +
                                           std::to_string(reduced.cols()) + ", model has " +
                                           std::to_string(r));
  const std::size_t d = model.input_dim();
  Matrix out(reduced.rows(), d);
  for (std::size_t i = 0; i < reduced.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out(i, j) = model.mean[j];
    for (std::size_t c = 0; c < r; ++c) {
      const double w = reduced(i, c);
      const auto axis = model.components.row(c);
      for (std::size_t j = 0; j < d; ++j) out(i, j) += w * axis[j];
    }
  }
  return out;
}

std::vector<Projection2D> project_2d(const Matrix& rows, std::span<const std::string> ids) {
  if (rows.rows() < 3) fail(ErrorCode::DegenerateData, "2D projection needs at least three rows");
  if (ids.size() != rows.rows()) fail(ErrorCode::InvalidInput, "id count does not match rows");
  const auto model = pca_fit(rows, 2);
  const auto coords = pca_transform(model, rows);
  std::vector<Projection2D> out;
  out.reserve(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) out.push_back({ids[i], coords(i, 0), coords(i, 1)});
  return out;
}

void write_projection_csv(std::ostream& out, std::span<const Projection2D> points,
                          std::span<const int> labels) {
  if (!labels.empty() && labels.size() != points.size())
    fail(ErrorCode::InvalidInput, "label count does not match projected rows");
  out << "post_id,x,y,label\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << csv_field(points[i].post_id) << ',' << format_number(points[i].x) << ','
        << format_number(points[i].y) << ',' << (labels.empty() ? -1 : labels[i]) << '\n';
  }
}

}  // namespace fusemb
