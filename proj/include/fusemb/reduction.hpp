#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fusemb/matrix.hpp"

namespace fusemb {

// Principal axes of a fitted data set. components is r x d with rows sorted
// by descending explained variance; each row's largest-magnitude entry is
// positive.
struct PcaModel {
  std::vector<double> mean;
  Matrix components;
  std::vector<double> explained_variance;
  std::size_t fitted_on = 0;

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return components.rows(); }
};

struct PcaOptions {
  // Fit on a seeded uniform subsample of this many rows; 0 fits on all rows.
  std::size_t sample = 0;
  std::uint64_t seed = 0;
};

// Throws InvalidInput (n < 2), RankError (r == 0 or r > min(n, d)) or
// DegenerateData (zero total variance).
PcaModel pca_fit(const Matrix& rows, std::size_t r, const PcaOptions& options = {});

// (rows - mean) * components^T. Throws DimensionMismatch.
Matrix pca_transform(const PcaModel& model, const Matrix& rows);

// reduced * components + mean.
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced);

struct Projection2D {
  std::string post_id;
  double x = 0.0;
  double y = 0.0;
};

// First two principal coordinates of every row. Throws DegenerateData for
// fewer than three rows or constant data.
std::vector<Projection2D> project_2d(const Matrix& rows, std::span<const std::string> ids);

// CSV with header post_id,x,y,label; label -1 marks an unclustered row.
void write_projection_csv(std::ostream& out, std::span<const Projection2D> points,
                          std::span<const int> labels = {});

}  // namespace fusemb
