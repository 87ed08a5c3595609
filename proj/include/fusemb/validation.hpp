#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "fusemb/embedding.hpp"
#include "fusemb/matrix.hpp"

namespace fusemb {

// Labels are non-negative cluster ids; they need not be contiguous. Clusters
// are counted as the number of distinct ids present.

// Mean over points of (b - a) / max(a, b). Points in singleton clusters score
// 0. Throws UndefinedMetric with fewer than two clusters.
double silhouette(const Matrix& rows, std::span<const int> labels);

// Silhouette over a seeded uniform subsample of `sample_size` rows (distances
// among sampled rows only). Exact when sample_size == 0 or >= n.
double silhouette_sampled(const Matrix& rows, std::span<const int> labels,
                          std::size_t sample_size, std::uint64_t seed);

// Condensed pairwise Euclidean distances, computed once and reused when the
// same rows are scored under many labelings.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(const Matrix& rows);

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    return dist_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
  }

 private:
  std::size_t n_;
  std::vector<double> dist_;
};

double silhouette(const DistanceMatrix& distances, std::span<const int> labels);

// (B / (k - 1)) / (W / (n - k)). Throws UndefinedMetric when k < 2, k >= n
// or the within-cluster dispersion is zero.
double calinski_harabasz(const Matrix& rows, std::span<const int> labels);

// Mean over clusters of max_{j != i} (S_i + S_j) / M_ij. Throws
// UndefinedMetric with fewer than two clusters or coincident centroids.
double davies_bouldin(const Matrix& rows, std::span<const int> labels);

enum class MetricSpace { original, reduced };
std::string_view to_string(MetricSpace s) noexcept;

struct ValidationReport {
  std::size_t dim = 0;
  std::size_t k = 0;
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  double davies_bouldin = 0.0;
  MetricSpace space = MetricSpace::original;
};

struct ReductionEvaluation {
  ValidationReport report;
  std::vector<int> labels;  // reduced-space k-means labels the indices were scored with
};

// Clusters `reduced` with k-means, then scores the labels against `original`.
// A non-zero silhouette_sample subsamples the silhouette when n exceeds it.
ReductionEvaluation evaluate_reduction(const Matrix& original, const Matrix& reduced,
                                       std::size_t k, std::uint64_t seed,
                                       std::size_t silhouette_sample = 0);

// Rank-sum aggregation with the three indices weighted equally: each index
// ranks the dims (silhouette and C-H higher is better, D-B lower is better,
// equal scores share the better rank), the smallest rank sum wins and ties
// go to the smaller dim. Throws InvalidInput on no reports, duplicate dims
// or mixed k.
std::size_t select_dimension(std::span<const ValidationReport> reports);

// Columns: Dim.,Silhouette,C-H,D-B.
void write_validation_table(std::ostream& out, std::span<const ValidationReport> reports);

// Mean InfoNCE over index-paired queries and keys, with every key acting as a
// negative for the other queries. Inputs are L2-normalized first. Throws
// InvalidInput for temperature <= 0, empty or unequal lists.
double info_nce(std::span<const Embedding> queries, std::span<const Embedding> keys,
                double temperature);

}  // namespace fusemb
