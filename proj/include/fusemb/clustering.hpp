#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fusemb/matrix.hpp"

namespace fusemb {

enum class KMeansInit { plus_plus, random };

struct KMeansOptions {
  KMeansInit init = KMeansInit::plus_plus;
  std::size_t max_iterations = 300;
  // Stop once no centroid moves more than tolerance * data diameter.
  double tolerance = 1e-4;
};

struct ClusteringResult {
  std::vector<int> labels;  // renumbered by first member index
  Matrix centroids;         // k x r; each row is the mean of its members
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  std::vector<double> inertia_trace;  // one entry per Lloyd update, non-increasing

  std::size_t k() const noexcept { return centroids.rows(); }
};

// Lloyd's algorithm with k-means++ (or uniform) seeding. Deterministic in
// (rows, k, seed, options). Throws CardinalityError for k == 0 or k > n.
ClusteringResult kmeans(const Matrix& rows, std::size_t k, std::uint64_t seed,
                        const KMeansOptions& options = {});

// Nearest centroid per row; ties go to the lowest cluster id.
std::vector<int> assign(const Matrix& rows, const Matrix& centroids);

struct KRuns {
  std::size_t k = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> silhouettes;  // one per run, same order as seeds
  double mean_silhouette = 0.0;
  std::uint64_t best_seed = 0;  // highest silhouette; ties to the earlier run
  ClusteringResult best;
};

struct KSelectionReport {
  std::vector<std::size_t> candidate_ks;
  std::vector<KRuns> per_k;
  std::size_t chosen_k = 0;
  std::uint64_t base_seed = 0;
  std::size_t runs_per_k = 0;
  bool silhouette_in_original_space = false;
  std::size_t silhouette_sample = 0;  // 0 = exact

  const KRuns& chosen() const;
};

struct SelectKOptions {
  std::size_t runs_per_k = 10;
  KMeansOptions kmeans;
  // Score silhouettes on these rows instead of the clustered ones (same row
  // order); used for original-space k-selection.
  const Matrix* silhouette_rows = nullptr;
  // Subsample silhouettes to this many rows when n exceeds it; 0 = exact.
  std::size_t silhouette_sample = 0;
};

// For each k in [k_min, k_max], runs k-means with seeds base_seed ..
// base_seed + runs - 1 and averages the silhouettes. Chooses the k with the
// highest average; ties to the smallest k. Throws InvalidInput unless
// 2 <= k_min <= k_max <= n - 1.
KSelectionReport select_k(const Matrix& rows, std::size_t k_min, std::size_t k_max,
                          std::uint64_t base_seed, const SelectKOptions& options = {});

}  // namespace fusemb
