#include "fusemb/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fusemb/error.hpp"
#include "fusemb/parallel.hpp"
#include "fusemb/rng.hpp"
#include "fusemb/validation.hpp"

namespace fusemb {

namespace {

// Beyond this many rows a full condensed distance matrix is not cached.
constexpr std::size_t kMaxCachedDistanceRows = 8000;

double bounding_box_diagonal(const Matrix& rows) {
  double s = 0.0;
  for (std::size_t j = 0; j < rows.cols(); ++j) {
    double lo = rows(0, j), hi = rows(0, j);
    for (std::size_t i = 1; i < rows.rows(); ++i) {
      lo = std::min(lo, rows(i, j));
      hi = std::max(hi, rows(i, j));
    }
    s += (hi - lo) * (hi - lo);
  }
  return std::sqrt(s);
}

void copy_row(const Matrix& from, std::size_t i, Matrix& to, std::size_t c) {
  std::ranges::copy(from.row(i), to.row(c).begin());
}

Matrix init_random(const Matrix& rows, std::size_t k, Rng& rng) {
  const std::size_t n = rows.rows();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Matrix centers(k, rows.cols());
  for (std::size_t c = 0; c < k; ++c) {
    std::swap(idx[c], idx[c + rng.below(n - c)]);
    copy_row(rows, idx[c], centers, c);
  }
  return centers;
}

// Greedy k-means++: each new center is the best of 2 + floor(ln k) candidates
// drawn proportionally to squared distance from the chosen centers.
Matrix init_plus_plus(const Matrix& rows, std::size_t k, Rng& rng) {
  const std::size_t n = rows.rows();
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  Matrix centers(k, rows.cols());
  std::vector<bool> taken(n, false);

  std::size_t first = rng.below(n);
  taken[first] = true;
  copy_row(rows, first, centers, 0);
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(rows.row(i), rows.row(first));

  std::vector<double> cumulative(n), candidate_closest(n), best_closest(n);
  for (std::size_t c = 1; c < k; ++c) {
    double potential = 0.0;
    for (std::size_t i = 0; i < n; ++i) cumulative[i] = (potential += closest[i]);

    std::size_t chosen = n;
    if (potential <= 0.0) {
      // Every point coincides with a center already; take any unused row.
      std::size_t skip = rng.below(n - c);
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && skip-- == 0) {
          chosen = i;
          break;
        }
      for (std::size_t i = 0; i < n; ++i)
        best_closest[i] = std::min(closest[i], squared_distance(rows.row(i), rows.row(chosen)));
    } else {
      double best_potential = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < trials; ++t) {
        const double target = rng.uniform() * potential;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
        std::size_t cand = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), n - 1);
        double pot = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          candidate_closest[i] = std::min(closest[i], squared_distance(rows.row(i), rows.row(cand)));
          pot += candidate_closest[i];
        }
        if (pot < best_potential) {
          best_potential = pot;
          chosen = cand;
          best_closest.swap(candidate_closest);
        }
      }
    }
    taken[chosen] = true;
    copy_row(rows, chosen, centers, c);
    closest.swap(best_closest);
  }
  return centers;
}

// Labels plus the squared distance of each row to its center.
void assign_with_distance(const Matrix& rows, const Matrix& centers, std::vector<int>& labels,
                          std::vector<double>& dist) {
  labels.resize(rows.rows());
  dist.resize(rows.rows());
  parallel_for(rows.rows(), [&](std::size_t i) {
    int best = 0;
    double best_d = squared_distance(rows.row(i), centers.row(0));
    for (std::size_t c = 1; c < centers.rows(); ++c) {
      const double d = squared_distance(rows.row(i), centers.row(c));
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    dist[i] = best_d;
  }, 256);
}

// Moves the row farthest from its center into each empty cluster, taking
// only from clusters that keep at least one member.
void repair_empty(std::vector<int>& labels, std::vector<double>& dist, std::size_t k) {
  std::vector<std::size_t> sizes(k, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t pick = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (sizes[static_cast<std::size_t>(labels[i])] < 2) continue;
      if (pick == labels.size() || dist[i] > dist[pick]) pick = i;
    }
    --sizes[static_cast<std::size_t>(labels[pick])];
    labels[pick] = static_cast<int>(c);
    dist[pick] = 0.0;
    sizes[c] = 1;
  }
}

Matrix means(const Matrix& rows, std::span<const int> labels, std::size_t k) {
  Matrix c(k, rows.cols());
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto g = static_cast<std::size_t>(labels[i]);
    ++sizes[g];
    auto dst = c.row(g);
    const auto src = rows.row(i);
    for (std::size_t j = 0; j < rows.cols(); ++j) dst[j] += src[j];
  }
  for (std::size_t g = 0; g < k; ++g)
    for (double& v : c.row(g)) v /= static_cast<double>(sizes[g]);
  return c;
}

double inertia_of(const Matrix& rows, std::span<const int> labels, const Matrix& centers) {
  double s = 0.0;
  for (std::size_t i = 0; i < rows.rows(); ++i)
    s += squared_distance(rows.row(i), centers.row(static_cast<std::size_t>(labels[i])));
  return s;
}

void canonicalize(ClusteringResult& result) {
  const std::size_t k = result.centroids.rows();
  std::vector<int> remap(k, -1);
  int next = 0;
  for (int l : result.labels)
    if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
  Matrix reordered(k, result.centroids.cols());
  for (std::size_t c = 0; c < k; ++c)
    std::ranges::copy(result.centroids.row(c),
                      reordered.row(static_cast<std::size_t>(remap[c])).begin());
  for (int& l : result.labels) l = remap[static_cast<std::size_t>(l)];
  result.centroids = std::move(reordered);
}

}  // namespace

std::vector<int> assign(const Matrix& rows, const Matrix& centroids) {
  if (centroids.rows() == 0) fail(ErrorCode::InvalidInput, "no centroids to assign to");
  if (rows.cols() != centroids.cols())
    fail(ErrorCode::DimensionMismatch, "rows have dimension " + std::to_string(rows.cols()) +
                                           ", centroids have " + std::to_string(centroids.cols()));
  std::vector<int> labels;
  std::vector<double> dist;
  assign_with_distance(rows, centroids, labels, dist);
  return labels;
}

ClusteringResult kmeans(const Matrix& rows, std::size_t k, std::uint64_t seed,
                        const KMeansOptions& options) {
  const std::size_t n = rows.rows();
  if (k == 0 || k > n)
    fail(ErrorCode::CardinalityError, "k = " + std::to_string(k) + " is not in [1, " +
                                          std::to_string(n) + "]");
  for (double v : rows.data())
    if (!std::isfinite(v)) fail(ErrorCode::InvalidInput, "k-means input has non-finite values");

  Rng rng(seed);
  Matrix centers = options.init == KMeansInit::random ? init_random(rows, k, rng)
                                                      : init_plus_plus(rows, k, rng);
  const double tolerance = options.tolerance * bounding_box_diagonal(rows);

  ClusteringResult result;
  result.seed = seed;
  std::vector<int> labels, next_labels;
  std::vector<double> dist;
  for (std::size_t iter = 1; iter <= std::max<std::size_t>(options.max_iterations, 1); ++iter) {
    assign_with_distance(rows, centers, next_labels, dist);
    repair_empty(next_labels, dist, k);
    Matrix next_centers = means(rows, next_labels, k);
    result.inertia_trace.push_back(inertia_of(rows, next_labels, next_centers));

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      shift = std::max(shift, std::sqrt(squared_distance(centers.row(c), next_centers.row(c))));
    const bool changed = next_labels != labels;
    labels.swap(next_labels);
    centers = std::move(next_centers);
    result.iterations = iter;
    if (!changed || shift <= tolerance) break;
  }

  result.labels = std::move(labels);
  result.centroids = std::move(centers);
  result.inertia = result.inertia_trace.back();
  canonicalize(result);
  return result;
}

const KRuns& KSelectionReport::chosen() const {
  for (const auto& r : per_k)
    if (r.k == chosen_k) return r;
  fail(ErrorCode::StateError, "k-selection report has no entry for its chosen k");
}

KSelectionReport select_k(const Matrix& rows, std::size_t k_min, std::size_t k_max,
                          std::uint64_t base_seed, const SelectKOptions& options) {
  const std::size_t n = rows.rows();
  if (k_min < 2 || k_min > k_max || n == 0 || k_max > n - 1)
    fail(ErrorCode::InvalidInput, "k range [" + std::to_string(k_min) + ", " +
                                      std::to_string(k_max) + "] invalid for " +
                                      std::to_string(n) + " rows");
  if (options.runs_per_k == 0) fail(ErrorCode::InvalidInput, "runs_per_k must be positive");
  const Matrix& scored = options.silhouette_rows ? *options.silhouette_rows : rows;
  if (scored.rows() != n)
    fail(ErrorCode::InvalidInput, "silhouette rows do not match clustered rows");

  KSelectionReport report;
  report.base_seed = base_seed;
  report.runs_per_k = options.runs_per_k;
  report.silhouette_in_original_space = options.silhouette_rows != nullptr;
  const bool sampled = options.silhouette_sample != 0 && n > options.silhouette_sample;
  report.silhouette_sample = sampled ? options.silhouette_sample : 0;

  std::optional<DistanceMatrix> cached;
  if (!sampled && n <= kMaxCachedDistanceRows) cached.emplace(scored);

  const std::size_t ks = k_max - k_min + 1;
  const std::size_t runs = options.runs_per_k;
  std::vector<ClusteringResult> results(ks * runs);
  std::vector<double> scores(ks * runs);
  parallel_for(ks * runs, [&](std::size_t job) {
    const std::size_t k = k_min + job / runs;
    const std::uint64_t seed = base_seed + job % runs;
    results[job] = kmeans(rows, k, seed, options.kmeans);
    const auto& labels = results[job].labels;
    scores[job] = sampled ? silhouette_sampled(scored, labels, options.silhouette_sample, seed)
                  : cached ? silhouette(*cached, labels)
                           : silhouette(scored, labels);
  }, 1);

  double best_mean = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < ks; ++g) {
    KRuns entry;
    entry.k = k_min + g;
    std::size_t best_run = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
      const std::size_t job = g * runs + r;
      entry.seeds.push_back(base_seed + r);
      entry.silhouettes.push_back(scores[job]);
      sum += scores[job];
      if (scores[job] > scores[g * runs + best_run]) best_run = r;
    }
    entry.mean_silhouette = sum / static_cast<double>(runs);
    entry.best_seed = base_seed + best_run;
    entry.best = std::move(results[g * runs + best_run]);
    if (entry.mean_silhouette > best_mean) {
      best_mean = entry.mean_silhouette;
      report.chosen_k = entry.k;
    }
    report.candidate_ks.push_back(entry.k);
    report.per_k.push_back(std::move(entry));
  }
  return report;
}

}  // namespace fusemb
