#include "fusemb/validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "fusemb/clustering.hpp"
#include "fusemb/error.hpp"
#include "fusemb/format.hpp"
#include "fusemb/parallel.hpp"
#include "fusemb/rng.hpp"

namespace fusemb {

namespace {

// Maps arbitrary non-negative labels onto 0..k-1 in ascending label order.
struct DenseLabels {
  std::vector<std::size_t> id;
  std::vector<std::size_t> sizes;
  std::size_t k() const { return sizes.size(); }
};

DenseLabels densify(std::span<const int> labels, std::size_t n) {
  if (labels.size() != n)
    fail(ErrorCode::InvalidInput, "expected " + std::to_string(n) + " labels, got " +
                                      std::to_string(labels.size()));
  std::map<int, std::size_t> remap;
  for (int l : labels) {
    if (l < 0) fail(ErrorCode::InvalidInput, "negative cluster label " + std::to_string(l));
    remap.emplace(l, 0);
  }
  std::size_t next = 0;
  for (auto& [label, slot] : remap) slot = next++;
  DenseLabels out;
  out.id.reserve(n);
  out.sizes.assign(remap.size(), 0);
  for (int l : labels) {
    out.id.push_back(remap[l]);
    ++out.sizes[out.id.back()];
  }
  return out;
}

void require_clusters(const DenseLabels& dl, const char* metric) {
  if (dl.k() < 2)
    fail(ErrorCode::UndefinedMetric, std::string(metric) + " needs at least two clusters");
}

Matrix centroids_of(const Matrix& rows, const DenseLabels& dl) {
  Matrix c(dl.k(), rows.cols());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    auto dst = c.row(dl.id[i]);
    const auto src = rows.row(i);
    for (std::size_t j = 0; j < rows.cols(); ++j) dst[j] += src[j];
  }
  for (std::size_t g = 0; g < dl.k(); ++g)
    for (double& v : c.row(g)) v /= static_cast<double>(dl.sizes[g]);
  return c;
}

// Per-point score from the summed distances to every cluster.
double point_score(std::span<const double> sums, const DenseLabels& dl, std::size_t own) {
  if (dl.sizes[own] <= 1) return 0.0;
  const double a = sums[own] / static_cast<double>(dl.sizes[own] - 1);
  double b = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < dl.k(); ++g)
    if (g != own) b = std::min(b, sums[g] / static_cast<double>(dl.sizes[g]));
  const double denom = std::max(a, b);
  return denom > 0.0 ? (b - a) / denom : 0.0;
}

template <class Distance>
double silhouette_impl(std::size_t n, const DenseLabels& dl, Distance&& distance) {
  require_clusters(dl, "silhouette");
  std::vector<double> score(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> sums(dl.k(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[dl.id[j]] += distance(i, j);
    score[i] = point_score(sums, dl, dl.id[i]);
  }, 16);
  double total = 0.0;
  for (double s : score) total += s;
  return total / static_cast<double>(n);
}

}  // namespace

double silhouette(const Matrix& rows, std::span<const int> labels) {
  const auto dl = densify(labels, rows.rows());
  return silhouette_impl(rows.rows(), dl, [&](std::size_t i, std::size_t j) {
    return std::sqrt(squared_distance(rows.row(i), rows.row(j)));
  });
}

double silhouette(const DistanceMatrix& distances, std::span<const int> labels) {
  const auto dl = densify(labels, distances.size());
  return silhouette_impl(distances.size(), dl,
                         [&](std::size_t i, std::size_t j) { return distances(i, j); });
}

double silhouette_sampled(const Matrix& rows, std::span<const int> labels,
                          std::size_t sample_size, std::uint64_t seed) {
  const std::size_t n = rows.rows();
  if (sample_size == 0 || sample_size >= n) return silhouette(rows, labels);
  if (labels.size() != n) fail(ErrorCode::InvalidInput, "label count does not match rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < sample_size; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(sample_size);
  std::ranges::sort(idx);
  Matrix sub(sample_size, rows.cols());
  std::vector<int> sub_labels(sample_size);
  for (std::size_t i = 0; i < sample_size; ++i) {
    std::ranges::copy(rows.row(idx[i]), sub.row(i).begin());
    sub_labels[i] = labels[idx[i]];
  }
  return silhouette(sub, sub_labels);
}

DistanceMatrix::DistanceMatrix(const Matrix& rows)
    : n_(rows.rows()), dist_(n_ < 2 ? 0 : n_ * (n_ - 1) / 2) {
  parallel_for(n_, [&](std::size_t i) {
    double* out = dist_.data() + (i * n_ - i * (i + 1) / 2);
    for (std::size_t j = i + 1; j < n_; ++j)
      out[j - i - 1] = std::sqrt(squared_distance(rows.row(i), rows.row(j)));
  }, 16);
}

double calinski_harabasz(const Matrix& rows, std::span<const int> labels) {
  const std::size_t n = rows.rows();
  const auto dl = densify(labels, n);
  require_clusters(dl, "Calinski-Harabasz");
  const std::size_t k = dl.k();
  if (k >= n)
    fail(ErrorCode::UndefinedMetric, "Calinski-Harabasz needs fewer clusters than points");

  const Matrix centroids = centroids_of(rows, dl);
  std::vector<double> mean(rows.cols(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < rows.cols(); ++j) mean[j] += rows(i, j);
  for (double& m : mean) m /= static_cast<double>(n);

  double between = 0.0;
  for (std::size_t g = 0; g < k; ++g)
    between += static_cast<double>(dl.sizes[g]) * squared_distance(centroids.row(g), mean);
  double within = 0.0;
  for (std::size_t i = 0; i < n; ++i) within += squared_distance(rows.row(i), centroids.row(dl.id[i]));
  if (within == 0.0)
    fail(ErrorCode::UndefinedMetric, "Calinski-Harabasz undefined: zero within-cluster dispersion");
  return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

double davies_bouldin(const Matrix& rows, std::span<const int> labels) {
  const std::size_t n = rows.rows();
  const auto dl = densify(labels, n);
  require_clusters(dl, "Davies-Bouldin");
  const std::size_t k = dl.k();
  const Matrix centroids = centroids_of(rows, dl);

  std::vector<double> scatter(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    scatter[dl.id[i]] += std::sqrt(squared_distance(rows.row(i), centroids.row(dl.id[i])));
  for (std::size_t g = 0; g < k; ++g) scatter[g] /= static_cast<double>(dl.sizes[g]);

  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    double worst = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const double sep = std::sqrt(squared_distance(centroids.row(a), centroids.row(b)));
      if (sep == 0.0)
        fail(ErrorCode::UndefinedMetric, "Davies-Bouldin undefined: coincident centroids");
      worst = std::max(worst, (scatter[a] + scatter[b]) / sep);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

std::string_view to_string(MetricSpace s) noexcept {
  return s == MetricSpace::original ? "original" : "reduced";
}

ReductionEvaluation evaluate_reduction(const Matrix& original, const Matrix& reduced,
                                       std::size_t k, std::uint64_t seed,
                                       std::size_t silhouette_sample) {
  if (original.rows() != reduced.rows())
    fail(ErrorCode::InvalidInput, "original and reduced row counts differ");
  auto clustering = kmeans(reduced, k, seed);
  ReductionEvaluation out;
  out.report.dim = reduced.cols();
  out.report.k = k;
  out.report.space = MetricSpace::original;
  out.report.silhouette =
      silhouette_sampled(original, clustering.labels, silhouette_sample, seed);
  out.report.calinski_harabasz = calinski_harabasz(original, clustering.labels);
  out.report.davies_bouldin = davies_bouldin(original, clustering.labels);
  out.labels = std::move(clustering.labels);
  return out;
}

std::size_t select_dimension(std::span<const ValidationReport> reports) {
  if (reports.empty()) fail(ErrorCode::InvalidInput, "no reports to choose a dimension from");
  std::set<std::size_t> dims;
  for (const auto& r : reports) {
    if (!dims.insert(r.dim).second)
      fail(ErrorCode::InvalidInput, "duplicate dimension " + std::to_string(r.dim));
    if (r.k != reports.front().k)
      fail(ErrorCode::InvalidInput, "reports were produced with different k");
  }

  const std::size_t m = reports.size();
  std::vector<std::size_t> rank_sum(m, 0);
  // Competition ranking: 1 + number of strictly better entries.
  auto add_ranks = [&](auto better) {
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t rank = 1;
      for (std::size_t j = 0; j < m; ++j)
        if (better(reports[j], reports[i])) ++rank;
      rank_sum[i] += rank;
    }
  };
  add_ranks([](const auto& a, const auto& b) { return a.silhouette > b.silhouette; });
  add_ranks([](const auto& a, const auto& b) { return a.calinski_harabasz > b.calinski_harabasz; });
  add_ranks([](const auto& a, const auto& b) { return a.davies_bouldin < b.davies_bouldin; });

  std::size_t best = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (rank_sum[i] < rank_sum[best] ||
        (rank_sum[i] == rank_sum[best] && reports[i].dim < reports[best].dim))
      best = i;
  return reports[best].dim;
}

void write_validation_table(std::ostream& out, std::span<const ValidationReport> reports) {
  out << "Dim.,Silhouette,C-H,D-B\n";
  for (const auto& r : reports)
    out << r.dim << ',' << format_number(r.silhouette) << ',' << format_number(r.calinski_harabasz)
        << ',' << format_number(r.davies_bouldin) << '\n';
}

double info_nce(std::span<const Embedding> queries, std::span<const Embedding> keys,
                double temperature) {
  if (!(temperature > 0.0)) fail(ErrorCode::InvalidInput, "temperature must be positive");
  if (queries.empty() || queries.size() != keys.size())
    fail(ErrorCode::InvalidInput, "InfoNCE needs equal, non-empty query and key lists");
  const std::size_t d = queries.front().dim();
  std::vector<Embedding> q, k;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].dim() != d || keys[i].dim() != d)
      fail(ErrorCode::DimensionMismatch, "InfoNCE inputs mix dimensions");
    q.push_back(l2_normalize(queries[i]));
    k.push_back(l2_normalize(keys[i]));
  }

  const std::size_t n = q.size();
  double total = 0.0;
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
      logits[j] = dot / temperature;
    }
    const double peak = *std::ranges::max_element(logits);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - peak);
    total += (peak + std::log(z)) - logits[i];
  }
  return total / static_cast<double>(n);
}

}  // namespace fusemb
