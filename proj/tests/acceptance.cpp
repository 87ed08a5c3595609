// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fusemb/clustering.hpp"
#include "fusemb/config.hpp"
#include "fusemb/embedding.hpp"
#include "fusemb/interchange.hpp"
#include "fusemb/pipeline.hpp"
#include "fusemb/reduction.hpp"
#include "fusemb/synth.hpp"
#include "fusemb/validation.hpp"
#include "fusemb/vector_store.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fusemb;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.ok = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (out.ok && budget_s > 0 && secs > budget_s) {
    out.ok = false;
    out.detail = "over time budget of " + std::to_string(budget_s) + " s";
  }
  if (!out.ok) ++failures;
  std::printf("%s  %-28s %7.2f s  %s\n", out.ok ? "PASS" : "FAIL", name, secs, out.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- fusion --------------------------------------------------------------

Outcome fusion_exactness() {
  Outcome out;
  std::mt19937_64 gen(1001);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> images(1, 8);
  constexpr std::size_t d = 1024;
  double worst = 0.0, worst_perm = 0.0;
  for (int listing = 0; listing < 1000; ++listing) {
    const auto n = static_cast<std::size_t>(images(gen));
    std::vector<double> t(d);
    for (double& x : t) x = g(gen);
    oracle::Rows imgs(n, std::vector<double>(d));
    for (auto& r : imgs)
      for (double& x : r) x = g(gen);

    ListingRecord rec{"p" + std::to_string(listing), Embedding(t, Modality::text), {}, {}};
    for (const auto& r : imgs) rec.images.emplace_back(r, Modality::image);
    const auto fused = fuse(rec);
    const auto expected = oracle::fuse_extended(t, imgs);
    for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(fused[j] - expected[j]));

    std::shuffle(rec.images.begin(), rec.images.end(), gen);
    const auto permuted = fuse(rec);
    for (std::size_t j = 0; j < d; ++j) worst_perm = std::max(worst_perm, std::abs(permuted[j] - fused[j]));
  }
  out.require(worst <= 1e-6, "max abs error " + fmt("%.3g", worst));
  out.require(worst_perm <= 1e-6, "permutation moved a component by " + fmt("%.3g", worst_perm));
  out.detail = out.ok ? "max err " + fmt("%.2g", worst) + ", perm delta " + fmt("%.2g", worst_perm) : out.detail;
  return out;
}

// --- metrics -------------------------------------------------------------

Outcome metric_oracles() {
  Outcome out;
  std::mt19937_64 gen(2002);
  std::uniform_int_distribution<int> pick_k(2, 6);
  std::uniform_int_distribution<std::size_t> pick_n(12, 200), pick_d(1, 16);
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const int k = pick_k(gen);
    const std::size_t n = std::max<std::size_t>(pick_n(gen), 2 * static_cast<std::size_t>(k) + 1);
    const auto rows = oracle::random_rows(n, pick_d(gen), gen());
    std::uniform_int_distribution<int> lab(0, k - 1);
    std::vector<int> labels(n);
    for (auto& l : labels) l = lab(gen);
    for (int c = 0; c < k; ++c) labels[static_cast<std::size_t>(c)] = c;
    const auto x = testutil::to_matrix(rows);
    worst = std::max({worst, oracle::rel_diff(silhouette(x, labels), oracle::silhouette(rows, labels)),
                      oracle::rel_diff(calinski_harabasz(x, labels), oracle::calinski_harabasz(rows, labels)),
                      oracle::rel_diff(davies_bouldin(x, labels), oracle::davies_bouldin(rows, labels))});
  }
  out.require(worst <= 1e-9, "worst relative disagreement " + fmt("%.3g", worst));

  Matrix hand(4, 1);
  hand(1, 0) = 1;
  hand(2, 0) = 9;
  hand(3, 0) = 10;
  const std::vector<int> two{0, 0, 1, 1};
  const double s = silhouette(hand, two), ch = calinski_harabasz(hand, two), db = davies_bouldin(hand, two);
  // a = 1 for every point; b = 9.5 (outer points) or 8.5 (inner points)
  const double s_exact = 1 - (1 / 9.5 + 1 / 8.5) / 2;
  out.require(std::abs(s - s_exact) <= 1e-15 && std::abs(s - 0.88854) < 1e-5, "hand silhouette " + fmt("%.17g", s));
  out.require(std::abs(ch - 162.0) <= 1e-12, "hand C-H " + fmt("%.17g", ch));
  out.require(std::abs(db - 1.0 / 9.0) <= 1e-15, "hand D-B " + fmt("%.17g", db));
  if (out.ok)
    out.detail = "200 instances, worst rel " + fmt("%.2g", worst) + "; hand " + fmt("%.7f", s) + " / " +
                 fmt("%g", ch) + " / " + fmt("%.4f", db);
  return out;
}

// --- reference sweep -----------------------------------------------------

Outcome dimension_aggregation() {
  Outcome out;
  const std::vector<ValidationReport> table{
      {8, 20, .3726, 672.1, 4.945, MetricSpace::original},
      {16, 20, .3799, 696.5, 4.353, MetricSpace::original},
      {32, 20, .3819, 709.1, 4.043, MetricSpace::original},
      {64, 20, .3810, 709.3, 4.091, MetricSpace::original},
      {128, 20, .3816, 710.2, 4.134, MetricSpace::original},
  };
  const auto chosen = select_dimension(table);
  out.require(chosen == 32, "chose " + std::to_string(chosen));
  out.detail = "chosen dim " + std::to_string(chosen);
  return out;
}

// --- k-means -------------------------------------------------------------

Outcome kmeans_correctness() {
  Outcome out;
  std::size_t runs = 0;
  double worst_fixed = 0.0;
  for (std::uint64_t data_seed = 0; data_seed < 10; ++data_seed) {
    BlobSpec spec;
    spec.blobs = 3 + data_seed % 5;
    spec.per_blob = 40;
    spec.dim = 8;
    spec.radius = 3.0 + static_cast<double>(data_seed);  // from separated to overlapping
    spec.seed = data_seed;
    const auto blobs = make_blobs(spec).points;
    const auto noise = testutil::to_matrix(oracle::random_rows(200, 5, 500 + data_seed));
    for (const Matrix* x : {&blobs, &noise}) {
      for (std::size_t k : {2, 4, 7}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
          for (auto init : {KMeansInit::plus_plus, KMeansInit::random}) {
            const auto r = kmeans(*x, k, seed, {init, 300, 1e-4});
            ++runs;
            for (std::size_t i = 1; i < r.inertia_trace.size(); ++i)
              out.require(r.inertia_trace[i] <= r.inertia_trace[i - 1], "inertia trace increased");
            // one more Lloyd step from the converged centroids
            const auto relabeled = assign(*x, r.centroids);
            const auto moved = oracle::centroids(testutil::to_rows(*x), relabeled);
            for (const auto& [c, v] : moved)
              for (std::size_t j = 0; j < v.size(); ++j)
                worst_fixed = std::max(worst_fixed, std::abs(v[j] - r.centroids(static_cast<std::size_t>(c), j)));
            const auto again = kmeans(*x, k, seed, {init, 300, 1e-4});
            out.require(again.labels == r.labels, "labels differ between identical runs");
          }
        }
      }
    }
  }
  out.require(worst_fixed <= 1e-5, "centroid moved by " + fmt("%.3g", worst_fixed) + " after convergence");

  Matrix hand(4, 1);
  hand(1, 0) = 1;
  hand(2, 0) = 9;
  hand(3, 0) = 10;
  const double best = oracle::exhaustive_kmeans_inertia(testutil::to_rows(hand), 2, nullptr);
  const auto r = kmeans(hand, 2, 0);
  out.require(std::abs(best - 1.0) < 1e-12 && std::abs(r.inertia - best) < 1e-12,
              "hand inertia " + fmt("%g", r.inertia) + " vs optimum " + fmt("%g", best));
  if (out.ok)
    out.detail = std::to_string(runs) + " runs, fixed-point drift " + fmt("%.2g", worst_fixed) +
                 ", hand inertia " + fmt("%g", r.inertia);
  return out;
}

// --- k-selection ---------------------------------------------------------

Outcome k_selection() {
  Outcome out;
  std::ostringstream summary;
  for (std::size_t g : {3, 4, 5, 8}) {
    std::size_t hits = 0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      BlobSpec spec;
      spec.blobs = g;
      spec.per_blob = 50;
      spec.dim = 16;
      spec.radius = 1.0;
      spec.separation = 10.0;
      spec.seed = 1000 * g + trial;
      const auto data = make_blobs(spec);
      SelectKOptions opts;
      opts.runs_per_k = 10;
      const auto rep = select_k(data.points, 2, g + 4, trial, opts);
      if (rep.chosen_k == g) ++hits;
    }
    summary << "G=" << g << ": " << hits << "/20  ";
    out.require(hits >= 19, "G=" + std::to_string(g) + " correct in " + std::to_string(hits) + "/20");
  }
  if (out.ok) out.detail = summary.str();
  return out;
}

// --- PCA -----------------------------------------------------------------

Outcome pca_properties() {
  Outcome out;
  const auto rows = oracle::random_rows(500, 64, 7007);
  const auto x = testutil::to_matrix(rows);
  const auto cov = oracle::covariance(rows);
  double total = 0.0;
  for (std::size_t j = 0; j < 64; ++j) total += cov[j][j];

  double worst_ortho = 0.0, prev_err = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (std::size_t r : {2, 4, 8, 16, 32}) {
    const auto m = pca_fit(x, r);
    for (std::size_t a = 0; a < r; ++a)
      for (std::size_t b = 0; b < r; ++b) {
        double dot = 0.0;
        for (std::size_t j = 0; j < 64; ++j) dot += m.components(a, j) * m.components(b, j);
        worst_ortho = std::max(worst_ortho, std::abs(dot - (a == b ? 1.0 : 0.0)));
      }
    const auto back = pca_inverse_transform(m, pca_transform(m, x));
    double err = 0.0;
    for (std::size_t i = 0; i < 500; ++i) err += squared_distance(x.row(i), back.row(i));
    monotone = monotone && err <= prev_err;
    prev_err = err;
  }
  out.require(worst_ortho <= 1e-5, "orthonormality off by " + fmt("%.3g", worst_ortho));
  out.require(monotone, "reconstruction error increased with r");

  // All 64 components retain the total variance.
  const auto full = pca_fit(x, 64);
  double kept = 0.0;
  for (double v : full.explained_variance) kept += v;
  const double var_rel = oracle::rel_diff(kept, total);
  out.require(var_rel <= 1e-5, "variance conservation off by " + fmt("%.3g", var_rel));

  const auto [values, vectors] = oracle::jacobi_eigen(cov);
  double worst_val = 0.0, worst_vec = 0.0;
  const auto m32 = pca_fit(x, 32);
  for (std::size_t a = 0; a < 32; ++a) {
    worst_val = std::max(worst_val, oracle::rel_diff(m32.explained_variance[a], values[a]));
    double plus = 0.0, minus = 0.0;
    for (std::size_t j = 0; j < 64; ++j) {
      plus = std::max(plus, std::abs(m32.components(a, j) - vectors[a][j]));
      minus = std::max(minus, std::abs(m32.components(a, j) + vectors[a][j]));
    }
    worst_vec = std::max(worst_vec, std::min(plus, minus));
  }
  out.require(worst_val <= 1e-5, "eigenvalue disagreement " + fmt("%.3g", worst_val));
  out.require(worst_vec <= 1e-5, "eigenvector disagreement " + fmt("%.3g", worst_vec));
  if (out.ok)
    out.detail = "ortho " + fmt("%.1g", worst_ortho) + ", variance " + fmt("%.1g", var_rel) + ", oracle vec " +
                 fmt("%.1g", worst_vec);
  return out;
}

// --- cross-space evaluation -----------------------------------------------

Outcome cross_space() {
  Outcome out;
  BlobSpec spec;
  spec.blobs = 5;
  spec.per_blob = 60;
  spec.dim = 24;
  spec.radius = 4.0;
  spec.seed = 8008;
  const auto x = make_blobs(spec).points;

  const auto full = pca_fit(x, 24);
  const auto z = pca_transform(full, x);
  const auto ev = evaluate_reduction(x, z, 5, 3);
  const double ds = oracle::rel_diff(ev.report.silhouette, silhouette(z, ev.labels));
  const double dch = oracle::rel_diff(ev.report.calinski_harabasz, calinski_harabasz(z, ev.labels));
  const double ddb = oracle::rel_diff(ev.report.davies_bouldin, davies_bouldin(z, ev.labels));
  out.require(std::max({ds, dch, ddb}) <= 1e-9, "r=d disagreement " + fmt("%.3g", std::max({ds, dch, ddb})));

  // r < d: persist the labels as text, read them back and rescore.
  const auto part = pca_fit(x, 3);
  const auto ev3 = evaluate_reduction(x, pca_transform(part, x), 5, 3);
  std::stringstream persisted;
  for (int l : ev3.labels) persisted << l << '\n';
  std::vector<int> labels;
  for (int l; persisted >> l;) labels.push_back(l);
  out.require(silhouette(x, labels) == ev3.report.silhouette, "silhouette not reproduced bitwise");
  out.require(calinski_harabasz(x, labels) == ev3.report.calinski_harabasz, "C-H not reproduced bitwise");
  out.require(davies_bouldin(x, labels) == ev3.report.davies_bouldin, "D-B not reproduced bitwise");
  if (out.ok) out.detail = "r=d worst rel " + fmt("%.2g", std::max({ds, dch, ddb})) + "; r<d bitwise";
  return out;
}

// --- retrieval -------------------------------------------------------------

Outcome retrieval() {
  Outcome out;
  const auto rows = oracle::random_rows(1000, 32, 9009);
  std::vector<std::string> ids;
  VectorStore store(32);
  oracle::Rows stored;  // float32-rounded, as held by the store
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back("row-" + std::to_string(i));
    store.append(ids.back(), rows[i]);
    std::vector<double> r(rows[i].size());
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = static_cast<double>(static_cast<float>(rows[i][j]));
    stored.push_back(r);
  }
  const auto queries = oracle::random_rows(50, 32, 9010);
  for (const auto& q : queries) {
    const auto expected = oracle::knn_by_sort(stored, ids, q, 25);
    const auto got = store.knn(q, 25);
    std::vector<std::string> got_ids;
    for (const auto& e : got.entries) got_ids.push_back(e.post_id);
    out.require(got_ids == expected, "id sequence differs from full-sort oracle");
  }
  for (std::size_t i = 0; i < stored.size(); i += 37) {
    const auto self = store.knn(stored[i], 1);
    out.require(self[0].post_id == ids[i] && self[0].rank == 1 && self[0].distance == 0.0,
                "self-query did not return itself at distance 0");
  }

  // Single-modality query (a text vector) against the fused store.
  BlobSpec spec;
  spec.blobs = 6;
  spec.per_blob = 30;
  spec.dim = 64;
  spec.seed = 9011;
  const auto data = make_listings(spec);
  const auto grouped = group_listings(data.records);
  VectorStore fused_store(64);
  for (const auto& l : grouped.listings) fused_store.append(l.post_id, fuse(l).values());
  std::map<std::string, int> truth(data.truth.begin(), data.truth.end());
  for (std::size_t b = 0; b < spec.blobs; ++b) {
    const auto hits = fused_store.knn(data.centers.row(b), 10);
    for (const auto& h : hits.entries)
      out.require(truth.at(h.post_id) == static_cast<int>(b), "blob-center query hit another blob");
  }
  if (out.ok) out.detail = "50 queries exact; self rank 1; 6/6 blob-center queries clean";
  return out;
}

// --- InfoNCE ---------------------------------------------------------------

Outcome info_nce_diagnostic() {
  Outcome out;
  const std::vector<Embedding> one_q{Embedding({0.3, -2.0, 1.0}, Modality::text)};
  const std::vector<Embedding> one_k{Embedding({5.0, 1.0, 0.0}, Modality::image)};
  const double single = info_nce(one_q, one_k, 0.07);
  out.require(std::abs(single) <= 1e-12, "batch-1 loss " + fmt("%.3g", single));

  const std::vector<Embedding> q{Embedding({1, 0}, Modality::text), Embedding({0, 1}, Modality::text)};
  const std::vector<Embedding> k{Embedding({1, 0}, Modality::image), Embedding({0, 1}, Modality::image)};
  const double two = info_nce(q, k, 1.0);
  out.require(std::abs(two - std::log1p(std::exp(-1.0))) <= 1e-9, "two-pair loss " + fmt("%.12g", two));

  // Positives strictly dominate: each query is closest to its own key.
  const auto qa = oracle::random_rows(8, 16, 10010);
  std::vector<Embedding> qs, ks;
  std::mt19937_64 gen(10011);
  std::normal_distribution<double> small(0.0, 0.05);
  for (const auto& r : qa) {
    qs.emplace_back(r, Modality::text);
    auto noisy = r;
    for (double& v : noisy) v += small(gen);
    ks.emplace_back(noisy, Modality::image);
  }
  const double l1 = info_nce(qs, ks, 1.0), l05 = info_nce(qs, ks, 0.5), l01 = info_nce(qs, ks, 0.1);
  out.require(l1 > l05 && l05 > l01, "loss not decreasing in tau: " + fmt("%.6g", l1) + ", " + fmt("%.6g", l05) +
                                         ", " + fmt("%.6g", l01));
  if (out.ok)
    out.detail = "two-pair " + fmt("%.9f", two) + "; tau 1/0.5/0.1 -> " + fmt("%.4f", l1) + "/" + fmt("%.4f", l05) +
                 "/" + fmt("%.4f", l01);
  return out;
}

// --- end to end ------------------------------------------------------------

Outcome end_to_end() {
  Outcome out;
  testutil::TempDir a("accept-a"), b("accept-b");
  BlobSpec spec;
  spec.blobs = 8;
  spec.per_blob = 500;
  spec.dim = 64;
  spec.radius = 3.0;
  spec.seed = 12012;
  auto run = [&](const testutil::TempDir& dir) {
    PipelineConfig c;
    c.store_path = dir / "listings.embd";
    c.dim = 64;
    c.pca_dims = {8, 16, 32, 64};
    c.exact_silhouette = true;
    cmd_synth(spec, dir / "listings.jsonl");
    const auto f = cmd_fuse(c, dir / "listings.jsonl");
    if (f.failure) throw std::runtime_error(f.failure_message);
    cmd_sweep(c);
    cmd_cluster(c);
    cmd_report(c);
  };
  run(a);
  run(b);
  std::size_t compared = 0;
  for (const char* leaf : {"listings.embd.sweep.json", "listings.embd.sweep.csv", "listings.embd.pca.json",
                           "listings.embd.kselect.json", "listings.embd.clustering.json",
                           "listings.embd.labels.csv", "listings.embd.centroids.json", "listings.embd.shares.csv",
                           "listings.embd.projection.csv"}) {
    const auto x = testutil::slurp(a / leaf), y = testutil::slurp(b / leaf);
    out.require(!x.empty(), std::string(leaf) + " missing");
    out.require(x == y, std::string(leaf) + " differs between runs");
    ++compared;
  }
  const auto ks = testutil::slurp(a / "listings.embd.kselect.json");
  const auto pos = ks.find("\"chosen_k\": ");
  if (out.ok)
    out.detail = std::to_string(compared) + " reports identical, n=4000 d=64, chosen_k=" +
                 ks.substr(pos + 12, ks.find_first_of(",\n}", pos + 12) - pos - 12);
  return out;
}

}  // namespace

int main() {
  criterion("fusion-exactness", 5, fusion_exactness);
  criterion("metric-oracles", 30, metric_oracles);
  criterion("dimension-aggregation", 1, dimension_aggregation);
  criterion("kmeans-correctness", 5, kmeans_correctness);
  criterion("k-selection", 120, k_selection);
  criterion("pca", 10, pca_properties);
  criterion("cross-space-evaluation", 0, cross_space);
  criterion("retrieval", 10, retrieval);
  criterion("infonce", 0, info_nce_diagnostic);
  criterion("end-to-end-determinism", 180, end_to_end);
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
