#include "fusemb/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "fusemb/error.hpp"
#include "fusemb/format.hpp"
#include "fusemb/rng.hpp"

namespace fusemb {

namespace {

void validate(const BlobSpec& spec) {
  if (spec.blobs == 0 || spec.per_blob == 0 || spec.dim == 0)
    fail(ErrorCode::InvalidInput, "blob count, points per blob and dim must be positive");
  if (!(spec.separation > 0.0) || !std::isfinite(spec.separation))
    fail(ErrorCode::InvalidInput, "separation must be positive");
  if (!(spec.radius >= 0.0) || !std::isfinite(spec.radius))
    fail(ErrorCode::InvalidInput, "radius must be non-negative");
  if (spec.max_images == 0) fail(ErrorCode::InvalidInput, "max_images must be positive");
}

Matrix place_centers(const BlobSpec& spec, Rng& rng) {
  Matrix centers(spec.blobs, spec.dim);
  if (spec.blobs <= spec.dim) {
    // Signed, permuted axes scaled so every pair is exactly `separation` apart.
    std::vector<std::size_t> axes(spec.dim);
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    const double scale = spec.separation / std::sqrt(2.0);
    for (std::size_t g = 0; g < spec.blobs; ++g) {
      std::swap(axes[g], axes[g + rng.below(spec.dim - g)]);
      centers(g, axes[g]) = (rng.below(2) == 0 ? 1.0 : -1.0) * scale;
    }
    return centers;
  }
  // More blobs than axes: rejection-sample a cube that grows until they fit.
  double half = spec.separation * std::pow(static_cast<double>(spec.blobs), 1.0 / spec.dim);
  std::size_t placed = 0, failures = 0;
  while (placed < spec.blobs) {
    for (std::size_t j = 0; j < spec.dim; ++j) centers(placed, j) = (2.0 * rng.uniform() - 1.0) * half;
    bool ok = true;
    for (std::size_t h = 0; h < placed && ok; ++h)
      ok = squared_distance(centers.row(h), centers.row(placed)) >= spec.separation * spec.separation;
    if (ok) {
      ++placed;
      failures = 0;
    } else if (++failures == 1000) {
      half *= 1.1;
      failures = 0;
    }
  }
  return centers;
}

void point_in_ball(std::span<const double> center, double radius, Rng& rng, std::span<double> out) {
  const std::size_t d = center.size();
  double norm = 0.0;
  do {
    norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = rng.normal();
      norm += out[j] * out[j];
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
  for (std::size_t j = 0; j < d; ++j) out[j] = center[j] + out[j] / norm * r;
}

std::string listing_id(std::size_t blob, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "g%03zu-%05zu", blob, i);
  return buf;
}

}  // namespace

BlobData make_blobs(const BlobSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  BlobData out;
  out.centers = place_centers(spec, rng);
  out.points = Matrix(spec.blobs * spec.per_blob, spec.dim);
  out.truth.reserve(spec.blobs * spec.per_blob);
  for (std::size_t g = 0; g < spec.blobs; ++g)
    for (std::size_t i = 0; i < spec.per_blob; ++i) {
      point_in_ball(out.centers.row(g), spec.radius, rng, out.points.row(out.truth.size()));
      out.truth.push_back(static_cast<int>(g));
    }
  return out;
}

SyntheticListings make_listings(const BlobSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  SyntheticListings out;
  out.centers = place_centers(spec, rng);
  std::vector<double> image(spec.dim);
  for (std::size_t g = 0; g < spec.blobs; ++g) {
    const auto center = out.centers.row(g);
    for (std::size_t i = 0; i < spec.per_blob; ++i) {
      const std::string id = listing_id(g, i);
      const std::size_t n_images = 1 + rng.below(spec.max_images);
      Metadata meta{{"blob", std::to_string(g)},
                    {"caption", "synthetic listing " + std::to_string(i) + " of blob " +
                                    std::to_string(g)}};
      out.records.push_back({id, Modality::text, 0, {center.begin(), center.end()}, meta});
      for (std::size_t m = 0; m < n_images; ++m) {
        point_in_ball(center, spec.radius, rng, image);
        out.records.push_back({id, Modality::image, m + 1, image, {}});
      }
      out.truth.emplace_back(id, static_cast<int>(g));
    }
  }
  return out;
}

void write_truth_csv(std::ostream& out, const SyntheticListings& data) {
  out << "post_id,blob\n";
  for (const auto& [id, blob] : data.truth) out << csv_field(id) << ',' << blob << '\n';
}

}  // namespace fusemb
