#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fusemb/interchange.hpp"
#include "fusemb/matrix.hpp"

namespace fusemb {

// Well-separated spherical blobs. Centers sit pairwise `separation` apart
// (exactly when blobs <= dim); points are uniform in a ball of `radius`.
struct BlobSpec {
  std::size_t blobs = 4;
  std::size_t per_blob = 50;
  std::size_t dim = 64;
  double radius = 1.0;
  double separation = 10.0;
  std::uint64_t seed = 0;
  std::size_t max_images = 3;  // listings get 1..max_images image vectors
};

struct BlobData {
  Matrix points;            // blobs * per_blob rows, blob-major
  std::vector<int> truth;   // generating blob per row
  Matrix centers;           // blobs x dim
};

// Throws InvalidInput on a zero count, non-positive separation or negative
// radius.
BlobData make_blobs(const BlobSpec& spec);

struct SyntheticListings {
  std::vector<InterchangeRecord> records;           // text then images, per listing
  std::vector<std::pair<std::string, int>> truth;   // post_id -> blob
  Matrix centers;
};

// Listings whose text vector is the blob center and whose image vectors are
// perturbed within `radius` of it, so every fused vector lies within
// radius / 2 of its center.
SyntheticListings make_listings(const BlobSpec& spec);

void write_truth_csv(std::ostream& out, const SyntheticListings& data);

}  // namespace fusemb
