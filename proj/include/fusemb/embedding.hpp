#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fusemb {

enum class Modality { text, image, audio, fused };

std::string_view to_string(Modality m) noexcept;
std::optional<Modality> parse_modality(std::string_view s) noexcept;

// A finite, fixed-length vector tagged with its modality and owner. The
// components cannot change after construction.
class Embedding {
 public:
  // Throws InvalidInput on an empty vector and DegenerateVector on non-finite
  // components.
  Embedding(std::vector<double> values, Modality modality, std::string source_id = {});

  std::span<const double> values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  Modality modality() const noexcept { return modality_; }
  const std::string& source_id() const noexcept { return source_id_; }

  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
  Modality modality_;
  std::string source_id_;
};

using Metadata = std::map<std::string, std::string>;

// One marketplace post. The text embedding is optional only so permissive
// fusion can represent image-only posts; strict fusion rejects them.
struct ListingRecord {
  std::string post_id;
  std::optional<Embedding> text;
  std::vector<Embedding> images;
  Metadata metadata;

  std::size_t image_count() const noexcept { return images.size(); }

  // Shared dimension of all members. Throws DimensionMismatch if they
  // disagree and MissingModality if the listing holds no embedding at all.
  std::size_t dim() const;
};

enum class FusionMode { strict, permissive };

struct FusionOptions {
  FusionMode mode = FusionMode::strict;
  bool renormalize = false;  // opt-in unit-norm rescale of the fused vector
};

Embedding mean_image_embedding(std::span<const Embedding> images);

// 0.5 * (mean image embedding + text embedding).
Embedding fuse(const ListingRecord& listing, const FusionOptions& options = {});

Embedding l2_normalize(const Embedding& e);

}  // namespace fusemb
