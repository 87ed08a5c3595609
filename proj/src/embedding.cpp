#include "fusemb/embedding.hpp"

#include <cmath>

#include "fusemb/error.hpp"

namespace fusemb {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingModality: return "MissingModality";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyStore: return "EmptyStore";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::RankError: return "RankError";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::CardinalityError: return "CardinalityError";
    case ErrorCode::UndefinedMetric: return "UndefinedMetric";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::StateError: return "StateError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(Modality m) noexcept {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::audio: return "audio";
    case Modality::fused: return "fused";
  }
  return "unknown";
}

std::optional<Modality> parse_modality(std::string_view s) noexcept {
  if (s == "text") return Modality::text;
  if (s == "image") return Modality::image;
  if (s == "audio") return Modality::audio;
  if (s == "fused") return Modality::fused;
  return std::nullopt;
}

Embedding::Embedding(std::vector<double> values, Modality modality, std::string source_id)
    : values_(std::move(values)), modality_(modality), source_id_(std::move(source_id)) {
  if (values_.empty()) fail(ErrorCode::InvalidInput, "embedding has zero dimension");
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!std::isfinite(values_[i]))
      fail(ErrorCode::DegenerateVector,
           "non-finite component " + std::to_string(i) + " in embedding '" + source_id_ + "'");
}

std::size_t ListingRecord::dim() const {
  std::size_t d = 0;
  auto check = [&](const Embedding& e) {
    if (d == 0) d = e.dim();
    else if (e.dim() != d)
      fail(ErrorCode::DimensionMismatch, "listing '" + post_id + "' mixes dimensions " +
                                             std::to_string(d) + " and " + std::to_string(e.dim()));
  };
  if (text) check(*text);
  for (const auto& img : images) check(img);
  if (d == 0) fail(ErrorCode::MissingModality, "listing '" + post_id + "' has no embeddings");
  return d;
}

namespace {

// Pairwise sum of images[lo..hi) component j, in list order.
long double pairwise_sum(std::span<const Embedding> images, std::size_t lo, std::size_t hi,
                         std::size_t j) {
  if (hi - lo <= 8) {
    long double s = 0.0L;
    for (std::size_t i = lo; i < hi; ++i) s += images[i][j];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(images, lo, mid, j) + pairwise_sum(images, mid, hi, j);
}

std::vector<double> mean_components(std::span<const Embedding> images) {
  const std::size_t d = images.front().dim();
  std::vector<double> out(d);
  const long double n = static_cast<long double>(images.size());
  for (std::size_t j = 0; j < d; ++j)
    out[j] = static_cast<double>(pairwise_sum(images, 0, images.size(), j) / n);
  return out;
}

Embedding finish(std::vector<double> v, const std::string& id, bool renormalize) {
  Embedding fused(std::move(v), Modality::fused, id);
  return renormalize ? l2_normalize(fused) : fused;
}

}  // namespace

Embedding mean_image_embedding(std::span<const Embedding> images) {
  if (images.empty()) fail(ErrorCode::MissingModality, "no image embeddings to average");
  const std::size_t d = images.front().dim();
  for (const auto& img : images) {
    if (img.dim() != d)
      fail(ErrorCode::DimensionMismatch, "image embeddings mix dimensions " + std::to_string(d) +
                                             " and " + std::to_string(img.dim()));
    if (img.modality() != Modality::image)
      fail(ErrorCode::InvalidInput, "mean_image_embedding given a " +
                                        std::string(to_string(img.modality())) + " embedding");
  }
  return Embedding(mean_components(images), Modality::image, images.front().source_id());
}

Embedding fuse(const ListingRecord& listing, const FusionOptions& options) {
  const std::size_t d = listing.dim();
  if (listing.text && listing.text->modality() != Modality::text)
    fail(ErrorCode::InvalidInput, "listing '" + listing.post_id + "' text slot holds a " +
                                      std::string(to_string(listing.text->modality())) +
                                      " embedding");

  const bool has_text = listing.text.has_value();
  const bool has_images = !listing.images.empty();
  if (!has_text || !has_images) {
    if (options.mode == FusionMode::strict || (!has_text && !has_images))
      fail(ErrorCode::MissingModality,
           "listing '" + listing.post_id + "' lacks " + (has_text ? "images" : "text"));
    // Permissive passthrough: the single present modality, unscaled.
    if (has_text) {
      const auto t = listing.text->values();
      return finish({t.begin(), t.end()}, listing.post_id, options.renormalize);
    }
    const auto mean = mean_image_embedding(listing.images);
    return finish({mean.values().begin(), mean.values().end()}, listing.post_id,
                  options.renormalize);
  }

  const auto mean = mean_image_embedding(listing.images);
  const auto text = listing.text->values();
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = 0.5 * (mean[j] + text[j]);
  return finish(std::move(out), listing.post_id, options.renormalize);
}

Embedding l2_normalize(const Embedding& e) {
  long double ss = 0.0L;
  for (double v : e.values()) ss += static_cast<long double>(v) * v;
  if (ss == 0.0L) fail(ErrorCode::DegenerateVector, "cannot normalize a zero vector");
  const long double norm = std::sqrt(ss);
  std::vector<double> out(e.dim());
  for (std::size_t i = 0; i < e.dim(); ++i) out[i] = static_cast<double>(e[i] / norm);
  return Embedding(std::move(out), e.modality(), e.source_id());
}

}  // namespace fusemb
