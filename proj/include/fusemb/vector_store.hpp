#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fusemb/embedding.hpp"
#include "fusemb/matrix.hpp"

namespace fusemb {

struct Neighbor {
  std::string post_id;
  double distance = 0.0;  // Euclidean
  std::size_t rank = 0;   // 1-based
  std::size_t row = 0;    // index into the searched rows
};

// Sorted by (distance, post_id); ranks run 1..size().
struct NeighborList {
  std::vector<Neighbor> entries;

  std::size_t size() const noexcept { return entries.size(); }
  const Neighbor& operator[](std::size_t i) const { return entries[i]; }
};

// Exact k nearest rows of `rows` to `query`; ties on distance go to the
// smaller id. Throws EmptyStore, DimensionMismatch or InvalidInput (k == 0).
NeighborList exact_knn(const Matrix& rows, std::span<const std::string> ids,
                       std::span<const double> query, std::size_t k);

struct StoreManifest {
  std::string created;             // UTC, ISO-8601
  std::string fusion_config_hash;  // hex FNV-1a of the fusion settings
};

// Fused embeddings as a count x dim float matrix addressed by post_id.
//
// On disk: <path> holds a 20-byte little-endian header
//   "EMBD" | u32 version | u32 dim | u64 count
// followed by count*dim little-endian float32 values, row-major. The sidecar
// <path>.ids is line-delimited JSON: a manifest line, then one
// {"post_id","meta"} line per row in row order.
class VectorStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::size_t kHeaderBytes = 20;

  explicit VectorStore(std::uint32_t dim, StoreManifest manifest = {});

  static VectorStore load(const std::filesystem::path& path);
  // Writes both files through temporaries and renames them into place.
  void save(const std::filesystem::path& path) const;
  static std::filesystem::path sidecar_path(const std::filesystem::path& path);

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const float> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const Metadata& meta(std::size_t i) const { return meta_[i]; }
  std::optional<std::size_t> find(const std::string& post_id) const;

  const StoreManifest& manifest() const noexcept { return manifest_; }
  void set_manifest(StoreManifest m) { manifest_ = std::move(m); }

  // Throws DimensionMismatch, DuplicateId or DegenerateVector (non-finite).
  void append(const std::string& post_id, std::span<const double> values, Metadata meta = {});

  // Appends every fused record read from `in`. Nothing is appended unless the
  // whole stream validates. Returns the number of rows added.
  std::size_t ingest(std::istream& in);

  NeighborList knn(std::span<const double> query, std::size_t k) const;

  // Emits rows (all, or the selected ids in store order) as fused interchange
  // lines with float32-exact numbers. Throws UnknownId.
  void dump(std::ostream& out,
            std::optional<std::span<const std::string>> selector = std::nullopt) const;

  Matrix to_matrix() const;

 private:
  std::uint32_t dim_;
  StoreManifest manifest_;
  std::vector<float> rows_;
  std::vector<std::string> ids_;
  std::vector<Metadata> meta_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace fusemb
