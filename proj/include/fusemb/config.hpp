#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fusemb/clustering.hpp"
#include "fusemb/embedding.hpp"
#include "fusemb/validation.hpp"

namespace fusemb {

// Experiment settings. Defaults: sweep dims 8..128, k in 2..20 with 10 seeded
// runs each, 10 neighbors per centroid.
//
// Config files hold `key = value` lines; '#' starts a comment. Keys match
// the field names below (seed for base_seed, kmeans_init for init).
struct PipelineConfig {
  std::filesystem::path store_path = "fusemb.embd";
  std::optional<std::size_t> dim;  // new stores default to kDefaultDim
  FusionMode fusion_mode = FusionMode::strict;
  bool renormalize = false;
  std::vector<std::size_t> pca_dims{8, 16, 32, 64, 128};
  std::size_t pca_sample = 0;
  std::size_t sweep_k = 20;
  std::size_t k_min = 2;
  std::size_t k_max = 20;
  std::size_t runs_per_k = 10;
  std::uint64_t base_seed = 0;
  MetricSpace silhouette_space = MetricSpace::reduced;
  bool exact_silhouette = false;
  std::size_t silhouette_sample = 5000;
  std::size_t report_neighbors = 10;
  std::size_t cluster_dim = 0;  // 0: use the dim chosen by the sweep
  KMeansInit kmeans_init = KMeansInit::plus_plus;
  bool force = false;

  static constexpr std::size_t kDefaultDim = 1024;

  // Throws InvalidInput on an unknown key or unparsable value.
  void set(std::string_view key, std::string_view value);
  void load_file(const std::filesystem::path& path);

  // Sorted key=value lines covering every setting that affects results.
  std::string canonical() const;

  // Silhouette subsample size to use, 0 when exact.
  std::size_t effective_silhouette_sample() const {
    return exact_silhouette ? 0 : silhouette_sample;
  }
};

}  // namespace fusemb
