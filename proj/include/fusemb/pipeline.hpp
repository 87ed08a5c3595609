#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fusemb/config.hpp"
#include "fusemb/error.hpp"
#include "fusemb/reduction.hpp"
#include "fusemb/synth.hpp"

namespace fusemb {

// Files written beside the store by the pipeline commands.
struct ArtifactPaths {
  std::filesystem::path store;
  std::filesystem::path sweep_json;
  std::filesystem::path sweep_table;
  std::filesystem::path pca_model;
  std::filesystem::path kselect_json;
  std::filesystem::path clustering_json;
  std::filesystem::path labels_csv;
  std::filesystem::path centroids_json;
  std::filesystem::path shares_csv;
  std::filesystem::path projection_csv;

  explicit ArtifactPaths(const std::filesystem::path& store_path);
};

// Text for stdout plus an optional failure that still produced output (fuse
// with strict-mode gaps). Hard failures throw fusemb::Error instead.
struct CommandOutput {
  std::string text;
  std::optional<ErrorCode> failure;
  std::string failure_message;
};

// Writes <out> (interchange lines) and <out>.truth.csv.
CommandOutput cmd_synth(const BlobSpec& spec, const std::filesystem::path& out);

// Fuses every listing of `input` and appends the rows to the store, creating
// it if needed. Rows already stored bit-identically are skipped; --force
// rebuilds the store from this input alone.
CommandOutput cmd_fuse(const PipelineConfig& config, const std::filesystem::path& input);

// PCA sweep over config.pca_dims with cross-space validation.
CommandOutput cmd_sweep(const PipelineConfig& config);

// k-selection on the chosen (or forced) dimension; persists the winner.
CommandOutput cmd_cluster(const PipelineConfig& config);

// Centroid neighbor lists, cluster shares and the 2D projection export.
CommandOutput cmd_report(const PipelineConfig& config);

struct QueryRequest {
  std::optional<std::filesystem::path> vector_file;  // interchange lines, one query each
  std::optional<std::string> stored_id;
  std::size_t k = 0;      // 0: config.report_neighbors
  bool reduced = false;   // route through the persisted PCA model
};

CommandOutput cmd_query(const PipelineConfig& config, const QueryRequest& request);

// Interchange lines for all rows or the selected ids. Writes to `out` when
// given, otherwise returns the lines as text.
CommandOutput cmd_dump(const PipelineConfig& config, const std::vector<std::string>& ids,
                       const std::optional<std::filesystem::path>& out);

// FNV-1a 64 as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

PcaModel load_pca_model(const std::filesystem::path& path);
void save_pca_model(const PcaModel& model, const std::filesystem::path& path);

}  // namespace fusemb
