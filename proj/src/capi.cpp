#include "fusemb/fusemb.h"

#include <fstream>
#include <new>
#include <string>

#include "fusemb/clustering.hpp"
#include "fusemb/config.hpp"
#include "fusemb/embedding.hpp"
#include "fusemb/error.hpp"
#include "fusemb/pipeline.hpp"
#include "fusemb/validation.hpp"
#include "fusemb/vector_store.hpp"

struct fusemb_text {
  std::string data;
};

struct fusemb_config {
  fusemb::PipelineConfig config;
};

struct fusemb_store {
  fusemb::VectorStore store;
};

namespace {

thread_local std::string last_error;

fusemb_status to_status(fusemb::ErrorCode code) {
  using fusemb::ErrorCode;
  switch (code) {
    case ErrorCode::MissingModality: return FUSEMB_ERR_MISSING_MODALITY;
    case ErrorCode::DimensionMismatch: return FUSEMB_ERR_DIMENSION_MISMATCH;
    case ErrorCode::DegenerateVector: return FUSEMB_ERR_DEGENERATE_VECTOR;
    case ErrorCode::DuplicateId: return FUSEMB_ERR_DUPLICATE_ID;
    case ErrorCode::ParseError: return FUSEMB_ERR_PARSE;
    case ErrorCode::EmptyStore: return FUSEMB_ERR_EMPTY_STORE;
    case ErrorCode::UnknownId: return FUSEMB_ERR_UNKNOWN_ID;
    case ErrorCode::RankError: return FUSEMB_ERR_RANK;
    case ErrorCode::DegenerateData: return FUSEMB_ERR_DEGENERATE_DATA;
    case ErrorCode::CardinalityError: return FUSEMB_ERR_CARDINALITY;
    case ErrorCode::UndefinedMetric: return FUSEMB_ERR_UNDEFINED_METRIC;
    case ErrorCode::InvalidInput: return FUSEMB_ERR_INVALID_INPUT;
    case ErrorCode::StateError: return FUSEMB_ERR_STATE;
    case ErrorCode::IoError: return FUSEMB_ERR_IO;
  }
  return FUSEMB_ERR_INTERNAL;
}

fusemb_status set_error(fusemb_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

// Runs body, translating exceptions into status codes.
template <class Body>
fusemb_status guarded(Body&& body) noexcept {
  try {
    last_error.clear();
    return body();
  } catch (const fusemb::Error& e) {
    return set_error(to_status(e.code()), std::string(fusemb::to_string(e.code())) + ": " + e.what());
  } catch (const std::bad_alloc&) {
    return set_error(FUSEMB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(FUSEMB_ERR_INTERNAL, std::string("internal error: ") + e.what());
  } catch (...) {
    return set_error(FUSEMB_ERR_INTERNAL, "internal error");
  }
}

fusemb_status require(bool ok, const char* what) {
  if (ok) return FUSEMB_OK;
  return set_error(FUSEMB_ERR_INVALID_INPUT, std::string("InvalidInput: ") + what);
}

// Hands back the command text and reports a soft failure when present.
fusemb_status deliver(fusemb::CommandOutput result, fusemb_text** out) {
  if (out) *out = new fusemb_text{std::move(result.text)};
  if (result.failure)
    return set_error(to_status(*result.failure),
                     std::string(fusemb::to_string(*result.failure)) + ": " + result.failure_message);
  return FUSEMB_OK;
}

fusemb::Matrix to_matrix(const double* rows, size_t n, size_t d) {
  fusemb::Matrix m(n, d);
  for (size_t i = 0; i < n * d; ++i) m.data()[i] = rows[i];
  return m;
}

template <class Metric>
fusemb_status metric_call(const double* rows, size_t n, size_t d, const int32_t* labels,
                          double* out, Metric&& metric) {
  if (auto s = require(rows && labels && out && n > 0 && d > 0, "null or empty metric input"))
    return s;
  return guarded([&] {
    const auto m = to_matrix(rows, n, d);
    const std::vector<int> l(labels, labels + n);
    *out = metric(m, l);
    return FUSEMB_OK;
  });
}

}  // namespace

extern "C" {

const char* fusemb_last_error(void) { return last_error.c_str(); }

const char* fusemb_status_name(fusemb_status status) {
  switch (status) {
    case FUSEMB_OK: return "OK";
    case FUSEMB_ERR_MISSING_MODALITY: return "MissingModality";
    case FUSEMB_ERR_DIMENSION_MISMATCH: return "DimensionMismatch";
    case FUSEMB_ERR_DEGENERATE_VECTOR: return "DegenerateVector";
    case FUSEMB_ERR_DUPLICATE_ID: return "DuplicateId";
    case FUSEMB_ERR_PARSE: return "ParseError";
    case FUSEMB_ERR_EMPTY_STORE: return "EmptyStore";
    case FUSEMB_ERR_UNKNOWN_ID: return "UnknownId";
    case FUSEMB_ERR_RANK: return "RankError";
    case FUSEMB_ERR_DEGENERATE_DATA: return "DegenerateData";
    case FUSEMB_ERR_CARDINALITY: return "CardinalityError";
    case FUSEMB_ERR_UNDEFINED_METRIC: return "UndefinedMetric";
    case FUSEMB_ERR_INVALID_INPUT: return "InvalidInput";
    case FUSEMB_ERR_STATE: return "StateError";
    case FUSEMB_ERR_IO: return "IoError";
    case FUSEMB_ERR_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* fusemb_version(void) { return "1.0.0"; }

const char* fusemb_text_data(const fusemb_text* text) { return text ? text->data.c_str() : ""; }
size_t fusemb_text_size(const fusemb_text* text) { return text ? text->data.size() : 0; }
void fusemb_text_destroy(fusemb_text* text) { delete text; }

fusemb_status fusemb_config_create(fusemb_config** out) {
  if (auto s = require(out != nullptr, "null output handle")) return s;
  return guarded([&] {
    *out = new fusemb_config{};
    return FUSEMB_OK;
  });
}

void fusemb_config_destroy(fusemb_config* config) { delete config; }

fusemb_status fusemb_config_load_file(fusemb_config* config, const char* path) {
  if (auto s = require(config && path, "null config or path")) return s;
  return guarded([&] {
    config->config.load_file(path);
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_config_set(fusemb_config* config, const char* key, const char* value) {
  if (auto s = require(config && key && value, "null config, key or value")) return s;
  return guarded([&] {
    config->config.set(key, value);
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_config_describe(const fusemb_config* config, fusemb_text** out) {
  if (auto s = require(config && out, "null config or output")) return s;
  return guarded([&] {
    *out = new fusemb_text{"store=" + config->config.store_path.string() + "\n" +
                           config->config.canonical()};
    return FUSEMB_OK;
  });
}

void fusemb_synth_params_default(fusemb_synth_params* params) {
  if (!params) return;
  const fusemb::BlobSpec spec;
  *params = {spec.blobs,      spec.per_blob, spec.dim,       spec.radius,
             spec.separation, spec.seed,     spec.max_images};
}

fusemb_status fusemb_cmd_synth(const fusemb_synth_params* params, const char* out_path,
                               fusemb_text** out) {
  if (out) *out = nullptr;
  if (auto s = require(params && out_path, "null parameters or output path")) return s;
  return guarded([&] {
    const fusemb::BlobSpec spec{params->blobs,      params->per_blob, params->dim,
                                params->radius,     params->separation, params->seed,
                                params->max_images};
    return deliver(fusemb::cmd_synth(spec, out_path), out);
  });
}

fusemb_status fusemb_cmd_fuse(const fusemb_config* config, const char* input_path,
                              fusemb_text** out) {
  if (out) *out = nullptr;
  if (auto s = require(config && input_path, "null config or input path")) return s;
  return guarded([&] { return deliver(fusemb::cmd_fuse(config->config, input_path), out); });
}

fusemb_status fusemb_cmd_sweep(const fusemb_config* config, fusemb_text** out) {
  if (out) *out = nullptr;
  if (auto s = require(config != nullptr, "null config")) return s;
  return guarded([&] { return deliver(fusemb::cmd_sweep(config->config), out); });
}

fusemb_status fusemb_cmd_cluster(const fusemb_config* config, fusemb_text** out) {
  if (out) *out = nullptr;
  if (auto s = require(config != nullptr, "null config")) return s;
  return guarded([&] { return deliver(fusemb::cmd_cluster(config->config), out); });
}

fusemb_status fusemb_cmd_report(const fusemb_config* config, fusemb_text** out) {
  if (out) *out = nullptr;
  if (auto s = require(config != nullptr, "null config")) return s;
  return guarded([&] { return deliver(fusemb::cmd_report(config->config), out); });
}

fusemb_status fusemb_cmd_query(const fusemb_config* config, const char* vector_file,
                               const char* stored_id, size_t k, int reduced, fusemb_text** out) {
  if (out) *out = nullptr;
  if (auto s = require(config != nullptr, "null config")) return s;
  return guarded([&] {
    fusemb::QueryRequest request;
    if (vector_file) request.vector_file = vector_file;
    if (stored_id) request.stored_id = stored_id;
    request.k = k;
    request.reduced = reduced != 0;
    return deliver(fusemb::cmd_query(config->config, request), out);
  });
}

fusemb_status fusemb_cmd_dump(const fusemb_config* config, const char* const* ids, size_t n_ids,
                              const char* out_path, fusemb_text** out) {
  if (out) *out = nullptr;
  if (auto s = require(config && (ids || n_ids == 0), "null config or ids")) return s;
  return guarded([&] {
    std::vector<std::string> selected(ids, ids + n_ids);
    std::optional<std::filesystem::path> path;
    if (out_path) path = out_path;
    return deliver(fusemb::cmd_dump(config->config, selected, path), out);
  });
}

fusemb_status fusemb_store_create(uint32_t dim, fusemb_store** out) {
  if (auto s = require(out != nullptr, "null output handle")) return s;
  return guarded([&] {
    *out = new fusemb_store{fusemb::VectorStore(dim)};
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_store_open(const char* path, fusemb_store** out) {
  if (auto s = require(path && out, "null path or output handle")) return s;
  return guarded([&] {
    *out = new fusemb_store{fusemb::VectorStore::load(path)};
    return FUSEMB_OK;
  });
}

void fusemb_store_destroy(fusemb_store* store) { delete store; }

fusemb_status fusemb_store_save(const fusemb_store* store, const char* path) {
  if (auto s = require(store && path, "null store or path")) return s;
  return guarded([&] {
    store->store.save(path);
    return FUSEMB_OK;
  });
}

uint32_t fusemb_store_dim(const fusemb_store* store) { return store ? store->store.dim() : 0; }
size_t fusemb_store_count(const fusemb_store* store) { return store ? store->store.count() : 0; }

const char* fusemb_store_id(const fusemb_store* store, size_t row) {
  if (!store || row >= store->store.count()) return nullptr;
  return store->store.id(row).c_str();
}

fusemb_status fusemb_store_row(const fusemb_store* store, size_t row, float* out, size_t dim) {
  if (auto s = require(store && out, "null store or output")) return s;
  if (row >= store->store.count())
    return set_error(FUSEMB_ERR_UNKNOWN_ID, "UnknownId: row out of range");
  if (dim != store->store.dim())
    return set_error(FUSEMB_ERR_DIMENSION_MISMATCH, "DimensionMismatch: buffer size differs from dim");
  const auto r = store->store.row(row);
  std::copy(r.begin(), r.end(), out);
  return FUSEMB_OK;
}

fusemb_status fusemb_store_append(fusemb_store* store, const char* post_id, const double* values,
                                  size_t dim) {
  if (auto s = require(store && post_id && values, "null store, id or values")) return s;
  return guarded([&] {
    store->store.append(post_id, std::span<const double>(values, dim));
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_store_ingest_file(fusemb_store* store, const char* path, size_t* added) {
  if (auto s = require(store && path, "null store or path")) return s;
  return guarded([&] {
    std::ifstream in(path);
    if (!in) throw fusemb::Error(fusemb::ErrorCode::IoError, std::string("cannot open ") + path);
    const auto n = store->store.ingest(in);
    if (added) *added = n;
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_store_knn(const fusemb_store* store, const double* query, size_t dim, size_t k,
                               fusemb_neighbor* out, size_t cap, size_t* n_out) {
  if (auto s = require(store && query && (out || cap == 0), "null store, query or output")) return s;
  return guarded([&] {
    const auto list = store->store.knn(std::span<const double>(query, dim), k);
    const size_t n = std::min(cap, list.size());
    for (size_t i = 0; i < n; ++i) out[i] = {list[i].row, list[i].distance, list[i].rank};
    if (n_out) *n_out = n;
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_fuse(const double* text, const double* images, size_t n_images, size_t dim,
                          int permissive, double* out) {
  if (auto s = require(out && dim > 0 && (images || n_images == 0), "null output or images"))
    return s;
  return guarded([&] {
    fusemb::ListingRecord listing;
    listing.post_id = "capi";
    if (text)
      listing.text.emplace(std::vector<double>(text, text + dim), fusemb::Modality::text, "capi");
    for (size_t i = 0; i < n_images; ++i)
      listing.images.emplace_back(std::vector<double>(images + i * dim, images + (i + 1) * dim),
                                  fusemb::Modality::image, "capi");
    const auto fused = fusemb::fuse(
        listing, {permissive ? fusemb::FusionMode::permissive : fusemb::FusionMode::strict, false});
    std::copy(fused.values().begin(), fused.values().end(), out);
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_silhouette(const double* rows, size_t n, size_t d, const int32_t* labels,
                                double* out) {
  return metric_call(rows, n, d, labels, out,
                     [](const auto& m, const auto& l) { return fusemb::silhouette(m, l); });
}

fusemb_status fusemb_calinski_harabasz(const double* rows, size_t n, size_t d,
                                       const int32_t* labels, double* out) {
  return metric_call(rows, n, d, labels, out,
                     [](const auto& m, const auto& l) { return fusemb::calinski_harabasz(m, l); });
}

fusemb_status fusemb_davies_bouldin(const double* rows, size_t n, size_t d, const int32_t* labels,
                                    double* out) {
  return metric_call(rows, n, d, labels, out,
                     [](const auto& m, const auto& l) { return fusemb::davies_bouldin(m, l); });
}

fusemb_status fusemb_select_dimension(const fusemb_dim_scores* scores, size_t n,
                                      size_t* chosen_dim) {
  if (auto s = require(chosen_dim && (scores || n == 0), "null scores or output")) return s;
  return guarded([&] {
    std::vector<fusemb::ValidationReport> reports;
    for (size_t i = 0; i < n; ++i)
      reports.push_back({scores[i].dim, scores[i].k, scores[i].silhouette,
                         scores[i].calinski_harabasz, scores[i].davies_bouldin,
                         fusemb::MetricSpace::original});
    *chosen_dim = fusemb::select_dimension(reports);
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_kmeans(const double* rows, size_t n, size_t d, size_t k, uint64_t seed,
                            int32_t* labels_out, double* inertia_out) {
  if (auto s = require(rows && labels_out && d > 0, "null rows or labels")) return s;
  return guarded([&] {
    const auto result = fusemb::kmeans(to_matrix(rows, n, d), k, seed);
    std::copy(result.labels.begin(), result.labels.end(), labels_out);
    if (inertia_out) *inertia_out = result.inertia;
    return FUSEMB_OK;
  });
}

fusemb_status fusemb_info_nce(const double* queries, const double* keys, size_t n, size_t d,
                              double temperature, double* out) {
  if (auto s = require(queries && keys && out && d > 0, "null InfoNCE input")) return s;
  return guarded([&] {
    std::vector<fusemb::Embedding> q, k;
    for (size_t i = 0; i < n; ++i) {
      q.emplace_back(std::vector<double>(queries + i * d, queries + (i + 1) * d),
                     fusemb::Modality::image);
      k.emplace_back(std::vector<double>(keys + i * d, keys + (i + 1) * d), fusemb::Modality::text);
    }
    *out = fusemb::info_nce(q, k, temperature);
    return FUSEMB_OK;
  });
}

}  // extern "C"
