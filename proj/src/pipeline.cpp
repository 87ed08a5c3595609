#include "fusemb/pipeline.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fusemb/clustering.hpp"
#include "fusemb/format.hpp"
#include "fusemb/interchange.hpp"
#include "fusemb/validation.hpp"
#include "fusemb/vector_store.hpp"

namespace fusemb {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& base, const char* suffix) {
  auto p = base;
  p += suffix;
  return p;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const auto tmp = with_suffix(path, ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out << content;
    if (!out) fail(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoError, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

VectorStore load_nonempty_store(const PipelineConfig& config) {
  if (!fs::exists(config.store_path))
    fail(ErrorCode::StateError, "no store at " + config.store_path.string() + "; run fuse first");
  auto store = VectorStore::load(config.store_path);
  if (store.empty()) fail(ErrorCode::EmptyStore, "store " + config.store_path.string() + " is empty");
  return store;
}

// Content digest over ids, metadata and raw float bits; independent of the
// manifest timestamp.
std::string store_digest(const VectorStore& store) {
  std::string bytes;
  for (std::size_t i = 0; i < store.count(); ++i) {
    bytes += store.id(i);
    bytes += '\0';
    bytes += json(store.meta(i)).dump();
    bytes += '\0';
    const auto row = store.row(i);
    bytes.append(reinterpret_cast<const char*>(row.data()), row.size_bytes());
  }
  return fnv1a_hex(bytes);
}

// True when `primary` already holds results for `digest` and the command may
// be skipped. Stale results are an error unless --force is given.
bool up_to_date(const fs::path& primary, const std::string& digest, const PipelineConfig& config) {
  if (!fs::exists(primary) || config.force) return false;
  const auto existing = read_json(primary);
  if (existing.value("input_digest", "") == digest) return true;
  fail(ErrorCode::StateError, primary.string() +
                                  " was produced from different inputs or settings; rerun with --force "
                                  "to overwrite");
}

std::string fusion_hash(const PipelineConfig& config) {
  return fnv1a_hex(std::string("mode=") +
                   (config.fusion_mode == FusionMode::strict ? "strict" : "permissive") +
                   ";renormalize=" + (config.renormalize ? "1" : "0"));
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    out.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return out;
}

Matrix matrix_from_json(const json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j.at(0).size() : 0;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j.at(i).size() != cols) fail(ErrorCode::ParseError, "ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

json neighbors_json(const NeighborList& list, const VectorStore& store) {
  json out = json::array();
  for (const auto& n : list.entries)
    out.push_back({{"rank", n.rank},
                   {"post_id", n.post_id},
                   {"distance", n.distance},
                   {"meta", store.meta(n.row)}});
  return out;
}

struct SavedClustering {
  std::string store_digest;
  std::size_t dim = 0;
  std::vector<int> labels;
  Matrix centroids;
  std::string raw;
};

SavedClustering load_clustering(const ArtifactPaths& paths) {
  if (!fs::exists(paths.clustering_json) || !fs::exists(paths.pca_model))
    fail(ErrorCode::StateError, "no clustering beside " + paths.store.string() + "; run cluster first");
  SavedClustering out;
  out.raw = read_file(paths.clustering_json);
  try {
    const auto j = json::parse(out.raw);
    out.store_digest = j.at("store_digest").get<std::string>();
    out.dim = j.at("dim").get<std::size_t>();
    out.labels = j.at("labels").get<std::vector<int>>();
    out.centroids = matrix_from_json(j.at("centroids"));
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, paths.clustering_json.string() + ": " + e.what());
  }
  return out;
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ArtifactPaths::ArtifactPaths(const fs::path& store_path)
    : store(store_path),
      sweep_json(with_suffix(store_path, ".sweep.json")),
      sweep_table(with_suffix(store_path, ".sweep.csv")),
      pca_model(with_suffix(store_path, ".pca.json")),
      kselect_json(with_suffix(store_path, ".kselect.json")),
      clustering_json(with_suffix(store_path, ".clustering.json")),
      labels_csv(with_suffix(store_path, ".labels.csv")),
      centroids_json(with_suffix(store_path, ".centroids.json")),
      shares_csv(with_suffix(store_path, ".shares.csv")),
      projection_csv(with_suffix(store_path, ".projection.csv")) {}

void save_pca_model(const PcaModel& model, const fs::path& path) {
  json j = {{"mean", model.mean},
            {"components", matrix_json(model.components)},
            {"explained_variance", model.explained_variance},
            {"fitted_on", model.fitted_on}};
  write_file_atomic(path, pretty(j));
}

PcaModel load_pca_model(const fs::path& path) {
  const auto j = read_json(path);
  PcaModel model;
  try {
    model.mean = j.at("mean").get<std::vector<double>>();
    model.components = matrix_from_json(j.at("components"));
    model.explained_variance = j.at("explained_variance").get<std::vector<double>>();
    model.fitted_on = j.at("fitted_on").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  if (model.components.cols() != model.mean.size())
    fail(ErrorCode::ParseError, path.string() + ": component width differs from mean");
  return model;
}

CommandOutput cmd_synth(const BlobSpec& spec, const fs::path& out) {
  const auto data = make_listings(spec);
  std::string body = "# fusemb synthetic listings dim=" + std::to_string(spec.dim) +
                     " blobs=" + std::to_string(spec.blobs) +
                     " per_blob=" + std::to_string(spec.per_blob) +
                     " seed=" + std::to_string(spec.seed) + "\n";
  for (const auto& rec : data.records) body += format_record(rec) + "\n";
  write_file_atomic(out, body);
  std::ostringstream truth;
  write_truth_csv(truth, data);
  write_file_atomic(with_suffix(out, ".truth.csv"), truth.str());

  json summary = {{"command", "synth"},
                  {"path", out.string()},
                  {"listings", data.truth.size()},
                  {"records", data.records.size()},
                  {"dim", spec.dim},
                  {"blobs", spec.blobs}};
  return {pretty(summary), std::nullopt, {}};
}

CommandOutput cmd_fuse(const PipelineConfig& config, const fs::path& input) {
  std::ifstream in(input);
  if (!in) fail(ErrorCode::IoError, "cannot open " + input.string());
  const auto records = read_records(in);
  const auto grouped = group_listings(records);

  const bool reuse = fs::exists(config.store_path) && !config.force;
  VectorStore store = reuse ? VectorStore::load(config.store_path)
                            : VectorStore(static_cast<std::uint32_t>(
                                              config.dim.value_or(PipelineConfig::kDefaultDim)),
                                          {utc_now(), fusion_hash(config)});
  if (reuse && config.dim && *config.dim != store.dim())
    fail(ErrorCode::DimensionMismatch, "store has dimension " + std::to_string(store.dim()) +
                                           ", config asks for " + std::to_string(*config.dim));
  if (reuse && store.manifest().fusion_config_hash != fusion_hash(config))
    fail(ErrorCode::StateError, "store was built with different fusion settings; use --force");

  const FusionOptions options{config.fusion_mode, config.renormalize};
  std::size_t images = 0, added = 0, present = 0;
  json skipped = json::array();
  for (const auto& listing : grouped.listings) {
    images += listing.image_count();
    if (listing.dim() != store.dim())
      fail(ErrorCode::DimensionMismatch, "listing '" + listing.post_id + "' has dimension " +
                                             std::to_string(listing.dim()) + ", store has " +
                                             std::to_string(store.dim()));
    std::optional<Embedding> fused;
    try {
      fused.emplace(fuse(listing, options));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingModality) throw;
      skipped.push_back({{"post_id", listing.post_id}, {"reason", e.what()}});
      continue;
    }
    if (const auto row = store.find(listing.post_id)) {
      const auto stored = store.row(*row);
      bool same = true;
      for (std::size_t j = 0; j < stored.size() && same; ++j)
        same = std::bit_cast<std::uint32_t>(stored[j]) ==
               std::bit_cast<std::uint32_t>(static_cast<float>((*fused)[j]));
      if (!same)
        fail(ErrorCode::DuplicateId, "post '" + listing.post_id +
                                         "' is already stored with a different vector; use --force");
      ++present;
      continue;
    }
    store.append(listing.post_id, fused->values(), listing.metadata);
    ++added;
  }
  store.save(config.store_path);

  json summary = {{"command", "fuse"},
                  {"listings", grouped.listings.size()},
                  {"images", images},
                  {"fused", added},
                  {"already_present", present},
                  {"ignored_records", grouped.ignored_records},
                  {"skipped", skipped},
                  {"store_count", store.count()}};
  CommandOutput out{pretty(summary), std::nullopt, {}};
  if (!skipped.empty()) {
    out.failure = ErrorCode::MissingModality;
    out.failure_message = std::to_string(skipped.size()) + " listing(s) skipped for missing modalities";
  }
  return out;
}

CommandOutput cmd_sweep(const PipelineConfig& config) {
  const ArtifactPaths paths(config.store_path);
  const auto store = load_nonempty_store(config);
  const std::size_t sample = config.effective_silhouette_sample();
  std::string dims;
  for (auto d : config.pca_dims) dims += std::to_string(d) + ",";
  const std::string digest =
      fnv1a_hex(store_digest(store) + "|sweep|dims=" + dims + "|k=" + std::to_string(config.sweep_k) +
                "|seed=" + std::to_string(config.base_seed) + "|pca_sample=" +
                std::to_string(config.pca_sample) + "|sil_sample=" + std::to_string(sample));
  if (up_to_date(paths.sweep_json, digest, config))
    return {"sweep: up to date (" + paths.sweep_json.string() + ")\n" + read_file(paths.sweep_table),
            std::nullopt, {}};
  if (config.pca_dims.empty()) fail(ErrorCode::InvalidInput, "pca_dims is empty");

  const Matrix rows = store.to_matrix();
  std::vector<ValidationReport> reports;
  for (std::size_t r : config.pca_dims) {
    const auto model = pca_fit(rows, r, {config.pca_sample, config.base_seed});
    const auto reduced = pca_transform(model, rows);
    reports.push_back(
        evaluate_reduction(rows, reduced, config.sweep_k, config.base_seed, sample).report);
  }
  const std::size_t chosen = select_dimension(reports);

  json jr = json::array();
  for (const auto& r : reports)
    jr.push_back({{"dim", r.dim},
                  {"k", r.k},
                  {"silhouette", r.silhouette},
                  {"calinski_harabasz", r.calinski_harabasz},
                  {"davies_bouldin", r.davies_bouldin},
                  {"space", to_string(r.space)}});
  json j = {{"input_digest", digest},
            {"store_count", store.count()},
            {"k", config.sweep_k},
            {"seed", config.base_seed},
            {"silhouette_sample", sample},
            {"reports", jr},
            {"chosen_dim", chosen}};
  std::ostringstream table;
  write_validation_table(table, reports);
  write_file_atomic(paths.sweep_table, table.str());
  write_file_atomic(paths.sweep_json, pretty(j));
  return {table.str() + "chosen_dim=" + std::to_string(chosen) + "\n", std::nullopt, {}};
}

CommandOutput cmd_cluster(const PipelineConfig& config) {
  const ArtifactPaths paths(config.store_path);
  const auto store = load_nonempty_store(config);

  std::size_t dim = config.cluster_dim;
  if (dim == 0) {
    if (!fs::exists(paths.sweep_json))
      fail(ErrorCode::StateError, "no sweep results; run sweep first or set cluster_dim");
    const auto sweep = read_json(paths.sweep_json);
    dim = sweep.value("chosen_dim", std::size_t{0});
    if (dim == 0) fail(ErrorCode::ParseError, paths.sweep_json.string() + " has no chosen_dim");
  }
  const std::size_t sample = config.effective_silhouette_sample();
  const std::string base = store_digest(store);
  const std::string digest = fnv1a_hex(
      base + "|cluster|dim=" + std::to_string(dim) + "|" + config.canonical() + "|sample=" +
      std::to_string(sample));
  if (up_to_date(paths.kselect_json, digest, config))
    return {"cluster: up to date (" + paths.kselect_json.string() + ")\n", std::nullopt, {}};

  const Matrix rows = store.to_matrix();
  const auto model = pca_fit(rows, dim, {config.pca_sample, config.base_seed});
  const auto reduced = pca_transform(model, rows);

  SelectKOptions options;
  options.runs_per_k = config.runs_per_k;
  options.kmeans.init = config.kmeans_init;
  options.silhouette_rows = config.silhouette_space == MetricSpace::original ? &rows : nullptr;
  options.silhouette_sample = sample;
  const auto report = select_k(reduced, config.k_min, config.k_max, config.base_seed, options);
  const auto& winner = report.chosen();

  json per_k = json::array();
  for (const auto& entry : report.per_k)
    per_k.push_back({{"k", entry.k},
                     {"seeds", entry.seeds},
                     {"silhouettes", entry.silhouettes},
                     {"mean_silhouette", entry.mean_silhouette},
                     {"best_seed", entry.best_seed}});
  json ks = {{"input_digest", digest},
             {"dim", dim},
             {"base_seed", report.base_seed},
             {"runs_per_k", report.runs_per_k},
             {"silhouette_space", to_string(config.silhouette_space)},
             {"silhouette_sample", report.silhouette_sample},
             {"candidate_ks", report.candidate_ks},
             {"per_k", per_k},
             {"chosen_k", report.chosen_k}};
  const auto& best = winner.best;
  json cl = {{"input_digest", digest},
             {"store_digest", base},
             {"dim", dim},
             {"k", best.k()},
             {"seed", best.seed},
             {"inertia", best.inertia},
             {"iterations", best.iterations},
             {"inertia_trace", best.inertia_trace},
             {"centroids", matrix_json(best.centroids)},
             {"labels", best.labels}};
  std::string labels = "post_id,label\n";
  for (std::size_t i = 0; i < store.count(); ++i)
    labels += csv_field(store.id(i)) + "," + std::to_string(best.labels[i]) + "\n";

  save_pca_model(model, paths.pca_model);
  write_file_atomic(paths.clustering_json, pretty(cl));
  write_file_atomic(paths.labels_csv, labels);
  write_file_atomic(paths.kselect_json, pretty(ks));

  std::ostringstream text;
  text << "k,mean_silhouette,best_seed\n";
  for (const auto& entry : report.per_k)
    text << entry.k << ',' << format_number(entry.mean_silhouette) << ',' << entry.best_seed << '\n';
  text << "chosen_k=" << report.chosen_k << " dim=" << dim << '\n';
  return {text.str(), std::nullopt, {}};
}

CommandOutput cmd_report(const PipelineConfig& config) {
  const ArtifactPaths paths(config.store_path);
  const auto store = load_nonempty_store(config);
  const auto saved = load_clustering(paths);
  const std::string base = store_digest(store);
  if (saved.store_digest != base)
    fail(ErrorCode::StateError, "clustering was computed on a different store; rerun cluster");
  const std::string digest =
      fnv1a_hex(base + "|report|" + saved.raw + "|neighbors=" + std::to_string(config.report_neighbors));
  if (up_to_date(paths.centroids_json, digest, config))
    return {"report: up to date (" + paths.centroids_json.string() + ")\n" + read_file(paths.shares_csv),
            std::nullopt, {}};

  const auto model = load_pca_model(paths.pca_model);
  const Matrix rows = store.to_matrix();
  const Matrix reduced = pca_transform(model, rows);
  if (saved.labels.size() != store.count() || saved.centroids.cols() != reduced.cols())
    fail(ErrorCode::StateError, "persisted clustering does not fit the store");

  const std::size_t k = saved.centroids.rows();
  std::vector<std::size_t> sizes(k, 0);
  for (int l : saved.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k)
      fail(ErrorCode::ParseError, "label out of range in " + paths.clustering_json.string());
    ++sizes[static_cast<std::size_t>(l)];
  }

  json clusters = json::array();
  std::string shares = "cluster_id,size,share\n";
  for (std::size_t c = 0; c < k; ++c) {
    const auto centroid = saved.centroids.row(c);
    const auto neighbors = exact_knn(reduced, store.ids(), centroid, config.report_neighbors);
    const double share = static_cast<double>(sizes[c]) / static_cast<double>(store.count());
    clusters.push_back({{"cluster_id", c},
                        {"size", sizes[c]},
                        {"share", share},
                        {"centroid", std::vector<double>(centroid.begin(), centroid.end())},
                        {"neighbors", neighbors_json(neighbors, store)}});
    shares += std::to_string(c) + "," + std::to_string(sizes[c]) + "," + format_number(share) + "\n";
  }
  json j = {{"input_digest", digest},
            {"dim", saved.dim},
            {"k", k},
            {"store_count", store.count()},
            {"neighbors_per_cluster", config.report_neighbors},
            {"space", "reduced"},
            {"clusters", clusters}};

  const auto projection = project_2d(rows, store.ids());
  std::ostringstream csv;
  write_projection_csv(csv, projection, saved.labels);

  write_file_atomic(paths.projection_csv, csv.str());
  write_file_atomic(paths.shares_csv, shares);
  write_file_atomic(paths.centroids_json, pretty(j));
  return {shares, std::nullopt, {}};
}

CommandOutput cmd_query(const PipelineConfig& config, const QueryRequest& request) {
  if (request.vector_file.has_value() == request.stored_id.has_value())
    fail(ErrorCode::InvalidInput, "query needs exactly one of a vector file or a stored id");
  const auto store = load_nonempty_store(config);
  const std::size_t k = request.k ? request.k : config.report_neighbors;

  struct Query {
    json label;
    std::vector<double> vector;
  };
  std::vector<Query> queries;
  if (request.stored_id) {
    const auto row = store.find(*request.stored_id);
    if (!row) fail(ErrorCode::UnknownId, "unknown post_id '" + *request.stored_id + "'");
    const auto v = store.row(*row);
    queries.push_back({{{"post_id", *request.stored_id}, {"modality", "fused"}, {"index", 0}},
                       std::vector<double>(v.begin(), v.end())});
  } else {
    std::ifstream in(*request.vector_file);
    if (!in) fail(ErrorCode::IoError, "cannot open " + request.vector_file->string());
    for (auto& rec : read_records(in)) {
      if (rec.vector.size() != store.dim())
        fail(ErrorCode::DimensionMismatch, "query '" + rec.post_id + "' has dimension " +
                                               std::to_string(rec.vector.size()) + ", store has " +
                                               std::to_string(store.dim()));
      queries.push_back({{{"post_id", rec.post_id},
                          {"modality", to_string(rec.modality)},
                          {"index", rec.index}},
                         std::move(rec.vector)});
    }
    if (queries.empty()) fail(ErrorCode::InvalidInput, "query file holds no records");
  }

  std::optional<PcaModel> model;
  Matrix reduced_rows;
  if (request.reduced) {
    const ArtifactPaths paths(config.store_path);
    if (!fs::exists(paths.pca_model))
      fail(ErrorCode::StateError, "no PCA model for reduced-space queries; run cluster first");
    model = load_pca_model(paths.pca_model);
    reduced_rows = pca_transform(*model, store.to_matrix());
  }

  json results = json::array();
  for (const auto& q : queries) {
    NeighborList list;
    if (model) {
      Matrix one(1, q.vector.size());
      std::ranges::copy(q.vector, one.row(0).begin());
      const auto projected = pca_transform(*model, one);
      list = exact_knn(reduced_rows, store.ids(), projected.row(0), k);
    } else {
      list = store.knn(q.vector, k);
    }
    results.push_back({{"query", q.label}, {"neighbors", neighbors_json(list, store)}});
  }
  json j = {{"k", k}, {"space", request.reduced ? "reduced" : "original"}, {"results", results}};
  return {pretty(j), std::nullopt, {}};
}

CommandOutput cmd_dump(const PipelineConfig& config, const std::vector<std::string>& ids,
                       const std::optional<fs::path>& out) {
  if (!fs::exists(config.store_path))
    fail(ErrorCode::StateError, "no store at " + config.store_path.string());
  const auto store = VectorStore::load(config.store_path);
  std::ostringstream lines;
  if (ids.empty()) store.dump(lines);
  else store.dump(lines, std::span<const std::string>(ids));
  if (!out) return {lines.str(), std::nullopt, {}};
  write_file_atomic(*out, lines.str());
  return {"dumped to " + out->string() + "\n", std::nullopt, {}};
}

}  // namespace fusemb
