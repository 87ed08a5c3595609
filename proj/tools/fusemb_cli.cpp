// fusemb command-line driver. Talks to the engine only through the C API.

#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "fusemb/fusemb.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

int exit_code(fusemb_status s) {
  if (s == FUSEMB_OK) return kExitOk;
  return s == FUSEMB_ERR_INTERNAL ? kExitInternal : kExitUser;
}

// Prints the command's text, then the error (if any), and maps the status.
int finish(fusemb_status status, fusemb_text* text) {
  if (text) {
    std::fwrite(fusemb_text_data(text), 1, fusemb_text_size(text), stdout);
    fusemb_text_destroy(text);
  }
  if (status != FUSEMB_OK) std::fprintf(stderr, "fusemb: %s\n", fusemb_last_error());
  return exit_code(status);
}

class Config {
 public:
  Config() { fusemb_config_create(&handle_); }
  ~Config() { fusemb_config_destroy(handle_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  fusemb_config* get() const { return handle_; }

 private:
  fusemb_config* handle_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusemb: fused multimodal embedding pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, store, silhouette_space, mode;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  bool force = false, exact_silhouette = false;
  std::vector<std::string> overrides;
  auto* opt_config = app.add_option("--config", config_file, "key = value settings file");
  auto* opt_store = app.add_option("--store", store, "store file path");
  auto* opt_seed = app.add_option("--seed", seed, "base random seed");
  auto* opt_force = app.add_flag("--force", force, "overwrite existing results");
  auto* opt_space = app.add_option("--silhouette-space", silhouette_space,
                                   "space for k-selection silhouettes")
                        ->check(CLI::IsMember({"reduced", "original"}));
  auto* opt_exact = app.add_flag("--exact-silhouette", exact_silhouette,
                                 "never subsample silhouettes");
  auto* opt_dim = app.add_option("--dim", dim, "embedding dimension for new stores");
  auto* opt_mode = app.add_option("--mode", mode, "fusion mode")
                       ->check(CLI::IsMember({"strict", "permissive"}));
  app.add_option("--set", overrides, "extra key=value setting (repeatable)");

  // synth
  auto* synth = app.add_subcommand("synth", "write synthetic blob listings");
  fusemb_synth_params sp;
  fusemb_synth_params_default(&sp);
  std::string synth_out;
  synth->add_option("--blobs", sp.blobs, "number of blobs")->capture_default_str();
  synth->add_option("--per-blob", sp.per_blob, "listings per blob")->capture_default_str();
  synth->add_option("--dim", sp.dim, "vector dimension")->capture_default_str();
  synth->add_option("--radius", sp.radius, "blob radius")->capture_default_str();
  synth->add_option("--separation", sp.separation, "distance between blob centers")
      ->capture_default_str();
  synth->add_option("--max-images", sp.max_images, "images per listing, at most")
      ->capture_default_str();
  synth->add_option("--out", synth_out, "output interchange file")->required();

  // fuse
  auto* fuse = app.add_subcommand("fuse", "fuse listings into the store");
  std::string fuse_input;
  fuse->add_option("input", fuse_input, "interchange file")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "PCA dimension sweep with cross-space validation");
  std::string pca_dims;
  std::size_t sweep_k = 0;
  auto* opt_pca_dims = sweep->add_option("--pca-dims", pca_dims, "comma-separated dims");
  auto* opt_sweep_k = sweep->add_option("--sweep-k", sweep_k, "k used during the sweep");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "silhouette-based k-selection");
  std::size_t k_min = 0, k_max = 0, runs_per_k = 0, cluster_dim = 0;
  std::string init;
  auto* opt_kmin = cluster->add_option("--k-min", k_min);
  auto* opt_kmax = cluster->add_option("--k-max", k_max);
  auto* opt_runs = cluster->add_option("--runs-per-k", runs_per_k);
  auto* opt_cdim = cluster->add_option("--cluster-dim", cluster_dim, "force the reduced dim");
  auto* opt_init = cluster->add_option("--init", init)->check(CLI::IsMember({"k-means++", "random"}));

  // report
  auto* report = app.add_subcommand("report", "centroid neighbors, shares and 2D export");
  std::size_t neighbors = 0;
  auto* opt_neighbors = report->add_option("--neighbors", neighbors, "posts per centroid");

  // query
  auto* query = app.add_subcommand("query", "k-NN against the fused store");
  std::string query_file, query_id;
  std::size_t query_k = 0;
  bool reduced = false;
  auto* opt_qfile = query->add_option("--vector-file", query_file, "interchange query vectors");
  auto* opt_qid = query->add_option("--id", query_id, "query by stored post_id");
  opt_qfile->excludes(opt_qid);
  query->add_option("-k", query_k, "neighbors to return (default 10)");
  query->add_flag("--reduced", reduced, "search in the clustered PCA space");

  // dump
  auto* dump = app.add_subcommand("dump", "export store rows as interchange lines");
  std::vector<std::string> dump_ids;
  std::string dump_out;
  dump->add_option("--id", dump_ids, "post_id to export (repeatable)");
  auto* opt_dump_out = dump->add_option("--out", dump_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUser;
  }

  if (synth->parsed()) {
    if (opt_seed->count()) sp.seed = seed;
    fusemb_text* text = nullptr;
    return finish(fusemb_cmd_synth(&sp, synth_out.c_str(), &text), text);
  }

  Config config;
  std::vector<std::pair<std::string, std::string>> settings;
  auto put = [&](const char* key, std::string value) { settings.emplace_back(key, std::move(value)); };
  if (opt_store->count()) put("store", store);
  if (opt_seed->count()) put("seed", std::to_string(seed));
  if (opt_force->count()) put("force", "true");
  if (opt_space->count()) put("silhouette_space", silhouette_space);
  if (opt_exact->count()) put("exact_silhouette", "true");
  if (opt_dim->count()) put("dim", std::to_string(dim));
  if (opt_mode->count()) put("fusion_mode", mode);
  if (opt_pca_dims->count()) put("pca_dims", pca_dims);
  if (opt_sweep_k->count()) put("sweep_k", std::to_string(sweep_k));
  if (opt_kmin->count()) put("k_min", std::to_string(k_min));
  if (opt_kmax->count()) put("k_max", std::to_string(k_max));
  if (opt_runs->count()) put("runs_per_k", std::to_string(runs_per_k));
  if (opt_cdim->count()) put("cluster_dim", std::to_string(cluster_dim));
  if (opt_init->count()) put("kmeans_init", init);
  if (opt_neighbors->count()) put("report_neighbors", std::to_string(neighbors));
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "fusemb: --set expects key=value, got '%s'\n", kv.c_str());
      return kExitUser;
    }
    settings.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }

  if (opt_config->count()) {
    if (auto s = fusemb_config_load_file(config.get(), config_file.c_str())) return finish(s, nullptr);
  }
  for (const auto& [key, value] : settings)
    if (auto s = fusemb_config_set(config.get(), key.c_str(), value.c_str())) return finish(s, nullptr);

  fusemb_text* text = nullptr;
  fusemb_status status = FUSEMB_OK;
  if (fuse->parsed()) {
    status = fusemb_cmd_fuse(config.get(), fuse_input.c_str(), &text);
  } else if (sweep->parsed()) {
    status = fusemb_cmd_sweep(config.get(), &text);
  } else if (cluster->parsed()) {
    status = fusemb_cmd_cluster(config.get(), &text);
  } else if (report->parsed()) {
    status = fusemb_cmd_report(config.get(), &text);
  } else if (query->parsed()) {
    if (!opt_qfile->count() && !opt_qid->count()) {
      std::fprintf(stderr, "fusemb: query needs --vector-file or --id\n");
      return kExitUser;
    }
    status = fusemb_cmd_query(config.get(), opt_qfile->count() ? query_file.c_str() : nullptr,
                              opt_qid->count() ? query_id.c_str() : nullptr, query_k, reduced ? 1 : 0,
                              &text);
  } else if (dump->parsed()) {
    std::vector<const char*> ids;
    for (const auto& id : dump_ids) ids.push_back(id.c_str());
    status = fusemb_cmd_dump(config.get(), ids.data(), ids.size(),
                             opt_dump_out->count() ? dump_out.c_str() : nullptr, &text);
  }
  return finish(status, text);
}
