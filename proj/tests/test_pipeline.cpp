#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fusemb/config.hpp"
#include "fusemb/error.hpp"
#include "fusemb/interchange.hpp"
#include "fusemb/pipeline.hpp"
#include "fusemb/validation.hpp"
#include "fusemb/vector_store.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fusemb;
using nlohmann::json;
using testutil::slurp;
using testutil::spit;
using testutil::TempDir;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected fusemb::Error";
  return ErrorCode::StateError;
}

BlobSpec small_spec() {
  BlobSpec spec;
  spec.blobs = 4;
  spec.per_blob = 25;
  spec.dim = 16;
  spec.seed = 3;
  return spec;
}

PipelineConfig small_config(const TempDir& dir) {
  PipelineConfig c;
  c.store_path = dir / "store.embd";
  c.dim = 16;
  c.pca_dims = {2, 4, 8};
  c.sweep_k = 4;
  c.k_min = 2;
  c.k_max = 6;
  c.runs_per_k = 3;
  c.report_neighbors = 5;
  return c;
}

std::map<std::string, int> read_truth(const std::filesystem::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  std::map<std::string, int> out;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    out[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
  }
  return out;
}

// Runs synth, fuse, sweep, cluster and report in `dir`.
void run_all(const TempDir& dir, const PipelineConfig& config) {
  cmd_synth(small_spec(), dir / "in.jsonl");
  const auto fused = cmd_fuse(config, dir / "in.jsonl");
  ASSERT_FALSE(fused.failure.has_value()) << fused.failure_message;
  cmd_sweep(config);
  cmd_cluster(config);
  cmd_report(config);
}

}  // namespace

TEST(Config, SetAndCanonical) {
  PipelineConfig c;
  c.set("pca_dims", "4, 8,16");
  c.set("k_max", "9");
  c.set("seed", "17");
  c.set("fusion_mode", "permissive");
  c.set("silhouette_space", "original");
  c.set("kmeans_init", "random");
  c.set("exact_silhouette", "true");
  EXPECT_EQ(c.pca_dims, (std::vector<std::size_t>{4, 8, 16}));
  EXPECT_EQ(c.k_max, 9u);
  EXPECT_EQ(c.base_seed, 17u);
  EXPECT_EQ(c.fusion_mode, FusionMode::permissive);
  EXPECT_EQ(c.silhouette_space, MetricSpace::original);
  EXPECT_EQ(c.kmeans_init, KMeansInit::random);
  EXPECT_EQ(c.effective_silhouette_sample(), 0u);
  EXPECT_EQ(code_of([&] { c.set("nope", "1"); }), ErrorCode::InvalidInput);
  EXPECT_EQ(code_of([&] { c.set("k_max", "many"); }), ErrorCode::InvalidInput);
  PipelineConfig d = c;
  EXPECT_EQ(c.canonical(), d.canonical());
  d.set("runs_per_k", "4");
  EXPECT_NE(c.canonical(), d.canonical());
}

TEST(Config, Defaults) {
  const PipelineConfig c;
  EXPECT_EQ(c.pca_dims, (std::vector<std::size_t>{8, 16, 32, 64, 128}));
  EXPECT_EQ(c.k_min, 2u);
  EXPECT_EQ(c.k_max, 20u);
  EXPECT_EQ(c.runs_per_k, 10u);
  EXPECT_EQ(c.report_neighbors, 10u);
  EXPECT_EQ(c.fusion_mode, FusionMode::strict);
  EXPECT_FALSE(c.renormalize);
}

TEST(Config, LoadFile) {
  TempDir dir("cfg");
  spit(dir / "c.conf", "# settings\nk_min = 3\n\nstore = other.embd  \nrenormalize = true # trailing\n");
  PipelineConfig c;
  c.load_file(dir / "c.conf");
  EXPECT_EQ(c.k_min, 3u);
  EXPECT_EQ(c.store_path, "other.embd");
  EXPECT_TRUE(c.renormalize);
  spit(dir / "bad.conf", "no equals sign\n");
  EXPECT_EQ(code_of([&] { c.load_file(dir / "bad.conf"); }), ErrorCode::InvalidInput);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Pipeline, EndToEndRecoversBlobs) {
  TempDir dir("e2e");
  const auto config = small_config(dir);
  run_all(dir, config);
  const ArtifactPaths paths(config.store_path);

  const auto store = VectorStore::load(config.store_path);
  EXPECT_EQ(store.count(), 100u);

  const auto sweep = json::parse(slurp(paths.sweep_json));
  EXPECT_EQ(sweep["reports"].size(), 3u);
  const auto chosen_dim = sweep["chosen_dim"].get<std::size_t>();

  const auto ks = json::parse(slurp(paths.kselect_json));
  EXPECT_EQ(ks["chosen_k"], 4);
  EXPECT_EQ(ks["dim"], chosen_dim);
  EXPECT_EQ(ks["candidate_ks"].size(), 5u);

  // Cluster labels agree with the generating blobs up to renaming.
  const auto cl = json::parse(slurp(paths.clustering_json));
  const auto labels = cl["labels"].get<std::vector<int>>();
  const auto truth = read_truth(dir / "in.jsonl.truth.csv");
  std::map<int, int> mapping;
  for (std::size_t i = 0; i < store.count(); ++i) {
    const int t = truth.at(store.id(i));
    const auto [it, fresh] = mapping.emplace(labels[i], t);
    EXPECT_EQ(it->second, t);
  }

  const auto cents = json::parse(slurp(paths.centroids_json));
  ASSERT_EQ(cents["clusters"].size(), 4u);
  double share_sum = 0.0;
  for (const auto& c : cents["clusters"]) {
    EXPECT_EQ(c["neighbors"].size(), 5u);
    share_sum += c["share"].get<double>();
    // every neighbor of a centroid belongs to that centroid's blob
    const int cid = c["cluster_id"];
    for (const auto& nb : c["neighbors"]) EXPECT_EQ(truth.at(nb["post_id"]), mapping.at(cid));
  }
  EXPECT_NEAR(share_sum, 1.0, 1e-12);

  const auto projection = slurp(paths.projection_csv);
  EXPECT_EQ(projection.substr(0, projection.find('\n')), "post_id,x,y,label");
  EXPECT_EQ(std::count(projection.begin(), projection.end(), '\n'), 101);
}

TEST(Pipeline, RerunIsNoOpAndStaleResultsNeedForce) {
  TempDir dir("restart");
  auto config = small_config(dir);
  run_all(dir, config);
  const ArtifactPaths paths(config.store_path);
  const auto before = slurp(paths.kselect_json);
  const auto mtime = std::filesystem::last_write_time(paths.kselect_json);

  const auto again = cmd_cluster(config);
  EXPECT_NE(again.text.find("up to date"), std::string::npos);
  EXPECT_EQ(std::filesystem::last_write_time(paths.kselect_json), mtime);
  EXPECT_NE(cmd_sweep(config).text.find("up to date"), std::string::npos);
  EXPECT_NE(cmd_report(config).text.find("up to date"), std::string::npos);

  auto changed = config;
  changed.runs_per_k = 4;
  EXPECT_EQ(code_of([&] { cmd_cluster(changed); }), ErrorCode::StateError);
  EXPECT_EQ(slurp(paths.kselect_json), before);
  changed.force = true;
  cmd_cluster(changed);
  EXPECT_NE(slurp(paths.kselect_json), before);
}

TEST(Pipeline, ReportRefusesClusteringOfAnotherStore) {
  TempDir dir("stale");
  auto config = small_config(dir);
  run_all(dir, config);
  auto store = VectorStore::load(config.store_path);
  std::vector<double> extra(16, 0.25);
  store.append("late-arrival", extra);
  store.save(config.store_path);
  config.force = true;
  EXPECT_EQ(code_of([&] { cmd_report(config); }), ErrorCode::StateError);
}

TEST(Pipeline, FuseIsIdempotentAndDetectsConflicts) {
  TempDir dir("fuse");
  const auto config = small_config(dir);
  cmd_synth(small_spec(), dir / "in.jsonl");
  const auto first = json::parse(cmd_fuse(config, dir / "in.jsonl").text);
  EXPECT_EQ(first["fused"], 100);
  const auto bytes = slurp(config.store_path);
  const auto second = json::parse(cmd_fuse(config, dir / "in.jsonl").text);
  EXPECT_EQ(second["fused"], 0);
  EXPECT_EQ(second["already_present"], 100);
  EXPECT_EQ(slurp(config.store_path), bytes);

  // The same post with a different text vector conflicts with the stored row.
  std::vector<double> t(16, 9.0), img(16, 1.0);
  spit(dir / "conflict.jsonl",
       format_record({"g000-00000", Modality::text, 0, t, {}}) + "\n" +
           format_record({"g000-00000", Modality::image, 0, img, {}}) + "\n");
  EXPECT_EQ(code_of([&] { cmd_fuse(config, dir / "conflict.jsonl"); }), ErrorCode::DuplicateId);
  EXPECT_EQ(slurp(config.store_path), bytes);

  auto forced = config;
  forced.force = true;
  const auto rebuilt = json::parse(cmd_fuse(forced, dir / "conflict.jsonl").text);
  EXPECT_EQ(rebuilt["store_count"], 1);
}

TEST(Pipeline, StrictFuseReportsSkippedListings) {
  TempDir dir("strict");
  auto config = small_config(dir);
  config.dim = 2;
  spit(dir / "in.jsonl", format_record({"both", Modality::text, 0, {1, 1}, {}}) + "\n" +
                             format_record({"both", Modality::image, 0, {0, 1}, {}}) + "\n" +
                             format_record({"text-only", Modality::text, 0, {3, 3}, {}}) + "\n");
  const auto out = cmd_fuse(config, dir / "in.jsonl");
  ASSERT_TRUE(out.failure.has_value());
  EXPECT_EQ(*out.failure, ErrorCode::MissingModality);
  const auto j = json::parse(out.text);
  EXPECT_EQ(j["fused"], 1);
  EXPECT_EQ(j["skipped"][0]["post_id"], "text-only");

  auto permissive = config;
  permissive.fusion_mode = FusionMode::permissive;
  permissive.store_path = dir / "perm.embd";
  const auto ok = cmd_fuse(permissive, dir / "in.jsonl");
  EXPECT_FALSE(ok.failure.has_value());
  const auto store = VectorStore::load(permissive.store_path);
  EXPECT_EQ(store.row(*store.find("text-only"))[0], 3.0f);
}

TEST(Pipeline, FuseRejectsWrongDimension) {
  TempDir dir("dim");
  auto config = small_config(dir);
  cmd_synth(small_spec(), dir / "in.jsonl");
  config.dim = 32;
  EXPECT_EQ(code_of([&] { cmd_fuse(config, dir / "in.jsonl"); }), ErrorCode::DimensionMismatch);
}

TEST(Pipeline, CommandsNeedPrerequisites) {
  TempDir dir("order");
  const auto config = small_config(dir);
  EXPECT_EQ(code_of([&] { cmd_sweep(config); }), ErrorCode::StateError);
  cmd_synth(small_spec(), dir / "in.jsonl");
  cmd_fuse(config, dir / "in.jsonl");
  EXPECT_EQ(code_of([&] { cmd_cluster(config); }), ErrorCode::StateError);
  EXPECT_EQ(code_of([&] { cmd_report(config); }), ErrorCode::StateError);
  QueryRequest reduced{std::nullopt, std::string("g000-00000"), 3, true};
  EXPECT_EQ(code_of([&] { cmd_query(config, reduced); }), ErrorCode::StateError);
  auto forced = config;
  forced.cluster_dim = 4;
  cmd_cluster(forced);
  cmd_report(config);
}

TEST(Pipeline, QueryByIdAndFile) {
  TempDir dir("query");
  const auto config = small_config(dir);
  run_all(dir, config);
  const auto store = VectorStore::load(config.store_path);

  const auto by_id = json::parse(cmd_query(config, {std::nullopt, std::string("g002-00007"), 4, false}).text);
  ASSERT_EQ(by_id["results"].size(), 1u);
  const auto& hits = by_id["results"][0]["neighbors"];
  ASSERT_EQ(hits.size(), 4u);
  EXPECT_EQ(hits[0]["post_id"], "g002-00007");
  EXPECT_EQ(hits[0]["distance"], 0.0);

  std::ostringstream lines;
  std::vector<std::string> ids{"g001-00003", "g003-00010"};
  store.dump(lines, std::span<const std::string>(ids));
  spit(dir / "q.jsonl", lines.str());
  const auto by_file = json::parse(cmd_query(config, {dir / "q.jsonl", std::nullopt, 2, false}).text);
  ASSERT_EQ(by_file["results"].size(), 2u);
  EXPECT_EQ(by_file["results"][0]["neighbors"][0]["post_id"], "g001-00003");
  EXPECT_EQ(by_file["results"][1]["neighbors"][0]["post_id"], "g003-00010");

  const auto reduced = json::parse(cmd_query(config, {std::nullopt, std::string("g002-00007"), 3, true}).text);
  EXPECT_EQ(reduced["space"], "reduced");
  EXPECT_EQ(reduced["results"][0]["neighbors"][0]["post_id"], "g002-00007");

  EXPECT_EQ(code_of([&] { cmd_query(config, {std::nullopt, std::string("missing"), 3, false}); }),
            ErrorCode::UnknownId);
}

TEST(Pipeline, DumpRoundTripsThroughIngest) {
  TempDir dir("dump");
  const auto config = small_config(dir);
  cmd_synth(small_spec(), dir / "in.jsonl");
  cmd_fuse(config, dir / "in.jsonl");
  cmd_dump(config, {}, dir / "all.jsonl");
  VectorStore copy(16);
  std::istringstream in(slurp(dir / "all.jsonl"));
  EXPECT_EQ(copy.ingest(in), 100u);
  const auto store = VectorStore::load(config.store_path);
  for (std::size_t i = 0; i < store.count(); ++i) {
    ASSERT_EQ(copy.id(i), store.id(i));
    ASSERT_EQ(std::memcmp(copy.row(i).data(), store.row(i).data(), 16 * sizeof(float)), 0);
  }
  const auto text = cmd_dump(config, {"g000-00001"}, std::nullopt).text;
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_EQ(code_of([&] { cmd_dump(config, {"zzz"}, std::nullopt); }), ErrorCode::UnknownId);
}

TEST(Pipeline, PcaModelPersistenceRoundTrips) {
  TempDir dir("pca");
  const auto rows = testutil::to_matrix(oracle::random_rows(30, 5, 1));
  const auto model = pca_fit(rows, 3);
  save_pca_model(model, dir / "m.json");
  const auto back = load_pca_model(dir / "m.json");
  EXPECT_EQ(back.mean, model.mean);
  EXPECT_EQ(back.components, model.components);
  EXPECT_EQ(back.explained_variance, model.explained_variance);
  EXPECT_EQ(back.fitted_on, model.fitted_on);
}

TEST(Pipeline, DeterministicAcrossDirectories) {
  TempDir a("det-a"), b("det-b");
  run_all(a, small_config(a));
  run_all(b, small_config(b));
  for (const char* leaf : {"store.embd.sweep.csv", "store.embd.labels.csv", "store.embd.shares.csv",
                           "store.embd.projection.csv", "store.embd.kselect.json",
                           "store.embd.clustering.json", "store.embd.centroids.json", "store.embd"}) {
    EXPECT_EQ(slurp(a / leaf), slurp(b / leaf)) << leaf;
  }
}
