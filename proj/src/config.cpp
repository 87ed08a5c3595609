#include "fusemb/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "fusemb/error.hpp"

namespace fusemb {

namespace {

std::string_view trim(std::string_view s) {
  const auto lo = s.find_first_not_of(" \t\r");
  if (lo == std::string_view::npos) return {};
  const auto hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  fail(ErrorCode::InvalidInput,
       "invalid value '" + std::string(value) + "' for '" + std::string(key) + "'");
}

template <class Int>
Int parse_int(std::string_view key, std::string_view value) {
  Int out{};
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || end != value.data() + value.size()) bad_value(key, value);
  return out;
}

std::size_t parse_positive(std::string_view key, std::string_view value) {
  const auto v = parse_int<std::size_t>(key, value);
  if (v == 0) bad_value(key, value);
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value);
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto comma = value.find(',', pos);
    const auto item = trim(value.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                             : comma - pos));
    out.push_back(parse_positive(key, item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view raw) {
  const auto value = trim(raw);
  if (key == "store") {
    if (value.empty()) bad_value(key, value);
    store_path = std::string(value);
  } else if (key == "dim") {
    dim = parse_positive(key, value);
  } else if (key == "fusion_mode") {
    if (value == "strict") fusion_mode = FusionMode::strict;
    else if (value == "permissive") fusion_mode = FusionMode::permissive;
    else bad_value(key, value);
  } else if (key == "renormalize") {
    renormalize = parse_bool(key, value);
  } else if (key == "pca_dims") {
    pca_dims = parse_list(key, value);
  } else if (key == "pca_sample") {
    pca_sample = parse_int<std::size_t>(key, value);
  } else if (key == "sweep_k") {
    sweep_k = parse_positive(key, value);
  } else if (key == "k_min") {
    k_min = parse_positive(key, value);
  } else if (key == "k_max") {
    k_max = parse_positive(key, value);
  } else if (key == "runs_per_k") {
    runs_per_k = parse_positive(key, value);
  } else if (key == "seed") {
    base_seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "silhouette_space") {
    if (value == "reduced") silhouette_space = MetricSpace::reduced;
    else if (value == "original") silhouette_space = MetricSpace::original;
    else bad_value(key, value);
  } else if (key == "exact_silhouette") {
    exact_silhouette = parse_bool(key, value);
  } else if (key == "silhouette_sample") {
    silhouette_sample = parse_positive(key, value);
  } else if (key == "report_neighbors") {
    report_neighbors = parse_positive(key, value);
  } else if (key == "cluster_dim") {
    cluster_dim = parse_int<std::size_t>(key, value);
  } else if (key == "kmeans_init") {
    if (value == "k-means++" || value == "plus_plus") kmeans_init = KMeansInit::plus_plus;
    else if (value == "random") kmeans_init = KMeansInit::random;
    else bad_value(key, value);
  } else if (key == "force") {
    force = parse_bool(key, value);
  } else {
    fail(ErrorCode::InvalidInput, "unknown config key '" + std::string(key) + "'");
  }
}

void PipelineConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorCode::InvalidInput, path.string() + ":" + std::to_string(line_no) +
                                        ": expected key = value");
    try {
      set(trim(view.substr(0, eq)), view.substr(eq + 1));
    } catch (const Error& e) {
      fail(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string PipelineConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["dim"] = dim ? std::to_string(*dim) : "auto";
  kv["fusion_mode"] = fusion_mode == FusionMode::strict ? "strict" : "permissive";
  kv["renormalize"] = renormalize ? "true" : "false";
  std::string dims;
  for (std::size_t i = 0; i < pca_dims.size(); ++i)
    dims += (i ? "," : "") + std::to_string(pca_dims[i]);
  kv["pca_dims"] = dims;
  kv["pca_sample"] = std::to_string(pca_sample);
  kv["sweep_k"] = std::to_string(sweep_k);
  kv["k_min"] = std::to_string(k_min);
  kv["k_max"] = std::to_string(k_max);
  kv["runs_per_k"] = std::to_string(runs_per_k);
  kv["seed"] = std::to_string(base_seed);
  kv["silhouette_space"] = std::string(to_string(silhouette_space));
  kv["exact_silhouette"] = exact_silhouette ? "true" : "false";
  kv["silhouette_sample"] = std::to_string(silhouette_sample);
  kv["report_neighbors"] = std::to_string(report_neighbors);
  kv["cluster_dim"] = std::to_string(cluster_dim);
  kv["kmeans_init"] = kmeans_init == KMeansInit::plus_plus ? "k-means++" : "random";
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  return out.str();
}

}  // namespace fusemb
