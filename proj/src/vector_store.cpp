#include "fusemb/vector_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>
#include <set>

#include "fusemb/error.hpp"
#include "fusemb/interchange.hpp"
#include "fusemb/parallel.hpp"

namespace fusemb {

using nlohmann::json;

namespace {

template <class DistanceOf>
NeighborList select_nearest(std::size_t count, std::span<const std::string> ids, std::size_t k,
                            DistanceOf&& distance_of) {
  if (count == 0) fail(ErrorCode::EmptyStore, "nearest-neighbor query against an empty store");
  if (k == 0) fail(ErrorCode::InvalidInput, "k must be at least 1");

  std::vector<double> dist(count);
  parallel_for(count, [&](std::size_t i) { dist[i] = std::sqrt(distance_of(i)); }, 1024);

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, count);
  auto closer = [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    closer);

  NeighborList out;
  out.entries.reserve(take);
  for (std::size_t r = 0; r < take; ++r)
    out.entries.push_back({ids[order[r]], dist[order[r]], r + 1, order[r]});
  return out;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void commit(const std::filesystem::path& tmp, const std::filesystem::path& dest) {
  std::error_code ec;
  std::filesystem::rename(tmp, dest, ec);
  if (ec) fail(ErrorCode::IoError, "cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace

NeighborList exact_knn(const Matrix& rows, std::span<const std::string> ids,
                       std::span<const double> query, std::size_t k) {
  if (!rows.empty() && query.size() != rows.cols())
    fail(ErrorCode::DimensionMismatch, "query has dimension " + std::to_string(query.size()) +
                                           ", rows have " + std::to_string(rows.cols()));
  if (ids.size() != rows.rows())
    fail(ErrorCode::InvalidInput, "id count does not match row count");
  return select_nearest(rows.rows(), ids, k,
                        [&](std::size_t i) { return squared_distance(rows.row(i), query); });
}

VectorStore::VectorStore(std::uint32_t dim, StoreManifest manifest)
    : dim_(dim), manifest_(std::move(manifest)) {
  if (dim == 0) fail(ErrorCode::InvalidInput, "store dimension must be positive");
}

std::optional<std::size_t> VectorStore::find(const std::string& post_id) const {
  const auto it = index_.find(post_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void VectorStore::append(const std::string& post_id, std::span<const double> values,
                         Metadata meta) {
  if (values.size() != dim_)
    fail(ErrorCode::DimensionMismatch, "row '" + post_id + "' has dimension " +
                                           std::to_string(values.size()) + ", store has " +
                                           std::to_string(dim_));
  if (index_.contains(post_id))
    fail(ErrorCode::DuplicateId, "post '" + post_id + "' is already in the store");
  for (double v : values) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f))
      fail(ErrorCode::DegenerateVector, "row '" + post_id + "' has a non-finite component");
  }
  for (double v : values) rows_.push_back(static_cast<float>(v));
  index_.emplace(post_id, ids_.size());
  ids_.push_back(post_id);
  meta_.push_back(std::move(meta));
}

std::size_t VectorStore::ingest(std::istream& in) {
  InterchangeReader reader(in, dim_);
  std::vector<InterchangeRecord> batch;
  std::set<std::string> batch_ids;
  while (auto rec = reader.next()) {
    if (rec->modality != Modality::fused)
      fail(ErrorCode::ParseError,
           "line " + std::to_string(reader.line_number()) + ": store rows must be fused, got " +
               std::string(to_string(rec->modality)) + " (run fuse on per-modality records)");
    if (index_.contains(rec->post_id) || !batch_ids.insert(rec->post_id).second)
      fail(ErrorCode::DuplicateId, "line " + std::to_string(reader.line_number()) +
                                       ": duplicate fused post_id '" + rec->post_id + "'");
    for (double v : rec->vector)
      if (!std::isfinite(static_cast<float>(v)))
        fail(ErrorCode::ParseError, "line " + std::to_string(reader.line_number()) +
                                        ": value overflows 32-bit storage");
    batch.push_back(std::move(*rec));
  }
  for (auto& rec : batch) append(rec.post_id, rec.vector, std::move(rec.meta));
  return batch.size();
}

NeighborList VectorStore::knn(std::span<const double> query, std::size_t k) const {
  if (query.size() != dim_)
    fail(ErrorCode::DimensionMismatch, "query has dimension " + std::to_string(query.size()) +
                                           ", store has " + std::to_string(dim_));
  return select_nearest(count(), ids_, k, [&](std::size_t i) {
    const float* r = rows_.data() + i * dim_;
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double t = static_cast<double>(r[j]) - query[j];
      s += t * t;
    }
    return s;
  });
}

void VectorStore::dump(std::ostream& out,
                       std::optional<std::span<const std::string>> selector) const {
  std::vector<std::size_t> rows;
  if (selector) {
    for (const auto& id : *selector) {
      const auto r = find(id);
      if (!r) fail(ErrorCode::UnknownId, "unknown post_id '" + id + "'");
      rows.push_back(*r);
    }
    std::ranges::sort(rows);
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  } else {
    rows.resize(count());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  for (std::size_t r : rows) {
    const auto v = row(r);
    InterchangeRecord rec{ids_[r], Modality::fused, 0, {v.begin(), v.end()}, meta_[r]};
    out << format_record(rec, NumberPrecision::f32) << '\n';
  }
}

Matrix VectorStore::to_matrix() const {
  Matrix m(count(), dim_);
  for (std::size_t i = 0; i < rows_.size(); ++i) m.data()[i] = rows_[i];
  return m;
}

std::filesystem::path VectorStore::sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".ids";
  return p;
}

void VectorStore::save(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  const auto side = sidecar_path(path);
  auto side_tmp = side;
  side_tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write("EMBD", 4);
    put_u32(out, kFormatVersion);
    put_u32(out, dim_);
    put_u64(out, count());
    for (float f : rows_) put_u32(out, std::bit_cast<std::uint32_t>(f));
    if (!out) fail(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  {
    std::ofstream out(side_tmp, std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + side_tmp.string());
    json manifest = {{"format", "fusemb-ids"},
                     {"version", kFormatVersion},
                     {"dim", dim_},
                     {"count", count()},
                     {"created", manifest_.created},
                     {"fusion_config_hash", manifest_.fusion_config_hash}};
    out << json{{"manifest", manifest}}.dump() << '\n';
    for (std::size_t i = 0; i < count(); ++i)
      out << json{{"post_id", ids_[i]}, {"meta", meta_[i]}}.dump() << '\n';
    if (!out) fail(ErrorCode::IoError, "write failed for " + side_tmp.string());
  }
  commit(side_tmp, side);
  commit(tmp, path);
}

VectorStore VectorStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open store " + path.string());
  unsigned char header[kHeaderBytes];
  if (!in.read(reinterpret_cast<char*>(header), kHeaderBytes) ||
      std::memcmp(header, "EMBD", 4) != 0)
    fail(ErrorCode::ParseError, path.string() + " is not an EMBD store");
  const auto version = static_cast<std::uint32_t>(get_le(header + 4, 4));
  if (version != kFormatVersion)
    fail(ErrorCode::ParseError, "unsupported store version " + std::to_string(version));
  const auto dim = static_cast<std::uint32_t>(get_le(header + 8, 4));
  const std::uint64_t count = get_le(header + 12, 8);

  const auto expected = kHeaderBytes + count * dim * sizeof(float);
  if (std::filesystem::file_size(path) != expected)
    fail(ErrorCode::ParseError, path.string() + " size does not match its header");

  std::vector<unsigned char> raw(count * dim * sizeof(float));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) fail(ErrorCode::IoError, "short read on " + path.string());

  std::ifstream side(sidecar_path(path));
  if (!side) fail(ErrorCode::IoError, "cannot open sidecar " + sidecar_path(path).string());
  std::string line;
  StoreManifest manifest;
  if (!std::getline(side, line)) fail(ErrorCode::ParseError, "sidecar has no manifest line");
  try {
    const auto m = json::parse(line).at("manifest");
    manifest.created = m.value("created", "");
    manifest.fusion_config_hash = m.value("fusion_config_hash", "");
    if (m.at("dim").get<std::uint32_t>() != dim || m.at("count").get<std::uint64_t>() != count)
      fail(ErrorCode::ParseError, "sidecar manifest disagrees with store header");
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("sidecar line 1: ") + e.what());
  }

  VectorStore store(dim, manifest);
  std::vector<double> values(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    if (!std::getline(side, line))
      fail(ErrorCode::ParseError, "sidecar ends after " + std::to_string(r) + " ids");
    std::string id;
    Metadata meta;
    try {
      const auto j = json::parse(line);
      id = j.at("post_id").get<std::string>();
      if (j.contains("meta")) meta = j.at("meta").get<Metadata>();
    } catch (const json::exception& e) {
      fail(ErrorCode::ParseError, "sidecar line " + std::to_string(r + 2) + ": " + e.what());
    }
    for (std::uint32_t c = 0; c < dim; ++c)
      values[c] = std::bit_cast<float>(
          static_cast<std::uint32_t>(get_le(raw.data() + (r * dim + c) * 4, 4)));
    store.append(id, values, std::move(meta));
  }
  return store;
}

}  // namespace fusemb
