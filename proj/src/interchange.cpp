#include "fusemb/interchange.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <tuple>

#include "fusemb/error.hpp"
#include "fusemb/format.hpp"

namespace fusemb {

using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + what);
}

bool is_skippable(std::string_view line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string_view::npos || line[pos] == '#';
}

}  // namespace

InterchangeRecord parse_record(std::string_view line, std::size_t line_no,
                               std::optional<std::size_t> expected_dim) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    parse_fail(line_no, std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) parse_fail(line_no, "record is not an object");

  InterchangeRecord rec;
  const auto pid = j.find("post_id");
  if (pid == j.end() || !pid->is_string() || pid->get_ref<const std::string&>().empty())
    parse_fail(line_no, "missing or empty post_id");
  rec.post_id = pid->get<std::string>();

  const auto mod = j.find("modality");
  if (mod == j.end() || !mod->is_string()) parse_fail(line_no, "missing modality");
  const auto m = parse_modality(mod->get_ref<const std::string&>());
  if (!m) parse_fail(line_no, "unknown modality '" + mod->get<std::string>() + "'");
  rec.modality = *m;

  const auto idx = j.find("index");
  if (idx == j.end()) {
    rec.index = 0;
  } else if (idx->is_number_unsigned()) {
    rec.index = idx->get<std::size_t>();
  } else if (idx->is_number_integer() && idx->get<long long>() >= 0) {
    rec.index = static_cast<std::size_t>(idx->get<long long>());
  } else {
    parse_fail(line_no, "index must be a non-negative integer");
  }

  const auto vec = j.find("vector");
  if (vec == j.end() || !vec->is_array() || vec->empty())
    parse_fail(line_no, "missing or empty vector");
  rec.vector.reserve(vec->size());
  for (const auto& v : *vec) {
    if (!v.is_number()) parse_fail(line_no, "vector holds a non-number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) parse_fail(line_no, "vector holds a non-finite value");
    rec.vector.push_back(x);
  }
  if (expected_dim && rec.vector.size() != *expected_dim)
    parse_fail(line_no, "vector length " + std::to_string(rec.vector.size()) + ", expected " +
                            std::to_string(*expected_dim));

  if (const auto meta = j.find("meta"); meta != j.end() && !meta->is_null()) {
    if (!meta->is_object()) parse_fail(line_no, "meta must be an object");
    for (const auto& [k, v] : meta->items())
      rec.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return rec;
}

std::optional<InterchangeRecord> InterchangeReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (is_skippable(line)) continue;
    return parse_record(line, line_no_, expected_dim_);
  }
  return std::nullopt;
}

std::vector<InterchangeRecord> read_records(std::istream& in,
                                            std::optional<std::size_t> expected_dim) {
  InterchangeReader reader(in, expected_dim);
  std::vector<InterchangeRecord> out;
  while (auto rec = reader.next()) out.push_back(std::move(*rec));
  return out;
}

std::string format_record(const InterchangeRecord& record, NumberPrecision precision) {
  std::string out = "{\"post_id\":";
  out += json(record.post_id).dump();
  out += ",\"modality\":\"";
  out += to_string(record.modality);
  out += "\",\"index\":";
  out += std::to_string(record.index);
  out += ",\"vector\":[";
  for (std::size_t i = 0; i < record.vector.size(); ++i) {
    if (i) out += ',';
    out += precision == NumberPrecision::f32 ? format_number(static_cast<float>(record.vector[i]))
                                             : format_number(record.vector[i]);
  }
  out += "],\"meta\":";
  out += json(record.meta).dump();
  out += '}';
  return out;
}

GroupedListings group_listings(std::span<const InterchangeRecord> records) {
  GroupedListings out;
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<std::pair<std::size_t, const InterchangeRecord*>>> images;
  std::set<std::tuple<std::string, Modality, std::size_t>> seen;

  for (const auto& rec : records) {
    if (rec.modality == Modality::audio || rec.modality == Modality::fused) {
      ++out.ignored_records;
      continue;
    }
    if (!seen.emplace(rec.post_id, rec.modality, rec.index).second)
      fail(ErrorCode::DuplicateId, "duplicate " + std::string(to_string(rec.modality)) +
                                       " record for post '" + rec.post_id + "' index " +
                                       std::to_string(rec.index));
    auto [it, inserted] = slot.emplace(rec.post_id, out.listings.size());
    if (inserted) {
      out.listings.push_back(ListingRecord{rec.post_id, std::nullopt, {}, {}});
      images.emplace_back();
    }
    ListingRecord& listing = out.listings[it->second];
    for (const auto& [k, v] : rec.meta) listing.metadata.emplace(k, v);
    if (rec.modality == Modality::text) {
      if (rec.index != 0)
        fail(ErrorCode::ParseError, "text record for post '" + rec.post_id + "' has index " +
                                        std::to_string(rec.index) + ", expected 0");
      listing.text.emplace(rec.vector, Modality::text, rec.post_id);
    } else {
      images[it->second].emplace_back(rec.index, &rec);
    }
  }

  for (std::size_t i = 0; i < out.listings.size(); ++i) {
    auto& imgs = images[i];
    std::ranges::sort(imgs, {}, &std::pair<std::size_t, const InterchangeRecord*>::first);
    for (const auto& [index, rec] : imgs)
      out.listings[i].images.emplace_back(rec->vector, Modality::image, rec->post_id);
  }
  return out;
}

}  // namespace fusemb
