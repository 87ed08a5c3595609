#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusemb/embedding.hpp"

namespace fusemb {

// One line of the embedding interchange format:
//   {"post_id": "...", "modality": "text", "index": 0, "vector": [...], "meta": {...}}
// Lines that are blank or start with '#' (adapter header comments) are skipped.
struct InterchangeRecord {
  std::string post_id;
  Modality modality = Modality::text;
  std::size_t index = 0;
  std::vector<double> vector;
  Metadata meta;
};

// Parses one line. Throws ParseError mentioning line_no on malformed JSON,
// missing fields, non-finite values or a vector length other than
// expected_dim (when given).
InterchangeRecord parse_record(std::string_view line, std::size_t line_no,
                               std::optional<std::size_t> expected_dim = std::nullopt);

class InterchangeReader {
 public:
  explicit InterchangeReader(std::istream& in, std::optional<std::size_t> expected_dim = std::nullopt)
      : in_(in), expected_dim_(expected_dim) {}

  std::optional<InterchangeRecord> next();
  std::size_t line_number() const noexcept { return line_no_; }

 private:
  std::istream& in_;
  std::optional<std::size_t> expected_dim_;
  std::size_t line_no_ = 0;
};

std::vector<InterchangeRecord> read_records(std::istream& in,
                                            std::optional<std::size_t> expected_dim = std::nullopt);

enum class NumberPrecision { f32, f64 };

// Serializes a record as a single line (no trailing newline). Numbers use the
// shortest representation that round-trips at the requested precision.
std::string format_record(const InterchangeRecord& record,
                          NumberPrecision precision = NumberPrecision::f64);

struct GroupedListings {
  std::vector<ListingRecord> listings;  // in order of first appearance
  std::size_t ignored_records = 0;      // audio / fused lines, not fusion inputs
};

// Groups text and image records by post_id. Images are ordered by index.
// Throws DuplicateId on a repeated (post_id, modality, index) and
// ParseError on a text record with index != 0.
GroupedListings group_listings(std::span<const InterchangeRecord> records);

}  // namespace fusemb
