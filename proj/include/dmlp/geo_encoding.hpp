#pragma once

#include <array>
#include <optional>

namespace dmlp::geo {

// Raw per-image metadata. Absent values are std::nullopt, never sentinels.
struct MetadataRecord {
  std::optional<double> lat;   // degrees, [-90, 90]
  std::optional<double> lon;   // degrees, [-180, 180]
  std::optional<double> date;  // fraction of the year, [0, 1)

  bool complete() const { return lat && lon && date; }
};

// Each component in [-1, 1].
struct NormalizedTriple {
  std::array<double, 3> values{};
};

inline constexpr std::size_t kEncodedDim = 6;

// [sin(pi*lat'), sin(pi*lon'), sin(pi*date'), cos(pi*lat'), cos(pi*lon'), cos(pi*date')]
// or all zeros with `missing` set.
struct EncodedMetadata {
  std::array<double, kEncodedDim> values{};
  bool missing = false;
};

// Throws ValidationError naming the field when a present value is out of range.
void validate_record(const MetadataRecord& record);

// lat/90, lon/180 (lon = 180 is canonicalized to -180), 2*date - 1.
// Every field must be present.
NormalizedTriple normalize_metadata(const MetadataRecord& record);

EncodedMetadata cyclic_encode(const NormalizedTriple& normalized);

// Any absent field yields the all-zero encoding with `missing` set.
EncodedMetadata encode_record(const MetadataRecord& record);

// sin(pi x) and cos(pi x) with exact results at multiples of 1/2 and exact
// period 2, by reducing x to the nearest quarter turn first.
double sin_pi(double x);
double cos_pi(double x);

}  // namespace dmlp::geo
