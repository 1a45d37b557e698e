#include "dmlp/geo_encoding.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dmlp/errors.hpp"

namespace dmlp::geo {

namespace {

void check_range(const char* field, double value, double lo, double hi, bool hi_open) {
  const bool ok = std::isfinite(value) && value >= lo && (hi_open ? value < hi : value <= hi);
  if (!ok)
    throw ValidationError(std::string(field) + " out of range: " + std::to_string(value));
}

// x = q/2 + r with integer q and |r| <= 1/4.
struct QuarterTurn {
  long long quadrant;
  double remainder;
};

QuarterTurn reduce(double x) {
  const double q = std::nearbyint(2.0 * x);
  return {static_cast<long long>(q), x - 0.5 * q};
}

}  // namespace

double sin_pi(double x) {
  const auto [q, r] = reduce(x);
  const double s = std::sin(std::numbers::pi * r);
  const double c = std::cos(std::numbers::pi * r);
  switch (((q % 4) + 4) % 4) {
    case 0: return s;
    case 1: return c;
    case 2: return r == 0.0 ? 0.0 : -s;
    default: return -c;
  }
}

double cos_pi(double x) {
  const auto [q, r] = reduce(x);
  const double s = std::sin(std::numbers::pi * r);
  const double c = std::cos(std::numbers::pi * r);
  switch (((q % 4) + 4) % 4) {
    case 0: return c;
    case 1: return r == 0.0 ? 0.0 : -s;
    case 2: return -c;
    default: return s;
  }
}

void validate_record(const MetadataRecord& record) {
  if (record.lat) check_range("lat", *record.lat, -90.0, 90.0, false);
  if (record.lon) check_range("lon", *record.lon, -180.0, 180.0, false);
  if (record.date) check_range("date", *record.date, 0.0, 1.0, true);
}

NormalizedTriple normalize_metadata(const MetadataRecord& record) {
  validate_record(record);
  if (!record.lat) throw ValidationError("lat is absent; cannot normalize");
  if (!record.lon) throw ValidationError("lon is absent; cannot normalize");
  if (!record.date) throw ValidationError("date is absent; cannot normalize");
  const double lon = *record.lon == 180.0 ? -180.0 : *record.lon;
  return NormalizedTriple{{*record.lat / 90.0, lon / 180.0, 2.0 * *record.date - 1.0}};
}

EncodedMetadata cyclic_encode(const NormalizedTriple& normalized) {
  EncodedMetadata out;
  for (std::size_t i = 0; i < 3; ++i) {
    out.values[i] = sin_pi(normalized.values[i]);
    out.values[i + 3] = cos_pi(normalized.values[i]);
  }
  return out;
}

EncodedMetadata encode_record(const MetadataRecord& record) {
  validate_record(record);
  if (!record.complete()) return EncodedMetadata{{}, true};
  return cyclic_encode(normalize_metadata(record));
}

}  // namespace dmlp::geo
