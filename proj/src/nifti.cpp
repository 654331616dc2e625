#include <cmath>
#include <cstring>
#include <fstream>

#include "perfseg/error.hpp"
#include "perfseg/volume.hpp"

namespace perfseg {

namespace {

constexpr std::size_t kHeaderSize = 348;

std::int16_t le_i16(const char* p) {
  return static_cast<std::int16_t>(static_cast<unsigned char>(p[0]) |
                                   (static_cast<unsigned char>(p[1]) << 8));
}

std::int32_t le_i32(const char* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return static_cast<std::int32_t>(v);
}

double spatial_unit_to_mm(int code) {
  switch (code & 0x07) {
    case 1: return 1000.0;  // metre
    case 3: return 0.001;   // micron
    default: return 1.0;    // mm or unknown
  }
}

double time_unit_to_s(int code) {
  switch (code & 0x38) {
    case 16: return 1e-3;
    case 24: return 1e-6;
    default: return 1.0;
  }
}

}  // namespace

Volume4D read_nifti(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedInputError("cannot open " + path.string());
  std::vector<char> bytes(std::istreambuf_iterator<char>(in), {});
  if (bytes.size() < kHeaderSize) throw MalformedInputError(path.string() + ": truncated NIfTI header");
  const char* hdr = bytes.data();
  if (le_i32(hdr) != static_cast<std::int32_t>(kHeaderSize)) {
    throw MalformedInputError(path.string() + ": not a little-endian NIfTI-1 file");
  }
  if (std::memcmp(hdr + 344, "n+1\0", 4) != 0) {
    throw MalformedInputError(path.string() + ": missing n+1 magic");
  }

  const int ndim = le_i16(hdr + 40);
  if (ndim < 1 || ndim > 4) throw MalformedInputError(path.string() + ": unsupported dim[0]");
  VolumeHeader h;
  for (int a = 0; a < 4; ++a) h.dims[a] = a < ndim ? le_i16(hdr + 42 + 2 * a) : 1;
  const int units = static_cast<unsigned char>(hdr[123]);
  for (int a = 0; a < 3; ++a) {
    const double p = std::fabs(read_le_f32(hdr + 80 + 4 * a));
    h.spacing_mm[a] = (p > 0.0 ? p : 1.0) * spatial_unit_to_mm(units);
  }
  const double dt = read_le_f32(hdr + 92);
  h.dt_s = dt > 0.0 ? dt * time_unit_to_s(units) : 1.0;
  h.t0_s = read_le_f32(hdr + 136) * time_unit_to_s(units);
  h.validate();

  const int datatype = le_i16(hdr + 70);
  std::size_t width = 0;
  switch (datatype) {
    case 2: width = 1; break;
    case 4: width = 2; break;
    case 16: width = 4; break;
    default:
      throw MalformedInputError(path.string() + ": unsupported NIfTI datatype " +
                                std::to_string(datatype));
  }
  const auto offset = static_cast<std::size_t>(read_le_f32(hdr + 108));
  if (offset < kHeaderSize || offset + width * h.samples() > bytes.size()) {
    throw MalformedInputError(path.string() + ": payload shorter than dims require");
  }
  const float slope_raw = read_le_f32(hdr + 112);
  const double slope = (slope_raw == 0.0f || !std::isfinite(slope_raw)) ? 1.0 : slope_raw;
  const double inter = std::isfinite(read_le_f32(hdr + 116)) ? read_le_f32(hdr + 116) : 0.0;

  std::vector<float> data(h.samples());
  const char* payload = bytes.data() + offset;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double v = 0.0;
    switch (datatype) {
      case 2: v = static_cast<unsigned char>(payload[i]); break;
      case 4: v = le_i16(payload + 2 * i); break;
      default: v = read_le_f32(payload + 4 * i); break;
    }
    data[i] = static_cast<float>(v * slope + inter);
  }
  return Volume4D(h, std::move(data));
}

}  // namespace perfseg
