#include "perfseg/volume.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "perfseg/error.hpp"

namespace perfseg {

namespace fs = std::filesystem;

const std::map<std::uint8_t, std::string>& default_legend() {
  static const std::map<std::uint8_t, std::string> legend{
      {0, "background"}, {1, "tumour"}, {2, "lumen"}, {3, "bladder"}};
  return legend;
}

std::array<int, 3> VolumeHeader::coords(std::size_t voxel) const {
  const auto nx_ = static_cast<std::size_t>(dims[0]);
  const auto ny_ = static_cast<std::size_t>(dims[1]);
  return {static_cast<int>(voxel % nx_), static_cast<int>((voxel / nx_) % ny_),
          static_cast<int>(voxel / (nx_ * ny_))};
}

std::array<double, 3> VolumeHeader::position_mm(std::size_t voxel) const {
  const auto c = coords(voxel);
  return {c[0] * spacing_mm[0], c[1] * spacing_mm[1], c[2] * spacing_mm[2]};
}

void VolumeHeader::validate() const {
  for (int d : dims) {
    if (d < 1) throw MalformedInputError("volume dimension must be >= 1");
  }
  for (double s : spacing_mm) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw MalformedInputError("voxel spacing must be positive");
    }
  }
  if (dims[3] > 1 && !(dt_s > 0.0)) {
    throw MalformedInputError("dt_s must be positive for dynamic volumes");
  }
  if (!std::isfinite(t0_s)) throw MalformedInputError("t0_s must be finite");
}

VolumeHeader VolumeHeader::spatial() const {
  VolumeHeader h = *this;
  h.dims[3] = 1;
  return h;
}

bool Box::contains(const Box& other) const {
  for (int a = 0; a < 3; ++a) {
    if (other.lo[a] < lo[a] || other.hi[a] > hi[a]) return false;
  }
  return true;
}

Volume4D::Volume4D(VolumeHeader header) : header_(header) {
  header_.validate();
  data_.assign(header_.samples(), 0.0f);
}

Volume4D::Volume4D(VolumeHeader header, std::vector<float> data)
    : header_(header), data_(std::move(data)) {
  header_.validate();
  if (data_.size() != header_.samples()) {
    std::ostringstream msg;
    msg << "volume data length " << data_.size() << " does not match dims ("
        << header_.samples() << " samples expected)";
    throw MalformedInputError(msg.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw MalformedInputError("non-finite sample at index " + std::to_string(i));
    }
  }
}

LabelVolume::LabelVolume(VolumeHeader header)
    : LabelVolume(header, std::vector<std::uint8_t>(header.spatial().voxels(), 0)) {}

LabelVolume::LabelVolume(VolumeHeader header, std::vector<std::uint8_t> labels,
                         std::map<std::uint8_t, std::string> legend)
    : header_(header.spatial()), labels_(std::move(labels)), legend_(std::move(legend)) {
  header_.validate();
  if (labels_.size() != header_.voxels()) {
    throw MalformedInputError("label data length " + std::to_string(labels_.size()) +
                              " does not match dims");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!legend_.contains(labels_[i])) {
      throw MalformedInputError("label " + std::to_string(labels_[i]) + " at index " +
                                std::to_string(i) + " is not in the legend");
    }
  }
}

std::vector<std::uint8_t> LabelVolume::mask_of(std::uint8_t label) const {
  std::vector<std::uint8_t> mask(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) mask[i] = labels_[i] == label ? 1 : 0;
  return mask;
}

// --- cropping -------------------------------------------------------------

namespace {

void check_box(const VolumeHeader& h, const Box& box) {
  if (box.empty()) throw DataError("crop box is empty");
  if (!Box::full(h).contains(box)) throw DataError("crop box exceeds volume dims");
}

template <typename T, typename F>
std::vector<T> crop_samples(const VolumeHeader& h, const Box& box, int frames, F&& get) {
  std::vector<T> out;
  out.reserve(box.voxels() * frames);
  for (int t = 0; t < frames; ++t)
    for (int z = box.lo[2]; z < box.hi[2]; ++z)
      for (int y = box.lo[1]; y < box.hi[1]; ++y)
        for (int x = box.lo[0]; x < box.hi[0]; ++x)
          out.push_back(get(h.index(x, y, z), t));
  return out;
}

VolumeHeader cropped_header(const VolumeHeader& h, const Box& box) {
  VolumeHeader out = h;
  for (int a = 0; a < 3; ++a) out.dims[a] = box.extent(a);
  return out;
}

}  // namespace

Volume4D crop(const Volume4D& v, const Box& box) {
  const auto& h = v.header();
  check_box(h, box);
  auto data = crop_samples<float>(h, box, h.frames(),
                                  [&](std::size_t i, int t) { return v.sample(i, t); });
  return Volume4D(cropped_header(h, box), std::move(data));
}

LabelVolume crop(const LabelVolume& v, const Box& box) {
  const auto& h = v.header();
  check_box(h, box);
  auto labels = crop_samples<std::uint8_t>(h, box, 1,
                                           [&](std::size_t i, int) { return v.labels()[i]; });
  return LabelVolume(cropped_header(h, box), std::move(labels), v.legend());
}

LabelVolume embed(const LabelVolume& cropped, const Box& box, const VolumeHeader& full) {
  const VolumeHeader fh = full.spatial();
  check_box(fh, box);
  std::vector<std::uint8_t> labels(fh.voxels(), 0);
  std::size_t k = 0;
  for (int z = box.lo[2]; z < box.hi[2]; ++z)
    for (int y = box.lo[1]; y < box.hi[1]; ++y)
      for (int x = box.lo[0]; x < box.hi[0]; ++x) labels[fh.index(x, y, z)] = cropped.labels()[k++];
  return LabelVolume(fh, std::move(labels), cropped.legend());
}

std::vector<double> embed(std::span<const double> cropped, const Box& box,
                          const VolumeHeader& full, double fill) {
  const VolumeHeader fh = full.spatial();
  check_box(fh, box);
  if (cropped.size() != box.voxels()) throw DataError("embed: size does not match box");
  std::vector<double> out(fh.voxels(), fill);
  std::size_t k = 0;
  for (int z = box.lo[2]; z < box.hi[2]; ++z)
    for (int y = box.lo[1]; y < box.hi[1]; ++y)
      for (int x = box.lo[0]; x < box.hi[0]; ++x) out[fh.index(x, y, z)] = cropped[k++];
  return out;
}

// --- I/O --------------------------------------------------------------------

void append_le_f32(std::vector<char>& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

float read_le_f32(const char* bytes) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
  }
  return std::bit_cast<float>(bits);
}

fs::path raw_path_for(const fs::path& header_path) {
  fs::path raw = header_path;
  raw.replace_extension(".raw");
  return raw;
}

nlohmann::json header_to_json(const VolumeHeader& h, const std::string& kind) {
  return {{"dims", h.dims},
          {"spacing_mm", h.spacing_mm},
          {"dt_s", h.dt_s},
          {"t0_s", h.t0_s},
          {"kind", kind}};
}

VolumeHeader header_from_json(const nlohmann::json& j) {
  VolumeHeader h;
  try {
    h.dims = j.at("dims").get<std::array<int, 4>>();
    h.spacing_mm = j.at("spacing_mm").get<std::array<double, 3>>();
    h.dt_s = j.value("dt_s", 1.0);
    h.t0_s = j.value("t0_s", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(std::string("bad volume header: ") + e.what());
  }
  h.validate();
  return h;
}

nlohmann::json read_header_json(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw MalformedInputError("cannot open " + header_path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(header_path.string() + ": " + e.what());
  }
}

namespace {

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedInputError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json merged(nlohmann::json base, const nlohmann::json& extra) {
  if (extra.is_object()) {
    for (auto it = extra.begin(); it != extra.end(); ++it) base[it.key()] = it.value();
  }
  return base;
}

}  // namespace

Volume4D read_volume(const fs::path& header_path) {
  const auto j = read_header_json(header_path);
  const VolumeHeader h = header_from_json(j);
  if (j.value("kind", std::string("scalar")) != "scalar") {
    throw MalformedInputError(header_path.string() + " is not a scalar volume");
  }
  const auto bytes = read_bytes(raw_path_for(header_path));
  if (bytes.size() % 4 != 0 || bytes.size() / 4 != h.samples()) {
    throw MalformedInputError(header_path.string() + ": raw payload holds " +
                              std::to_string(bytes.size() / 4) + " floats, dims require " +
                              std::to_string(h.samples()));
  }
  std::vector<float> data(h.samples());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = read_le_f32(bytes.data() + 4 * i);
  return Volume4D(h, std::move(data));
}

void write_volume(const Volume4D& v, const fs::path& header_path, const nlohmann::json& extra) {
  std::vector<char> bytes;
  bytes.reserve(v.size() * 4);
  for (float f : v.data()) append_le_f32(bytes, f);
  write_bytes(raw_path_for(header_path), bytes);
  write_json(header_path, merged(header_to_json(v.header(), "scalar"), extra));
}

LabelVolume read_labels(const fs::path& header_path) {
  const auto j = read_header_json(header_path);
  const VolumeHeader h = header_from_json(j);
  if (j.value("kind", std::string()) != "label") {
    throw MalformedInputError(header_path.string() + " is not a label volume");
  }
  if (h.frames() != 1) throw MalformedInputError("label volumes must have T = 1");
  std::map<std::uint8_t, std::string> legend = default_legend();
  if (j.contains("legend")) {
    legend.clear();
    for (auto it = j["legend"].begin(); it != j["legend"].end(); ++it) {
      legend[static_cast<std::uint8_t>(std::stoi(it.key()))] = it.value().get<std::string>();
    }
  }
  const auto bytes = read_bytes(raw_path_for(header_path));
  if (bytes.size() != h.voxels()) {
    throw MalformedInputError(header_path.string() + ": raw payload holds " +
                              std::to_string(bytes.size()) + " labels, dims require " +
                              std::to_string(h.voxels()));
  }
  std::vector<std::uint8_t> labels(bytes.begin(), bytes.end());
  return LabelVolume(h, std::move(labels), std::move(legend));
}

void write_labels(const LabelVolume& v, const fs::path& header_path, const nlohmann::json& extra) {
  std::vector<char> bytes(v.labels().begin(), v.labels().end());
  write_bytes(raw_path_for(header_path), bytes);
  auto j = header_to_json(v.header(), "label");
  nlohmann::json legend = nlohmann::json::object();
  for (const auto& [k, name] : v.legend()) legend[std::to_string(k)] = name;
  j["legend"] = legend;
  write_json(header_path, merged(j, extra));
}

Volume4D load_volume(const fs::path& path) {
  if (path.extension() == ".nii") return read_nifti(path);
  return read_volume(path);
}

}  // namespace perfseg
