#include "dhrb/dataset.hpp"

#include "dhrb/preprocess.hpp"

#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace dhrb {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic{'W', 'N', 'D', 'S'};
constexpr std::size_t kHeaderBytes = 16;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t crc_of(const unsigned char* data, std::size_t len) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (len > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    len -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void quantize_to_float(ImageArrayd& a) { a = a.cast<float>().cast<double>(); }

std::string sample_name(std::size_t index, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "sample_%06zu%s", index, suffix);
  return buf;
}

void write_bytes_atomically(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

const char* to_string(Modality m) { return m == Modality::double_helix ? "dh" : "widefield"; }

Modality parse_modality(const std::string& text) {
  if (text == "dh") return Modality::double_helix;
  if (text == "widefield") return Modality::widefield;
  throw InvalidArgument("unknown modality '" + text + "' (expected dh or widefield)");
}

PsfMode psf_mode(Modality m) { return m == Modality::double_helix ? PsfMode::double_helix : PsfMode::widefield; }

double modality_z_max_um(Modality m) { return m == Modality::double_helix ? 8.0 : 4.0; }

Dpm build_uniform_dpm(Eigen::Index height, Eigen::Index width, double delta_z_um, Modality modality) {
  if (height <= 0 || width <= 0) throw InvalidArgument("DPM dimensions must be positive");
  if (!std::isfinite(delta_z_um) || std::abs(delta_z_um) > modality_z_max_um(modality) + 1e-9) {
    throw OutOfRange("DPM value " + std::to_string(delta_z_um) + " um exceeds the " + to_string(modality) +
                     " range of +-" + std::to_string(modality_z_max_um(modality)) + " um");
  }
  return Dpm{ImageArrayd::Constant(height, width, delta_z_um)};
}

void Sample::validate() const {
  if (!input.same_shape(target) || dpm.height() != input.height() || dpm.width() != input.width()) {
    throw InvalidArgument("sample planes must share one shape");
  }
  if (refocus_target && !refocus_target->same_shape(input)) {
    throw InvalidArgument("refocus target must match the input shape");
  }
}

Sample make_sample(const BeadField& scene, Modality modality, double z_input_um, double z_target_um,
                   const SimulationSetup& setup, std::uint64_t scene_seed) {
  if (std::abs(z_input_um) > modality_z_max_um(modality) + 1e-9) {
    throw OutOfRange("input plane " + std::to_string(z_input_um) + " um outside the " + to_string(modality) + " range");
  }
  if (std::abs(z_target_um) > kConfocalZMaxUm + 1e-9) {
    throw OutOfRange("target plane " + std::to_string(z_target_um) + " um outside the confocal range");
  }
  const Eigen::Index n = setup.patch_px;
  const double saturation = setup.noise ? setup.noise->full_well : NoiseParams{}.full_well;

  PsfModel psf = setup.psf;
  psf.mode = psf_mode(modality);
  PsfModel confocal = setup.psf;
  confocal.mode = PsfMode::confocal;

  Sample s;
  PlaneImage raw = render_plane(scene, z_input_um, psf, setup.optics, n, n);
  if (setup.noise) raw = add_noise(raw, *setup.noise);
  s.input = normalize_image(raw, saturation);
  s.dpm = build_uniform_dpm(n, n, z_target_um - z_input_um, modality);
  s.target = normalize_image(render_plane(scene, z_target_um, confocal, setup.optics, n, n), saturation);
  s.refocus_target = normalize_image(render_plane(scene, z_target_um, psf, setup.optics, n, n), saturation);
  s.meta = SampleMeta{modality, z_input_um, z_target_um, scene_seed};

  quantize_to_float(s.input.pixels);
  quantize_to_float(s.dpm.values);
  quantize_to_float(s.target.pixels);
  quantize_to_float(s.refocus_target->pixels);
  return s;
}

void validate(const TrainingRecipe& r) {
  if (!(r.z_input_range_um >= 0) || r.z_input_range_um > modality_z_max_um(r.modality) + 1e-9) {
    throw InvalidArgument("input z range exceeds the modality range");
  }
  if (!(r.z_target_range_um >= 0) || r.z_target_range_um > kConfocalZMaxUm + 1e-9) {
    throw InvalidArgument("target z range exceeds the confocal range");
  }
  if (r.beads_per_patch < 0) throw InvalidArgument("bead count must be non-negative");
}

Sample draw_training_sample(const TrainingRecipe& recipe, std::size_t index, const SimulationSetup& setup) {
  const std::uint64_t seed = recipe.base_seed + index;
  std::mt19937_64 rng(splitmix64(seed));
  const double zt = std::uniform_real_distribution<double>(-recipe.z_target_range_um, recipe.z_target_range_um)(rng);
  // Keep the propagation distance inside the modality's DPM range.
  const double zmax = modality_z_max_um(recipe.modality);
  const double lo = std::max(-recipe.z_input_range_um, zt - zmax);
  const double hi = std::min(recipe.z_input_range_um, zt + zmax);
  const double zi = lo < hi ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;

  const double slab = setup.optics.native_dof_um;
  const FieldBounds bounds = frame_bounds(setup.patch_px, setup.patch_px, setup.optics, zt - slab, zt + slab);
  const BeadField scene =
      generate_bead_field(recipe.beads_per_patch, bounds, recipe.photon_range, recipe.min_separation_um, seed);

  SimulationSetup local = setup;
  if (local.noise) local.noise->seed = seed;
  return make_sample(scene, recipe.modality, zi, zt, local, seed);
}

void write_planes(const fs::path& path, std::span<const ImageArrayd* const> planes) {
  if (planes.empty()) throw InvalidArgument("a WNDS file needs at least one plane");
  const Eigen::Index h = planes.front()->rows();
  const Eigen::Index w = planes.front()->cols();
  for (const ImageArrayd* p : planes) {
    if (p->rows() != h || p->cols() != w) throw InvalidArgument("WNDS planes must share one shape");
    if (!p->isFinite().all()) throw InvalidArgument("refusing to write non-finite values to " + path.string());
  }

  std::vector<unsigned char> buf;
  buf.reserve(kHeaderBytes + planes.size() * static_cast<std::size_t>(h * w) * 4 + 4);
  buf.insert(buf.end(), kMagic.begin(), kMagic.end());
  put_u32(buf, kWndsVersion);
  put_u32(buf, static_cast<std::uint32_t>(h));
  put_u32(buf, static_cast<std::uint32_t>(w));
  for (const ImageArrayd* p : planes) {
    for (Eigen::Index i = 0; i < p->size(); ++i) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>((*p)(i))));
  }
  put_u32(buf, crc_of(buf.data() + kHeaderBytes, buf.size() - kHeaderBytes));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<ImageArrayd> read_planes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < kHeaderBytes + 4) throw FormatError(path.string() + ": truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), buf.begin())) throw FormatError(path.string() + ": bad magic");
  const std::uint32_t version = get_u32(buf.data() + 4);
  if (version != kWndsVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t h = get_u32(buf.data() + 8);
  const std::uint32_t w = get_u32(buf.data() + 12);
  if (h == 0 || w == 0) throw FormatError(path.string() + ": zero dimensions");
  const std::size_t plane_bytes = static_cast<std::size_t>(h) * w * 4;
  const std::size_t payload = buf.size() - kHeaderBytes - 4;
  if (payload == 0 || payload % plane_bytes != 0) throw FormatError(path.string() + ": truncated payload");

  const std::uint32_t stored = get_u32(buf.data() + buf.size() - 4);
  if (stored != crc_of(buf.data() + kHeaderBytes, payload)) {
    throw ChecksumError(path.string() + ": checksum mismatch");
  }

  std::vector<ImageArrayd> planes;
  const unsigned char* p = buf.data() + kHeaderBytes;
  for (std::size_t k = 0; k < payload / plane_bytes; ++k) {
    ImageArrayd plane(h, w);
    for (Eigen::Index i = 0; i < plane.size(); ++i, p += 4) plane(i) = std::bit_cast<float>(get_u32(p));
    planes.push_back(std::move(plane));
  }
  return planes;
}

void write_plane_file(const fs::path& path, const ImageArrayd& plane) {
  const ImageArrayd* planes[] = {&plane};
  write_planes(path, planes);
}

ImageArrayd read_plane_file(const fs::path& path) {
  auto planes = read_planes(path);
  if (planes.size() != 1) throw FormatError(path.string() + ": expected a single-plane file");
  return std::move(planes.front());
}

namespace {

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const ManifestEntry& e : m.samples) {
    nlohmann::json j{{"file", e.file},
                     {"modality", to_string(e.meta.modality)},
                     {"z_input_um", e.meta.z_input_um},
                     {"z_target_um", e.meta.z_target_um},
                     {"scene_seed", e.meta.scene_seed}};
    if (!e.refocus_file.empty()) j["refocus_file"] = e.refocus_file;
    samples.push_back(std::move(j));
  }
  return {{"version", m.version},
          {"count", m.count},
          {"patch_px", m.patch_px},
          {"pixel_size_nm", m.pixel_size_nm},
          {"modality", to_string(m.modality)},
          {"samples", std::move(samples)}};
}

}  // namespace

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw FormatError("missing manifest " + path.string());
  Manifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != kWndsVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(m.version));
    m.count = j.at("count").get<std::size_t>();
    m.patch_px = j.at("patch_px").get<Eigen::Index>();
    m.pixel_size_nm = j.at("pixel_size_nm").get<double>();
    m.modality = parse_modality(j.at("modality").get<std::string>());
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.file = s.at("file").get<std::string>();
      e.refocus_file = s.value("refocus_file", std::string{});
      e.meta.modality = parse_modality(s.at("modality").get<std::string>());
      e.meta.z_input_um = s.at("z_input_um").get<double>();
      e.meta.z_target_um = s.at("z_target_um").get<double>();
      e.meta.scene_seed = s.at("scene_seed").get<std::uint64_t>();
      m.samples.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m.count != m.samples.size()) throw FormatError(path.string() + ": sample count does not match entries");
  for (const ManifestEntry& e : m.samples) {
    if (!fs::exists(dir / e.file)) throw FormatError("manifest lists missing file " + e.file);
    if (!e.refocus_file.empty() && !fs::exists(dir / e.refocus_file)) {
      throw FormatError("manifest lists missing file " + e.refocus_file);
    }
  }
  return m;
}

DatasetWriter::DatasetWriter(fs::path dir, Modality modality, Eigen::Index patch_px, double pixel_size_nm)
    : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  manifest_.modality = modality;
  manifest_.patch_px = patch_px;
  manifest_.pixel_size_nm = pixel_size_nm;
}

void DatasetWriter::append(const Sample& sample) {
  if (finished_) throw Error("dataset writer already finished");
  sample.validate();
  if (sample.input.height() != manifest_.patch_px || sample.input.width() != manifest_.patch_px) {
    throw InvalidArgument("sample shape does not match the dataset patch size");
  }
  const std::size_t index = manifest_.samples.size();
  ManifestEntry entry{sample_name(index, ".wnds"), {}, sample.meta};
  const ImageArrayd* planes[] = {&sample.input.pixels, &sample.dpm.values, &sample.target.pixels};
  write_planes(dir_ / entry.file, planes);
  if (sample.refocus_target) {
    entry.refocus_file = sample_name(index, ".refocus.wnds");
    write_plane_file(dir_ / entry.refocus_file, sample.refocus_target->pixels);
  }
  manifest_.samples.push_back(std::move(entry));
}

Manifest DatasetWriter::finish() {
  if (!finished_) {
    manifest_.count = manifest_.samples.size();
    write_bytes_atomically(dir_ / "manifest.json", to_json(manifest_).dump(2) + "\n");
    finished_ = true;
  }
  return manifest_;
}

Manifest write_dataset(std::span<const Sample> samples, const fs::path& dir) {
  Modality modality = Modality::double_helix;
  Eigen::Index patch = 64;
  double pixel_nm = OpticalConfig{}.pixel_size_nm;
  if (!samples.empty()) {
    modality = samples.front().meta.modality;
    patch = samples.front().input.height();
    pixel_nm = samples.front().input.pixel_size_nm;
  }
  DatasetWriter writer(dir, modality, patch, pixel_nm);
  for (const Sample& s : samples) writer.append(s);
  return writer.finish();
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  for (const ManifestEntry& e : ds.manifest.samples) {
    auto planes = read_planes(dir / e.file);
    if (planes.size() != 3) throw FormatError(e.file + ": expected three planes");
    Sample s;
    s.input = PlaneImage(std::move(planes[0]), ds.manifest.pixel_size_nm, e.meta.z_input_um);
    s.dpm = Dpm{std::move(planes[1])};
    s.target = PlaneImage(std::move(planes[2]), ds.manifest.pixel_size_nm, e.meta.z_target_um);
    if (!e.refocus_file.empty()) {
      s.refocus_target = PlaneImage(read_plane_file(dir / e.refocus_file), ds.manifest.pixel_size_nm, e.meta.z_target_um);
    }
    s.meta = e.meta;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace dhrb
