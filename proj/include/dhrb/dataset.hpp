#ifndef DHRB_DATASET_HPP
#define DHRB_DATASET_HPP

#include "dhrb/image.hpp"
#include "dhrb/optics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dhrb {

/// The file is malformed: bad magic, unknown version, truncated, or failed checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

enum class Modality { double_helix, widefield };

const char* to_string(Modality m);
Modality parse_modality(const std::string& text);
PsfMode psf_mode(Modality m);

/// Largest |input defocus| the modality is trained over (8 um DH, 4 um wide-field).
double modality_z_max_um(Modality m);

/// Largest |target plane| for confocal targets.
inline constexpr double kConfocalZMaxUm = 2.0;

/// Digital propagation matrix: per-pixel axial refocusing distance in um
/// (z_target - z_input).
struct Dpm {
  ImageArrayd values;

  Eigen::Index height() const { return values.rows(); }
  Eigen::Index width() const { return values.cols(); }
};

Dpm build_uniform_dpm(Eigen::Index height, Eigen::Index width, double delta_z_um, Modality modality);

struct SampleMeta {
  Modality modality = Modality::double_helix;
  double z_input_um = 0.0;
  double z_target_um = 0.0;
  std::uint64_t scene_seed = 0;
};

struct Sample {
  PlaneImage input;
  Dpm dpm;
  PlaneImage target;
  /// Same-modality noise-free render at the target plane; intermediate
  /// supervision for the refocusing stage. Empty when not generated.
  std::optional<PlaneImage> refocus_target;
  SampleMeta meta;

  /// Throws InvalidArgument unless input, DPM, target (and refocus target) share one shape.
  void validate() const;
};

/// Imaging setup shared by every sample of a dataset.
struct SimulationSetup {
  OpticalConfig optics;
  PsfModel psf;
  std::optional<NoiseParams> noise = NoiseParams{};
  Eigen::Index patch_px = 64;
};

Sample make_sample(const BeadField& scene, Modality modality, double z_input_um, double z_target_um,
                   const SimulationSetup& setup, std::uint64_t scene_seed = 0);

/// Recipe for randomized training pairs: input and target planes drawn
/// uniformly from their ranges, beads on a slide at the target plane.
struct TrainingRecipe {
  Modality modality = Modality::double_helix;
  double z_input_range_um = 8.0;
  double z_target_range_um = 2.0;
  int beads_per_patch = 4;
  std::pair<double, double> photon_range{15000.0, 25000.0};
  double min_separation_um = 0.5;
  std::uint64_t base_seed = 0;
};

void validate(const TrainingRecipe& recipe);

/// Sample `index` of the recipe; depends only on (base_seed + index).
Sample draw_training_sample(const TrainingRecipe& recipe, std::size_t index, const SimulationSetup& setup);

// --- WNDS container -------------------------------------------------------

inline constexpr std::uint32_t kWndsVersion = 1;

/// WNDS file: "WNDS", u32 version, u32 height, u32 width, N planes of
/// height*width little-endian float32 (row-major), u32 CRC32 of the planes.
/// Sample files carry three planes (input, dpm, target); single-plane files
/// share the layout with N = 1.
void write_planes(const std::filesystem::path& path, std::span<const ImageArrayd* const> planes);
std::vector<ImageArrayd> read_planes(const std::filesystem::path& path);

void write_plane_file(const std::filesystem::path& path, const ImageArrayd& plane);
ImageArrayd read_plane_file(const std::filesystem::path& path);

struct ManifestEntry {
  std::string file;
  std::string refocus_file;  // empty when absent
  SampleMeta meta;
};

struct Manifest {
  std::uint32_t version = kWndsVersion;
  std::size_t count = 0;
  Eigen::Index patch_px = 64;
  double pixel_size_nm = 72.0;
  Modality modality = Modality::double_helix;
  std::vector<ManifestEntry> samples;
};

Manifest read_manifest(const std::filesystem::path& dir);

/// Streams samples into `dir`; the manifest is written atomically by finish().
class DatasetWriter {
 public:
  DatasetWriter(std::filesystem::path dir, Modality modality, Eigen::Index patch_px, double pixel_size_nm);

  void append(const Sample& sample);
  Manifest finish();

 private:
  std::filesystem::path dir_;
  Manifest manifest_;
  bool finished_ = false;
};

Manifest write_dataset(std::span<const Sample> samples, const std::filesystem::path& dir);

struct Dataset {
  Manifest manifest;
  std::vector<Sample> samples;
};

Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace dhrb

#endif  // DHRB_DATASET_HPP
