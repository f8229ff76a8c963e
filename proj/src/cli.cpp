#include "dhrb/cli.hpp"

#include "dhrb/dataset.hpp"
#include "dhrb/locmetrics.hpp"
#include "dhrb/parallel.hpp"
#include "dhrb/preprocess.hpp"
#include "dhrb/registration.hpp"
#include "dhrb/report.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dhrb {

namespace fs = std::filesystem;

namespace {

/// Bad arguments or unusable inputs, detected before any work starts.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainerMissing : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

/// The separately built trainer: $DHRB_WNET, else `dhrb-wnet` on PATH.
std::optional<fs::path> find_trainer() {
  if (const char* env = std::getenv("DHRB_WNET"); env && *env) {
    fs::path p(env);
    if (fs::exists(p)) return p;
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::stringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    const fs::path candidate = fs::path(dir) / "dhrb-wnet";
    if (fs::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

fs::path require_trainer() {
  auto trainer = find_trainer();
  if (!trainer) {
    throw TrainerMissing(
        "the W-Net trainer is not installed; build the secondary component and put dhrb-wnet on PATH "
        "(or set DHRB_WNET)");
  }
  return *trainer;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string modality = "dh";
  std::size_t n = 2000;
  int patch = 64;
  std::optional<double> z_input_range;
  double z_target_range = kConfocalZMaxUm;
  std::uint64_t seed = 7;
  std::string out;
  int beads = 4;
  bool no_noise = false;
  int threads = 0;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  TrainingRecipe recipe;
  SimulationSetup setup;
  try {
    recipe.modality = parse_modality(a.modality);
    recipe.z_input_range_um = a.z_input_range.value_or(modality_z_max_um(recipe.modality));
    recipe.z_target_range_um = a.z_target_range;
    recipe.beads_per_patch = a.beads;
    recipe.base_seed = a.seed;
    validate(recipe);
    if (a.patch < 8 || a.patch > 256) throw InvalidArgument("patch size must lie in [8, 256]");
    setup.patch_px = a.patch;
    if (a.no_noise) setup.noise.reset();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  DatasetWriter writer(a.out, recipe.modality, setup.patch_px, setup.optics.pixel_size_nm);
  const int threads = thread_count(a.threads);
  const std::size_t chunk = static_cast<std::size_t>(threads) * 16;
  std::vector<Sample> batch;
  for (std::size_t start = 0; start < a.n; start += chunk) {
    const std::size_t count = std::min(chunk, a.n - start);
    batch.assign(count, Sample{});
    parallel_for(count, threads, [&](std::size_t i) { batch[i] = draw_training_sample(recipe, start + i, setup); });
    for (const Sample& s : batch) writer.append(s);
  }
  const Manifest m = writer.finish();
  out << "wrote " << m.count << " " << to_string(m.modality) << " samples to " << a.out << "\n";
  return kExitOk;
}

// --- register ---------------------------------------------------------------

struct RegisterArgs {
  std::string input;
  std::string target;
  int input_plane = 0;
  int target_plane = 0;
  bool single_peak = false;
  bool phase = false;
  int min_separation = 3;
};

PlaneImage load_plane(const std::string& path, int plane) {
  std::vector<ImageArrayd> planes;
  try {
    planes = read_planes(path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (plane < 0 || static_cast<std::size_t>(plane) >= planes.size()) {
    throw UsageError(path + ": plane " + std::to_string(plane) + " does not exist");
  }
  return PlaneImage(std::move(planes[static_cast<std::size_t>(plane)]));
}

int cmd_register(const RegisterArgs& a, std::ostream& out) {
  const PlaneImage input = load_plane(a.input, a.input_plane);
  const PlaneImage target = load_plane(a.target, a.target_plane);
  if (!input.same_shape(target)) throw UsageError("input and target shapes differ");
  for (const auto* img : {&input, &target}) {
    if (img->pixels.maxCoeff() == img->pixels.minCoeff()) {
      throw UsageError(std::string(img == &input ? "input" : "target") + " image is constant");
    }
  }
  if (a.min_separation < 1) throw UsageError("--min-separation must be at least 1");

  DppcmOptions opts;
  opts.single_peak = a.single_peak;
  opts.kind = a.phase ? CorrelationKind::phase : CorrelationKind::normalized;
  opts.min_separation_px = a.min_separation;
  ShiftEstimate s;
  try {
    s = dppcm_shift(input, target, opts);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  out << format_fixed(s.dx_px, 3) << ',' << format_fixed(s.dy_px, 3) << ',' << format_fixed(s.confidence, 3) << ','
      << (s.degraded ? "true" : "false") << '\n';
  return kExitOk;
}

// --- dof --------------------------------------------------------------------

struct DofArgs {
  std::string dataset;
  std::string modality = "widefield";
  std::vector<std::string> refocuser{"identity"};
  double z_min = -8.0;
  double z_max = 8.0;
  double step = 0.1;
  std::vector<double> tolerances{0.0, 0.1, 0.2};
  std::uint64_t seed = 7;
  int beads = 30;
  std::optional<int> size;
  double photons = 20000.0;
  double min_separation = 2.0;
  bool no_noise = false;
  std::optional<double> detect_threshold;
  double match_radius = 250.0;
  std::string out = ".";
  int threads = 0;
};

Refocuser model_refocuser(const fs::path& trainer, const fs::path& checkpoint, const fs::path& workdir,
                          Modality modality, double target_z, double saturation) {
  fs::create_directories(workdir);
  return [=](const PlaneImage& input, double z_input) {
    const std::string tag = format_fixed(z_input, 3);
    const fs::path in_path = workdir / ("in_" + tag + ".wnds");
    const fs::path out_path = workdir / ("out_" + tag + ".wnds");
    const PlaneImage normalized = normalize_image(input, saturation);
    // Beyond the trained axial range the model gets the largest propagation it knows.
    const double zmax = modality_z_max_um(modality);
    const Dpm dpm = build_uniform_dpm(input.height(), input.width(), std::clamp(target_z - z_input, -zmax, zmax), modality);
    const ImageArrayd* planes[] = {&normalized.pixels, &dpm.values};
    write_planes(in_path, planes);
    const std::string cmd = shell_quote(trainer.string()) + " infer --checkpoint " + shell_quote(checkpoint.string()) +
                            " --input " + shell_quote(in_path.string()) + " --out " + shell_quote(out_path.string());
    if (std::system(cmd.c_str()) != 0) throw Error("trainer inference failed: " + cmd);
    auto outputs = read_planes(out_path);
    return PlaneImage(std::move(outputs.back()), input.pixel_size_nm, target_z);
  };
}

int cmd_dof(const DofArgs& a, std::ostream& out, std::ostream& err) {
  SweepConfig config;
  Modality modality;
  std::vector<double> grid;
  std::string kind;
  fs::path checkpoint;
  try {
    modality = parse_modality(a.modality);
    Eigen::Index size = a.size.value_or(256);
    if (!a.dataset.empty()) {
      const Manifest m = read_manifest(a.dataset);
      modality = m.modality;
      config.optics.pixel_size_nm = m.pixel_size_nm;
      if (!a.size) size = m.patch_px;
    }
    if (size < 16) throw InvalidArgument("--size must be at least 16");
    config.height = config.width = size;
    config.input_psf.mode = psf_mode(modality);
    if (a.no_noise) config.noise.reset();
    if (config.noise) config.noise->seed = a.seed;
    if (a.detect_threshold) config.detect_threshold = *a.detect_threshold;
    if (!(config.detect_threshold > 0 && config.detect_threshold < 1)) {
      throw InvalidArgument("--detect-threshold must lie in (0, 1)");
    }
    config.match_radius_nm = a.match_radius;
    config.threads = a.threads;
    grid = make_z_grid(a.z_min, a.z_max, a.step);
    if (std::none_of(grid.begin(), grid.end(), [](double z) { return std::abs(z) < 1e-9; })) {
      throw InvalidArgument("the z grid must contain the target plane z = 0");
    }
    for (double t : a.tolerances) {
      if (!(t >= 0 && t < 1)) throw InvalidArgument("tolerances must lie in [0, 1)");
    }
    kind = a.refocuser.front();
    if (kind != "identity" && kind != "oracle" && kind != "model") {
      throw InvalidArgument("--refocuser must be identity, oracle or model");
    }
    if (kind == "model") {
      if (a.refocuser.size() < 2) throw InvalidArgument("--refocuser model needs a CHECKPOINT path");
      checkpoint = a.refocuser[1];
      if (!fs::exists(checkpoint)) throw InvalidArgument("checkpoint not found: " + checkpoint.string());
    } else if (a.refocuser.size() > 1) {
      throw InvalidArgument("only the model refocuser takes a checkpoint");
    }
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const FieldBounds bounds = frame_bounds(config.height, config.width, config.optics, 0.0, 0.0);
  const BeadField scene = generate_bead_field(a.beads, bounds, {a.photons, a.photons}, a.min_separation, a.seed);

  Refocuser refocuser;
  if (kind == "identity") {
    refocuser = identity_refocuser();
  } else if (kind == "oracle") {
    refocuser = oracle_refocuser(scene, config);
  } else {
    refocuser = model_refocuser(require_trainer(), checkpoint, fs::path(a.out) / "model_io", modality,
                                config.target_z_um, config.saturation_level);
  }

  const SweepResult result = dof_sweep(refocuser, scene, grid, a.tolerances, config);

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  {
    std::ofstream f(dir / "table.csv");
    write_dof_table_csv(f, result.reports);
  }
  {
    std::ofstream f(dir / "curves.csv");
    write_curve_csv(f, result.curve);
  }
  SvgSeries ji{kind, {}};
  SvgSeries rmse{kind, {}};
  for (const PlaneMetrics& p : result.curve) {
    ji.points.emplace_back(p.z_um, p.ji);
    rmse.points.emplace_back(p.z_um, p.rmse_nm);
  }
  {
    std::ofstream f(dir / "ji.svg");
    write_svg_plot(f, "Jaccard index vs defocus", "z (um)", "JI", {ji});
  }
  {
    std::ofstream f(dir / "rmse.svg");
    write_svg_plot(f, "Lateral RMSE vs defocus", "z (um)", "RMSE (nm)", {rmse});
  }
  write_dof_table_csv(out, result.reports);
  if (result.native_ji == 0.0) {
    err << "warning: native JI is 0 (no bead matched near z = 0); every plane meets the threshold and the DOF is not "
           "meaningful\n";
  }
  return kExitOk;
}

int cmd_passthrough(const std::string& sub, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path trainer = require_trainer();
  std::string cmd = shell_quote(trainer.string()) + " " + sub;
  for (const std::string& s : args) cmd += " " + shell_quote(s);
  out.flush();
  const int status = std::system(cmd.c_str());
  return status == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Double-helix PSF refocusing simulation and evaluation toolkit", "dhrb"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a WNDS training/testing dataset");
  simulate->add_option("--modality", sim.modality, "Input modality: dh or widefield")->capture_default_str();
  simulate->add_option("--n", sim.n, "Number of samples")->capture_default_str();
  simulate->add_option("--patch", sim.patch, "Patch size in pixels")->capture_default_str();
  simulate->add_option("--z-input-range", sim.z_input_range,
                       "Half-range of input planes in um (default: 8 for dh, 4 for widefield)");
  simulate->add_option("--z-target-range", sim.z_target_range, "Half-range of confocal target planes in um")
      ->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Base random seed")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--beads", sim.beads, "Beads per patch")->capture_default_str();
  simulate->add_flag("--no-noise", sim.no_noise, "Render noise-free inputs");
  simulate->add_option("--threads", sim.threads, "Worker threads (default: DHRB_THREADS or all cores)");

  RegisterArgs reg;
  auto* registration = app.add_subcommand("register", "Estimate the subpixel shift between two WNDS images");
  registration->add_option("--input", reg.input, "Input image (WNDS)")->required();
  registration->add_option("--target", reg.target, "Target image (WNDS)")->required();
  registration->add_option("--input-plane", reg.input_plane, "Plane index within the input file")
      ->capture_default_str();
  registration->add_option("--target-plane", reg.target_plane, "Plane index within the target file")
      ->capture_default_str();
  registration->add_flag("--single-peak", reg.single_peak, "Use the single global peak instead of the peak pair");
  registration->add_flag("--phase", reg.phase, "Use whitened phase correlation instead of normalized correlation");
  registration->add_option("--min-separation", reg.min_separation, "Minimum distance between the two peaks (px)")
      ->capture_default_str();

  DofArgs dof;
  auto* dof_cmd = app.add_subcommand("dof", "Sweep defocus and report JI, RMSE and extended depth of field");
  dof_cmd->alias("evaluate");
  dof_cmd->add_option("--dataset", dof.dataset, "Dataset whose manifest fixes modality, pixel size and patch size");
  dof_cmd->add_option("--modality", dof.modality, "Input modality when no dataset is given")->capture_default_str();
  dof_cmd->add_option("--refocuser", dof.refocuser, "identity | oracle | model CHECKPOINT")->expected(1, 2);
  dof_cmd->add_option("--z-min", dof.z_min, "Lowest input plane (um)")->capture_default_str();
  dof_cmd->add_option("--z-max", dof.z_max, "Highest input plane (um)")->capture_default_str();
  dof_cmd->add_option("--step", dof.step, "Axial step (um)")->capture_default_str();
  dof_cmd->add_option("--tolerances", dof.tolerances, "Comma-separated JI tolerances")->delimiter(',');
  dof_cmd->add_option("--seed", dof.seed, "Scene and noise seed")->capture_default_str();
  dof_cmd->add_option("--beads", dof.beads, "Beads in the test scene")->capture_default_str();
  dof_cmd->add_option("--size", dof.size, "Frame size in pixels (default 256, or the dataset patch size)");
  dof_cmd->add_option("--photons", dof.photons, "Photons per bead")->capture_default_str();
  dof_cmd->add_option("--min-separation", dof.min_separation, "Minimum bead separation (um)")->capture_default_str();
  dof_cmd->add_flag("--no-noise", dof.no_noise, "Render noise-free inputs");
  dof_cmd->add_option("--detect-threshold", dof.detect_threshold,
                      "Detection threshold relative to the target-plane output (default 0.55)");
  dof_cmd->add_option("--match-radius", dof.match_radius, "Matching radius (nm)")->capture_default_str();
  dof_cmd->add_option("--out", dof.out, "Output directory for CSV and SVG files")->capture_default_str();
  dof_cmd->add_option("--threads", dof.threads, "Worker threads (default: DHRB_THREADS or all cores)");

  auto* train = app.add_subcommand("train", "Train the W-Net (requires the separately built trainer)");
  train->allow_extras();
  auto* infer = app.add_subcommand("infer", "Run W-Net inference (requires the separately built trainer)");
  infer->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim, out);
    if (registration->parsed()) return cmd_register(reg, out);
    if (dof_cmd->parsed()) return cmd_dof(dof, out, err);
    if (train->parsed()) return cmd_passthrough("train", train->remaining(), out);
    if (infer->parsed()) return cmd_passthrough("infer", infer->remaining(), out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainerMissing& e) {
    err << "error: " << e.what() << "\n";
    return kExitNoTrainer;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace dhrb
