#include "dhrb/dataset.hpp"
#include "dhrb/preprocess.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

using namespace dhrb;
namespace fs = std::filesystem;

namespace {

// Bitwise reflected CRC-32 (polynomial 0xEDB88320), no tables.
std::uint32_t crc32_bitwise(const unsigned char* data, std::size_t n) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    crc ^= data[i];
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

std::uint32_t le32(const std::vector<unsigned char>& b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dhrb_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SimulationSetup small_setup(bool noise = true) {
  SimulationSetup s;
  s.patch_px = 32;
  if (!noise) s.noise.reset();
  return s;
}

}  // namespace

TEST_CASE("uniform DPMs") {
  const Dpm zero = build_uniform_dpm(8, 6, 0.0, Modality::double_helix);
  CHECK(zero.height() == 8);
  CHECK(zero.width() == 6);
  CHECK((zero.values == 0.0).all());
  CHECK((build_uniform_dpm(4, 4, 3.0, Modality::widefield).values == 3.0).all());
  CHECK_NOTHROW(build_uniform_dpm(4, 4, -8.0, Modality::double_helix));
  CHECK_THROWS_AS(build_uniform_dpm(4, 4, 8.5, Modality::double_helix), OutOfRange);
  CHECK_THROWS_AS(build_uniform_dpm(4, 4, 4.5, Modality::widefield), OutOfRange);
  CHECK_THROWS_AS(build_uniform_dpm(4, 4, std::nan(""), Modality::widefield), OutOfRange);
}

TEST_CASE("modality names") {
  CHECK(std::string(to_string(Modality::double_helix)) == "dh");
  CHECK(std::string(to_string(Modality::widefield)) == "widefield");
  CHECK(parse_modality("dh") == Modality::double_helix);
  CHECK(parse_modality("widefield") == Modality::widefield);
  CHECK_THROWS_AS(parse_modality("confocal"), InvalidArgument);
  CHECK(modality_z_max_um(Modality::double_helix) == 8.0);
  CHECK(modality_z_max_um(Modality::widefield) == 4.0);
}

TEST_CASE("make_sample") {
  const SimulationSetup setup = small_setup(false);
  const BeadField scene{{{1.1, 1.2, 0.0, 10000.0}}, frame_bounds(32, 32, setup.optics, -1, 1)};

  const Sample focus = make_sample(scene, Modality::double_helix, 0.0, 0.0, setup);
  CHECK_NOTHROW(focus.validate());
  CHECK((focus.dpm.values == 0.0).all());
  PsfModel dh;
  dh.mode = PsfMode::double_helix;
  const PlaneImage expect = normalize_image(render_plane(scene, 0.0, dh, setup.optics, 32), 60000.0);
  CHECK((focus.input.pixels - expect.pixels).abs().maxCoeff() < 1e-6);
  CHECK(percentile(focus.target.pixels, 99.9) == doctest::Approx(1.0).epsilon(1e-6));

  const Sample defocused = make_sample(scene, Modality::double_helix, -3.0, 0.0, setup);
  CHECK((defocused.dpm.values == 3.0).all());
  CHECK(defocused.meta.z_input_um == -3.0);

  // The target depends only on the target plane.
  CHECK((defocused.target.pixels == focus.target.pixels).all());

  CHECK_THROWS_AS(make_sample(scene, Modality::widefield, 4.5, 0.0, setup), OutOfRange);
  CHECK_THROWS_AS(make_sample(scene, Modality::double_helix, 0.0, 2.5, setup), OutOfRange);

  Sample broken = focus;
  broken.dpm = build_uniform_dpm(16, 16, 0.0, Modality::double_helix);
  CHECK_THROWS_AS(broken.validate(), InvalidArgument);
}

TEST_CASE("training draws stay in range and are reproducible") {
  TrainingRecipe recipe;
  recipe.base_seed = 100;
  const SimulationSetup setup = small_setup();
  double zi_min = 1e9, zi_max = -1e9, zt_min = 1e9, zt_max = -1e9;
  for (std::size_t i = 0; i < 200; ++i) {
    const Sample s = draw_training_sample(recipe, i, setup);
    CHECK(std::abs(s.meta.z_input_um) <= 8.0);
    CHECK(std::abs(s.meta.z_target_um) <= 2.0);
    CHECK(std::abs(s.dpm.values(0, 0)) <= 8.0 + 1e-6);
    CHECK(s.dpm.values(0, 0) == doctest::Approx(s.meta.z_target_um - s.meta.z_input_um).epsilon(1e-5));
    zi_min = std::min(zi_min, s.meta.z_input_um);
    zi_max = std::max(zi_max, s.meta.z_input_um);
    zt_min = std::min(zt_min, s.meta.z_target_um);
    zt_max = std::max(zt_max, s.meta.z_target_um);
  }
  CHECK(zi_min < -5.0);
  CHECK(zi_max > 5.0);
  CHECK(zt_min < -1.5);
  CHECK(zt_max > 1.5);

  const Sample a = draw_training_sample(recipe, 17, setup);
  const Sample b = draw_training_sample(recipe, 17, setup);
  CHECK((a.input.pixels == b.input.pixels).all());
  CHECK(a.meta.z_input_um == b.meta.z_input_um);

  recipe.modality = Modality::widefield;
  recipe.z_input_range_um = 4.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const Sample s = draw_training_sample(recipe, i, setup);
    CHECK(std::abs(s.dpm.values(0, 0)) <= 4.0 + 1e-6);
  }
  recipe.z_input_range_um = 6.0;
  CHECK_THROWS_AS(validate(recipe), InvalidArgument);
}

TEST_CASE("WNDS byte layout") {
  TempDir dir("layout");
  ImageArrayd a(2, 3), b(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  b << -0.5, 0.25, 1e-3, 7, 8, 9;
  const ImageArrayd* planes[] = {&a, &b};
  write_planes(dir.path / "x.wnds", planes);
  const auto bytes = slurp(dir.path / "x.wnds");
  REQUIRE(bytes.size() == 16 + 2 * 6 * 4 + 4);
  CHECK(std::memcmp(bytes.data(), "WNDS", 4) == 0);
  CHECK(le32(bytes, 4) == 1);
  CHECK(le32(bytes, 8) == 2);
  CHECK(le32(bytes, 12) == 3);
  float first;
  const std::uint32_t raw = le32(bytes, 16);
  std::memcpy(&first, &raw, 4);
  CHECK(first == 1.0f);
  const std::uint32_t raw_b0 = le32(bytes, 16 + 24);
  float b0;
  std::memcpy(&b0, &raw_b0, 4);
  CHECK(b0 == -0.5f);
  CHECK(le32(bytes, bytes.size() - 4) == crc32_bitwise(bytes.data() + 16, 48));

  const auto back = read_planes(dir.path / "x.wnds");
  REQUIRE(back.size() == 2);
  CHECK((back[0] == a).all());
  CHECK((back[1] == b.cast<float>().cast<double>()).all());
}

TEST_CASE("WNDS rejects damaged files") {
  TempDir dir("damage");
  ImageArrayd a = ImageArrayd::Random(8, 8);
  write_plane_file(dir.path / "a.wnds", a);
  const auto good = slurp(dir.path / "a.wnds");

  auto bad = good;
  bad[40] ^= 0x01;
  dump(dir.path / "b.wnds", bad);
  try {
    read_plane_file(dir.path / "b.wnds");
    FAIL("corruption not detected");
  } catch (const ChecksumError& e) {
    CHECK(std::string(e.what()).find("b.wnds") != std::string::npos);
  }

  bad = good;
  bad[0] = 'X';
  dump(dir.path / "c.wnds", bad);
  CHECK_THROWS_AS(read_plane_file(dir.path / "c.wnds"), FormatError);

  bad = good;
  bad[4] = 2;
  dump(dir.path / "d.wnds", bad);
  CHECK_THROWS_AS(read_plane_file(dir.path / "d.wnds"), FormatError);

  bad.assign(good.begin(), good.end() - 9);
  dump(dir.path / "e.wnds", bad);
  CHECK_THROWS_AS(read_plane_file(dir.path / "e.wnds"), FormatError);

  CHECK_THROWS_AS(read_plane_file(dir.path / "missing.wnds"), FormatError);

  ImageArrayd nan = a;
  nan(3, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(write_plane_file(dir.path / "n.wnds", nan), InvalidArgument);
}

TEST_CASE("dataset round trip and manifest") {
  TempDir dir("roundtrip");
  TrainingRecipe recipe;
  recipe.base_seed = 5;
  const SimulationSetup setup = small_setup();
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < 12; ++i) samples.push_back(draw_training_sample(recipe, i, setup));
  const Manifest written = write_dataset(samples, dir.path);
  CHECK(written.count == 12);
  CHECK(fs::exists(dir.path / "manifest.json"));
  CHECK_FALSE(fs::exists(dir.path / "manifest.json.tmp"));

  const Dataset ds = read_dataset(dir.path);
  REQUIRE(ds.samples.size() == 12);
  CHECK(ds.manifest.patch_px == 32);
  CHECK(ds.manifest.modality == Modality::double_helix);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK((ds.samples[i].input.pixels == samples[i].input.pixels).all());
    CHECK((ds.samples[i].dpm.values == samples[i].dpm.values).all());
    CHECK((ds.samples[i].target.pixels == samples[i].target.pixels).all());
    REQUIRE(ds.samples[i].refocus_target.has_value());
    CHECK((ds.samples[i].refocus_target->pixels == samples[i].refocus_target->pixels).all());
    CHECK(ds.samples[i].meta.z_input_um == samples[i].meta.z_input_um);
    CHECK(ds.samples[i].meta.scene_seed == samples[i].meta.scene_seed);
  }

  std::ifstream in(dir.path / "manifest.json");
  const nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j.at("version") == 1);
  CHECK(j.at("count") == 12);
  CHECK(j.at("modality") == "dh");
  CHECK(j.at("samples").size() == 12);
  CHECK(j.at("samples")[0].at("file") == "sample_000000.wnds");
}

TEST_CASE("empty dataset and manifest errors") {
  TempDir dir("empty");
  const Manifest m = write_dataset({}, dir.path);
  CHECK(m.count == 0);
  const Dataset ds = read_dataset(dir.path);
  CHECK(ds.samples.empty());
  CHECK(ds.manifest.count == 0);

  TempDir broken("broken_manifest");
  CHECK_THROWS_AS(read_manifest(broken.path), FormatError);
  std::ofstream(broken.path / "manifest.json") << "{\"version\": 1, \"count\": 2, \"samples\": []}";
  CHECK_THROWS_AS(read_manifest(broken.path), FormatError);
}

TEST_CASE("dataset writer enforces the patch size") {
  TempDir dir("writer");
  DatasetWriter w(dir.path, Modality::double_helix, 16, 72.0);
  TrainingRecipe recipe;
  CHECK_THROWS_AS(w.append(draw_training_sample(recipe, 0, small_setup())), InvalidArgument);
  const Manifest m = w.finish();
  CHECK(m.count == 0);
  CHECK_THROWS_AS(w.append(draw_training_sample(recipe, 0, small_setup())), Error);
}
