// End-to-end checks of the command-line pipeline. Each test drives the
// installed binary through std::system and inspects exit codes and output
// files, so this is the one place the full simulate -> geometry -> unmix ->
// evaluate -> render chain runs exactly as a user would run it.

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "iisu/io.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int run_cli(const std::string& arguments) {
  const std::string cmd = std::string(IISU_CLI_PATH) + " " + arguments + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

fs::path make_work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() /
                       ("iisu_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  ASSERT_TRUE(out) << path;
  out << j.dump(2) << "\n";
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in) << path;
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Runs `simulate` once into dir/scene and returns that path.
fs::path simulate_scene(const fs::path& dir, int bands, const std::string& snr,
                        std::uint64_t seed) {
  fs::create_directories(dir);
  const fs::path scene = dir / "scene";
  json config;
  if (snr == "inf")
    config["snr_db"] = "inf";
  else
    config["snr_db"] = std::stod(snr);
  config["bands"] = bands;
  config["n_azimuths"] = 16;
  write_json(dir / "simulate.json", config);
  const int code = run_cli("simulate --config " + (dir / "simulate.json").string() +
                           " --output-dir " + scene.string() + " --seed " +
                           std::to_string(seed) + " --threads 2");
  EXPECT_EQ(code, 0);
  return scene;
}

json unmix_config(const fs::path& scene) {
  json config;
  config["endmembers"] = (scene / "endmembers.csv").string();
  config["radiance"] = (scene / "radiance").string();
  config["geometry"] = (scene / "geometry").string();
  config["selection"] = (scene / "selection.json").string();
  config["reflectance"] = (scene / "apparent_reflectance").string();
  return config;
}

TEST(Cli, FullPipelineProducesEveryArtifact) {
  const fs::path dir = make_work_dir("pipeline");
  const fs::path scene = simulate_scene(dir, 16, "50", 7);
  for (const char* name :
       {"dsm.asc", "radiance.json", "radiance.bin", "apparent_reflectance.json",
        "true_reflectance.json", "truth_abundance.json", "geometry.json",
        "endmembers.csv", "spectra.csv", "selection.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(scene / name)) << name;

  const fs::path geo = dir / "geom";
  json geometry_config;
  geometry_config["dsm"] = (scene / "dsm.asc").string();
  geometry_config["zenith_deg"] = 40.0;
  geometry_config["azimuth_deg"] = 190.0;
  geometry_config["n_azimuths"] = 16;
  write_json(dir / "geometry.json", geometry_config);
  ASSERT_EQ(run_cli("geometry --config " + (dir / "geometry.json").string() +
                    " --output-dir " + geo.string() + " --threads 2"),
            0);
  // Recomputed geometry must agree with what simulate wrote.
  EXPECT_EQ(file_bytes(geo / "geometry.bin"), file_bytes(scene / "geometry.bin"));

  const fs::path out = dir / "unmix";
  write_json(dir / "unmix.json", unmix_config(scene));
  ASSERT_EQ(run_cli("unmix --config " + (dir / "unmix.json").string() + " --output-dir " +
                    out.string() + " --method all --threads 4"),
            0);
  for (const char* tag : {"iisu", "fcls", "fcls_s", "scls", "nlmm"})
    for (const char* suffix : {"_abundance.json", "_reflectance.json",
                               "_reconstruction.json", "_mask.json"})
      EXPECT_TRUE(fs::exists(out / (std::string(tag) + suffix))) << tag << suffix;
  EXPECT_TRUE(fs::exists(out / "spectra_estimated.csv"));
  EXPECT_TRUE(fs::exists(out / "report.json"));

  json evaluate_config;
  evaluate_config["truth_abundance"] = (scene / "truth_abundance").string();
  evaluate_config["truth_reflectance"] = (scene / "true_reflectance").string();
  auto& estimates = evaluate_config["estimates"] = json::array();
  for (const char* tag : {"iisu", "fcls", "fcls_s", "scls", "nlmm"}) {
    json entry;
    entry["method"] = tag;
    entry["abundance"] = (out / (std::string(tag) + "_abundance")).string();
    entry["reflectance"] = (out / (std::string(tag) + "_reflectance")).string();
    entry["observed"] = std::string(tag) == "iisu" ? (scene / "radiance").string()
                                                   : (scene / "apparent_reflectance").string();
    entry["reconstruction"] = (out / (std::string(tag) + "_reconstruction")).string();
    estimates.push_back(entry);
  }
  const fs::path eval = dir / "eval";
  write_json(dir / "evaluate.json", evaluate_config);
  ASSERT_EQ(run_cli("evaluate --config " + (dir / "evaluate.json").string() +
                    " --output-dir " + eval.string()),
            0);
  EXPECT_TRUE(fs::exists(eval / "report.csv"));
  EXPECT_TRUE(fs::exists(eval / "report.txt"));
  const json report = json::parse(std::ifstream(eval / "report.json"));
  ASSERT_EQ(report.size(), 5u);
  for (const auto& row : report) EXPECT_GE(row["rmse_a"].get<double>(), 0.0);

  json render_config;
  render_config["cube"] = (out / "iisu_reflectance").string();
  render_config["wavelengths_nm"] = {640.0, 550.0, 460.0};
  write_json(dir / "render.json", render_config);
  const fs::path shot = dir / "render";
  ASSERT_EQ(run_cli("render --config " + (dir / "render.json").string() + " --output-dir " +
                    shot.string()),
            0);
  const std::string ppm = file_bytes(shot / "render.ppm");
  const std::string header = "P6\n70 70\n255\n";
  ASSERT_EQ(ppm.substr(0, header.size()), header);
  EXPECT_EQ(ppm.size(), header.size() + 3u * 70u * 70u);

  fs::remove_all(dir);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("unmix --method bogus"), 1);
  EXPECT_EQ(run_cli("--version"), 0);
}

TEST(Cli, DataErrorsExitTwo) {
  const fs::path dir = make_work_dir("data_errors");

  // Config file that does not exist.
  EXPECT_EQ(run_cli("render --config " + (dir / "missing.json").string()), 2);

  // Reference methods refuse a radiance cube.
  const fs::path scene = simulate_scene(dir, 8, "inf", 7);
  json config = unmix_config(scene);
  config["reflectance"] = (scene / "radiance").string();
  write_json(dir / "bad_domain.json", config);
  EXPECT_EQ(run_cli("unmix --config " + (dir / "bad_domain.json").string() +
                    " --output-dir " + (dir / "o1").string() + " --method fcls"),
            2);

  // Empty calibration selection.
  iisu::PixelSelection empty;
  empty.class_name = "soil";
  iisu::save_selection(empty, (dir / "empty_selection.json").string());
  config = unmix_config(scene);
  config["selection"] = (dir / "empty_selection.json").string();
  write_json(dir / "empty_sel.json", config);
  EXPECT_EQ(run_cli("unmix --config " + (dir / "empty_sel.json").string() +
                    " --output-dir " + (dir / "o2").string() + " --method iisu"),
            2);

  fs::remove_all(dir);
}

TEST(Cli, SolverFailureExitsThree) {
  const fs::path dir = make_work_dir("solver_failure");
  const fs::path scene = simulate_scene(dir, 8, "50", 7);
  json config = unmix_config(scene);
  config["fit_max_iter"] = 1;  // the calibration fit cannot settle in one pass
  write_json(dir / "capped.json", config);
  EXPECT_EQ(run_cli("unmix --config " + (dir / "capped.json").string() + " --output-dir " +
                    (dir / "out").string() + " --method iisu"),
            3);
  fs::remove_all(dir);
}

TEST(Cli, SameSeedSameBytesAcrossRuns) {
  const fs::path dir = make_work_dir("determinism");
  const fs::path a = simulate_scene(dir / "a", 10, "50", 21);
  const fs::path b = simulate_scene(dir / "b", 10, "50", 21);
  EXPECT_EQ(file_bytes(a / "radiance.bin"), file_bytes(b / "radiance.bin"));
  EXPECT_EQ(file_bytes(a / "apparent_reflectance.bin"),
            file_bytes(b / "apparent_reflectance.bin"));

  const fs::path c = simulate_scene(dir / "c", 10, "50", 22);
  EXPECT_NE(file_bytes(a / "radiance.bin"), file_bytes(c / "radiance.bin"));
  fs::remove_all(dir);
}

TEST(Cli, ThreadCountDoesNotChangeUnmixBytes) {
  const fs::path dir = make_work_dir("threads");
  const fs::path scene = simulate_scene(dir, 10, "50", 7);
  write_json(dir / "unmix.json", unmix_config(scene));
  ASSERT_EQ(run_cli("unmix --config " + (dir / "unmix.json").string() + " --output-dir " +
                    (dir / "t1").string() + " --method iisu --threads 1"),
            0);
  ASSERT_EQ(run_cli("unmix --config " + (dir / "unmix.json").string() + " --output-dir " +
                    (dir / "t4").string() + " --method iisu --threads 4"),
            0);
  EXPECT_EQ(file_bytes(dir / "t1" / "iisu_abundance.bin"),
            file_bytes(dir / "t4" / "iisu_abundance.bin"));
  EXPECT_EQ(file_bytes(dir / "t1" / "iisu_reconstruction.bin"),
            file_bytes(dir / "t4" / "iisu_reconstruction.bin"));
  fs::remove_all(dir);
}

TEST(Cli, RenderStretchesAndHandlesFlatChannels) {
  const fs::path dir = make_work_dir("render");

  iisu::SpectralCube flat;
  flat.width = 5;
  flat.height = 4;
  flat.wavelengths = Eigen::VectorXd::LinSpaced(3, 500.0, 700.0);
  flat.kind = iisu::CubeKind::Reflectance;
  flat.values = Eigen::MatrixXd::Constant(3, 20, 0.25);
  iisu::save_cube(flat, (dir / "flat").string());

  json config;
  config["cube"] = (dir / "flat").string();
  config["bands"] = {0, 1, 2};
  config["output"] = "flat.ppm";
  // Config names must not collide with the cube header stems.
  write_json(dir / "render_flat.json", config);
  ASSERT_EQ(run_cli("render --config " + (dir / "render_flat.json").string() +
                    " --output-dir " + dir.string()),
            0);
  const std::string ppm = file_bytes(dir / "flat.ppm");
  const std::string header = "P6\n5 4\n255\n";
  ASSERT_EQ(ppm.substr(0, header.size()), header);
  for (size_t i = header.size(); i < ppm.size(); ++i)
    ASSERT_EQ(static_cast<unsigned char>(ppm[i]), 128u) << i;

  // A ramp must stretch between its 2nd and 98th percentiles.
  iisu::SpectralCube ramp = flat;
  ramp.width = 20;
  ramp.height = 1;
  for (int p = 0; p < 20; ++p) ramp.values.col(p).setConstant(p);
  iisu::save_cube(ramp, (dir / "ramp").string());
  config["cube"] = (dir / "ramp").string();
  config["output"] = "ramp.ppm";
  write_json(dir / "render_ramp.json", config);
  ASSERT_EQ(run_cli("render --config " + (dir / "render_ramp.json").string() +
                    " --output-dir " + dir.string()),
            0);
  const std::string ramp_ppm = file_bytes(dir / "ramp.ppm");
  std::vector<double> values(20);
  for (int p = 0; p < 20; ++p) values[static_cast<size_t>(p)] = p;
  const double p2 = oracles::percentile_sorted(values, 2.0);
  const double p98 = oracles::percentile_sorted(values, 98.0);
  const std::string ramp_header = "P6\n20 1\n255\n";
  for (int p = 0; p < 20; ++p) {
    const double t = std::clamp((values[static_cast<size_t>(p)] - p2) / (p98 - p2), 0.0, 1.0);
    const auto want = static_cast<unsigned char>(std::lround(t * 255.0));
    ASSERT_EQ(static_cast<unsigned char>(ramp_ppm[ramp_header.size() + 3 * p]), want) << p;
  }

  // Band indices out of range are a data error.
  config["bands"] = {0, 1, 7};
  write_json(dir / "bad_band.json", config);
  EXPECT_EQ(run_cli("render --config " + (dir / "bad_band.json").string() +
                    " --output-dir " + dir.string()),
            2);

  fs::remove_all(dir);
}

TEST(Cli, GeometryOnFlatGroundMatchesClosedForm) {
  const fs::path dir = make_work_dir("geometry_flat");
  iisu::SurfaceModel dsm;
  dsm.width = 9;
  dsm.height = 7;
  dsm.cell_size = 1.0;
  dsm.elevations = Eigen::VectorXd::Zero(63);
  iisu::save_surface(dsm, (dir / "flat.asc").string());

  json config;
  config["dsm"] = (dir / "flat.asc").string();
  config["zenith_deg"] = 40.0;
  config["azimuth_deg"] = 180.0;
  config["n_azimuths"] = 16;
  write_json(dir / "geometry.json", config);
  ASSERT_EQ(run_cli("geometry --config " + (dir / "geometry.json").string() +
                    " --output-dir " + dir.string()),
            0);

  const iisu::SpectralCube cube = iisu::load_cube((dir / "geometry").string());
  ASSERT_EQ(cube.bands(), 3);
  const double cos40 = std::cos(40.0 * M_PI / 180.0);
  for (int p = 0; p < cube.pixels(); ++p) {
    EXPECT_EQ(cube.values(0, p), 1.0);
    EXPECT_EQ(cube.values(1, p), 1.0);
    EXPECT_NEAR(cube.values(2, p), cos40, 1e-6);  // stored as 32-bit floats
  }
  fs::remove_all(dir);
}

}  // namespace
