// Command-line front end: scene simulation, illumination geometry,
// unmixing with the full method roster, metric evaluation, and RGB
// rendering of recovered reflectance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iisu/iisu.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSolver = 3;

struct CommonArgs {
  std::string config_path;
  std::string output_dir = ".";
  std::string method = "all";
  int threads = 1;
  std::uint64_t seed = 7;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw iisu::ValidationError("cannot open config: " + path);
  try {
    json config;
    in >> config;
    return config;
  } catch (const json::exception& e) {
    throw iisu::ValidationError("malformed config " + path + ": " + std::string(e.what()));
  }
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (const unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

void write_manifest(const CommonArgs& args, const json& config, const std::string& command) {
  json manifest;
  manifest["command"] = command;
  manifest["config_hash"] = fnv1a(config.dump());
  manifest["seed"] = args.seed;
  manifest["threads"] = args.threads;
  manifest["version"] = iisu::kVersion;
  std::ofstream out(std::filesystem::path(args.output_dir) / "manifest.json");
  if (!out) throw iisu::ValidationError("cannot write manifest in " + args.output_dir);
  out << manifest.dump(2) << "\n";
}

std::string out_path(const CommonArgs& args, const std::string& name) {
  return (std::filesystem::path(args.output_dir) / name).string();
}

double snr_from_config(const json& config) {
  if (!config.contains("snr_db")) return 50.0;
  const auto& v = config["snr_db"];
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw iisu::ValidationError("snr_db must be a number or \"inf\"");
  }
  return v.get<double>();
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CommonArgs& args, const json& config) {
  iisu::Sim1Options options;
  options.snr_db = snr_from_config(config);
  options.e = config.value("e", 0.01);
  options.bands = config.value("bands", 100);
  options.n_azimuths = config.value("n_azimuths", 64);
  options.seed = args.seed;
  options.threads = args.threads;

  const iisu::Sim1Products products = iisu::make_sim1(options);

  std::filesystem::create_directories(args.output_dir);
  iisu::save_surface(products.scene.dsm, out_path(args, "dsm.asc"));
  iisu::save_cube(products.radiance, out_path(args, "radiance"));
  iisu::save_cube(products.apparent_reflectance, out_path(args, "apparent_reflectance"));
  iisu::save_cube(products.true_reflectance, out_path(args, "true_reflectance"));
  iisu::save_cube(iisu::abundance_to_cube(products.scene.truth),
                  out_path(args, "truth_abundance"));
  iisu::save_cube(iisu::geometry_to_cube(products.geometry), out_path(args, "geometry"));
  iisu::save_endmembers(products.scene.endmembers, out_path(args, "endmembers.csv"));
  iisu::save_spectra_csv(products.spectra, products.scene.endmembers.wavelengths,
                         out_path(args, "spectra.csv"));
  iisu::PixelSelection selection;
  selection.class_name = products.calibration_class;
  selection.pixels = products.calibration_pixels;
  iisu::save_selection(selection, out_path(args, "selection.json"));
  write_manifest(args, config, "simulate");
  std::cout << "simulate: wrote scene to " << args.output_dir << "\n";
  return kExitOk;
}

int cmd_geometry(const CommonArgs& args, const json& config) {
  if (!config.contains("dsm"))
    throw iisu::ValidationError("geometry config needs a \"dsm\" path");
  const iisu::SurfaceModel dsm = iisu::load_surface(config["dsm"].get<std::string>());
  iisu::SunPosition sun;
  sun.zenith_deg = config.value("zenith_deg", 40.0);
  sun.azimuth_deg = config.value("azimuth_deg", 190.0);
  iisu::GeometryOptions options;
  options.n_azimuths = config.value("n_azimuths", 64);
  options.threads = args.threads;

  const iisu::IlluminationGeometry geom = iisu::illumination_geometry(dsm, sun, options);
  std::filesystem::create_directories(args.output_dir);
  iisu::save_cube(iisu::geometry_to_cube(geom), out_path(args, "geometry"));
  write_manifest(args, config, "geometry");
  std::cout << "geometry: wrote raster to " << args.output_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MethodOutput {
  iisu::AbundanceMap abundances;
  iisu::SpectralCube reflectance;
  iisu::SpectralCube reconstruction;
  iisu::SpectralCube observed;
  std::vector<std::uint8_t> degenerate;
  int non_converged = 0;
};

iisu::AdmmSettings admm_from_config(const json& config) {
  iisu::AdmmSettings settings;
  if (!config.contains("admm")) return settings;
  const auto& a = config["admm"];
  settings.rho = a.value("rho", settings.rho);
  settings.abs_tol = a.value("abs_tol", settings.abs_tol);
  settings.rel_tol = a.value("rel_tol", settings.rel_tol);
  settings.max_iter = a.value("max_iter", settings.max_iter);
  return settings;
}

MethodOutput run_iisu(const CommonArgs& args, const json& config,
                      const iisu::EndmemberLibrary& lib) {
  if (!config.contains("radiance") || !config.contains("geometry"))
    throw iisu::ValidationError(
        "the illumination-aware method needs \"radiance\" and \"geometry\" paths");
  const iisu::SpectralCube radiance =
      iisu::load_cube(config["radiance"].get<std::string>());
  const iisu::IlluminationGeometry geom =
      iisu::geometry_from_cube(iisu::load_cube(config["geometry"].get<std::string>()));

  iisu::IlluminationSpectra spectra;
  if (config.contains("spectra_csv")) {
    spectra = iisu::load_spectra_csv(config["spectra_csv"].get<std::string>(),
                                     radiance.wavelengths);
  } else {
    if (!config.contains("selection"))
      throw iisu::ValidationError(
          "provide a calibration \"selection\" file or a \"spectra_csv\" override");
    const iisu::PixelSelection selection =
        iisu::load_selection(config["selection"].get<std::string>());
    if (selection.pixels.empty())
      throw iisu::ValidationError("calibration selection is empty");
    const iisu::CalibrationData cal = iisu::gather_calibration(
        radiance, geom, lib, selection.class_name, selection.pixels);
    iisu::IlluminationFitOptions fit;
    fit.tol = config.value("fit_tol", fit.tol);
    fit.max_iter = config.value("fit_max_iter", fit.max_iter);
    const iisu::IlluminationEstimate est = iisu::estimate_illumination(cal, fit);
    if (!est.converged)
      throw iisu::SolverError(
          "illumination fit hit its iteration cap before the convergence criterion");
    spectra = est.spectra;
    iisu::save_spectra_csv(spectra, radiance.wavelengths,
                           out_path(args, "spectra_estimated.csv"));
  }

  iisu::UnmixOptions options;
  options.admm = admm_from_config(config);
  options.threads = args.threads;
  const iisu::UnmixImageResult result = iisu::unmix_image(radiance, geom, lib, spectra, options);

  MethodOutput out;
  out.abundances = result.abundances;
  out.reflectance = iisu::shadow_compensated_reflectance(result.abundances, lib);
  out.reconstruction = result.reconstruction;
  out.observed = radiance;
  out.degenerate = result.degenerate;
  out.non_converged = result.non_converged_pixels;
  return out;
}

MethodOutput run_baseline(const std::string& method, const CommonArgs& args,
                          const json& config, const iisu::EndmemberLibrary& lib) {
  if (!config.contains("reflectance"))
    throw iisu::ValidationError("method " + method + " needs a \"reflectance\" cube path");
  const iisu::SpectralCube cube = iisu::load_cube(config["reflectance"].get<std::string>());

  iisu::BaselineResult result;
  if (method == "fcls")
    result = iisu::fcls_unmix(cube, lib, args.threads);
  else if (method == "fcls-s")
    result = iisu::fcls_shade_unmix(cube, lib, args.threads);
  else if (method == "scls")
    result = iisu::scls_unmix(cube, lib, args.threads);
  else if (method == "nlmm")
    result = iisu::nlmm_unmix(cube, lib, args.threads, 0.001, admm_from_config(config));
  else
    throw iisu::ValidationError("unknown method: " + method);

  MethodOutput out;
  out.abundances = result.abundances;
  out.reflectance = iisu::shadow_compensated_reflectance(result.abundances, lib);
  out.reconstruction = result.reconstruction;
  out.observed = cube;
  out.degenerate = result.degenerate;
  out.non_converged = result.non_converged_pixels;
  return out;
}

iisu::SpectralCube mask_to_cube(const MethodOutput& out) {
  iisu::SpectralCube cube;
  cube.width = out.abundances.width;
  cube.height = out.abundances.height;
  cube.wavelengths = Eigen::VectorXd::Zero(1);
  cube.kind = iisu::CubeKind::Reflectance;
  cube.band_names = {"degenerate"};
  cube.values.resize(1, out.abundances.pixels());
  for (int p = 0; p < out.abundances.pixels(); ++p)
    cube.values(0, p) = out.degenerate[static_cast<size_t>(p)] ? 1.0 : 0.0;
  return cube;
}

int cmd_unmix(const CommonArgs& args, const json& config) {
  if (!config.contains("endmembers"))
    throw iisu::ValidationError("unmix config needs an \"endmembers\" path");
  const iisu::EndmemberLibrary lib =
      iisu::load_endmembers(config["endmembers"].get<std::string>());

  std::vector<std::string> methods;
  if (args.method == "all")
    methods = {"iisu", "fcls", "fcls-s", "scls", "nlmm"};
  else
    methods = {args.method};

  std::filesystem::create_directories(args.output_dir);
  json report;
  for (const auto& method : methods) {
    const MethodOutput out = method == "iisu" ? run_iisu(args, config, lib)
                                              : run_baseline(method, args, config, lib);
    const std::string tag = method == "fcls-s" ? "fcls_s" : method;
    iisu::save_cube(iisu::abundance_to_cube(out.abundances),
                    out_path(args, tag + "_abundance"));
    iisu::save_cube(out.reflectance, out_path(args, tag + "_reflectance"));
    iisu::save_cube(out.reconstruction, out_path(args, tag + "_reconstruction"));
    iisu::save_cube(mask_to_cube(out), out_path(args, tag + "_mask"));

    json entry;
    entry["nre"] = iisu::nre(out.observed, out.reconstruction);
    entry["degenerate_pixels"] = static_cast<int>(
        std::count(out.degenerate.begin(), out.degenerate.end(), std::uint8_t{1}));
    entry["non_converged_pixels"] = out.non_converged;
    report[method] = entry;
    std::cout << "unmix[" << method << "]: nre " << entry["nre"].get<double>()
              << ", degenerate " << entry["degenerate_pixels"].get<int>()
              << ", non-converged " << out.non_converged << "\n";
  }
  std::ofstream rout(out_path(args, "report.json"));
  rout << report.dump(2) << "\n";
  write_manifest(args, config, "unmix");
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_evaluate(const CommonArgs& args, const json& config) {
  for (const char* key : {"truth_abundance", "truth_reflectance", "estimates"})
    if (!config.contains(key))
      throw iisu::ValidationError(std::string("evaluate config needs \"") + key + "\"");

  const iisu::AbundanceMap truth_abundance = iisu::abundance_from_cube(
      iisu::load_cube(config["truth_abundance"].get<std::string>()));
  const iisu::SpectralCube truth_reflectance =
      iisu::load_cube(config["truth_reflectance"].get<std::string>());

  std::vector<iisu::EvaluationReport> reports;
  for (const auto& entry : config["estimates"]) {
    const std::string method = entry.at("method").get<std::string>();
    const iisu::AbundanceMap est = iisu::abundance_from_cube(
        iisu::load_cube(entry.at("abundance").get<std::string>()));
    const iisu::SpectralCube reflectance =
        iisu::load_cube(entry.at("reflectance").get<std::string>());
    const iisu::SpectralCube observed =
        iisu::load_cube(entry.at("observed").get<std::string>());
    const iisu::SpectralCube reconstruction =
        iisu::load_cube(entry.at("reconstruction").get<std::string>());
    reports.push_back(iisu::evaluate_method(method, truth_abundance, truth_reflectance, est,
                                            reflectance, observed, reconstruction));
  }

  std::filesystem::create_directories(args.output_dir);
  std::ofstream csv(out_path(args, "report.csv"));
  csv << iisu::comparison_csv(reports);
  std::ofstream txt(out_path(args, "report.txt"));
  txt << iisu::comparison_text(reports);
  json jreport = json::array();
  for (const auto& r : reports) {
    json row;
    row["method"] = r.method;
    row["rmse_a"] = r.rmse_a;
    row["rmse_r"] = r.rmse_r;
    row["nre"] = r.nre;
    row["classification_accuracy"] = r.classification_accuracy;
    jreport.push_back(row);
  }
  std::ofstream jout(out_path(args, "report.json"));
  jout << jreport.dump(2) << "\n";
  write_manifest(args, config, "evaluate");
  std::cout << iisu::comparison_text(reports);
  return kExitOk;
}

// ---------------------------------------------------------------------------

double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * (static_cast<double>(values.size()) - 1.0);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = static_cast<size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

int cmd_render(const CommonArgs& args, const json& config) {
  if (!config.contains("cube")) throw iisu::ValidationError("render config needs \"cube\"");
  const iisu::SpectralCube cube = iisu::load_cube(config["cube"].get<std::string>());

  std::vector<int> bands;
  if (config.contains("bands")) {
    bands = config["bands"].get<std::vector<int>>();
  } else if (config.contains("wavelengths_nm")) {
    for (const double target : config["wavelengths_nm"].get<std::vector<double>>()) {
      int best = 0;
      for (int b = 1; b < cube.bands(); ++b)
        if (std::abs(cube.wavelengths[b] - target) <
            std::abs(cube.wavelengths[best] - target))
          best = b;
      bands.push_back(best);
    }
  } else {
    throw iisu::ValidationError("render config needs \"bands\" or \"wavelengths_nm\"");
  }
  if (bands.size() != 3) throw iisu::ValidationError("render needs exactly three bands");
  for (const int b : bands)
    if (b < 0 || b >= cube.bands())
      throw iisu::ValidationError("band index " + std::to_string(b) + " out of range");

  // Per-channel 2 percent linear stretch; a flat channel renders mid-gray.
  std::vector<std::vector<std::uint8_t>> channels;
  for (const int b : bands) {
    std::vector<double> values(cube.values.row(b).begin(), cube.values.row(b).end());
    const double p2 = percentile(values, 2.0);
    const double p98 = percentile(values, 98.0);
    std::vector<std::uint8_t> channel(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
      if (p98 <= p2) {
        channel[i] = 128;
      } else {
        const double t = std::clamp((values[i] - p2) / (p98 - p2), 0.0, 1.0);
        channel[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
      }
    }
    channels.push_back(std::move(channel));
  }

  std::filesystem::create_directories(args.output_dir);
  const std::string name = config.value("output", std::string("render.ppm"));
  const std::string path = out_path(args, name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw iisu::ValidationError("cannot write image: " + path);
  out << "P6\n" << cube.width << " " << cube.height << "\n255\n";
  for (int p = 0; p < cube.pixels(); ++p)
    for (int ch = 0; ch < 3; ++ch)
      out.put(static_cast<char>(channels[static_cast<size_t>(ch)][static_cast<size_t>(p)]));
  write_manifest(args, config, "render");
  std::cout << "render: wrote " << path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Illumination-aware spectral unmixing pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", iisu::kVersion);

  CommonArgs args;
  std::map<std::string, CLI::App*> commands;
  for (const char* name : {"simulate", "geometry", "unmix", "evaluate", "render"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config_path, "JSON settings file");
    sub->add_option("--output-dir", args.output_dir, "output directory");
    sub->add_option("--threads", args.threads, "worker thread count")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", args.seed, "random seed");
    if (std::string(name) == "unmix")
      sub->add_option("--method", args.method, "iisu|fcls|fcls-s|scls|nlmm|all")
          ->check(CLI::IsMember({"iisu", "fcls", "fcls-s", "scls", "nlmm", "all"}));
    commands[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    const json config = load_config(args.config_path);
    if (commands["simulate"]->parsed()) return cmd_simulate(args, config);
    if (commands["geometry"]->parsed()) return cmd_geometry(args, config);
    if (commands["unmix"]->parsed()) return cmd_unmix(args, config);
    if (commands["evaluate"]->parsed()) return cmd_evaluate(args, config);
    if (commands["render"]->parsed()) return cmd_render(args, config);
    std::cerr << "error: no subcommand\n";
    return kExitUsage;
  } catch (const iisu::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const iisu::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
