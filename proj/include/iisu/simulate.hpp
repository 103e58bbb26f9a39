#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "iisu/geometry.hpp"
#include "iisu/types.hpp"
#include "iisu/unmixing.hpp"

namespace iisu {

// ---------------------------------------------------------------------------
// Parametric clear-sky illumination.
// ---------------------------------------------------------------------------

struct SolarModel {
  double temperature_k = 5778.0;  // blackbody temperature of the source
  double rayleigh_k = 0.1;        // molecular optical depth scale at 550 nm
  double aerosol_k = 0.3;         // aerosol optical depth scale at 550 nm
  double diffuse_scale = 0.45;    // overall strength of the sky term
};

/// Direct and diffuse illumination spectra on a wavelength grid in
/// nanometers. The direct beam is a blackbody attenuated along the slant
/// path by molecular lambda^-4 scattering plus an aerosol haze term with the
/// much weaker lambda^-1.3 falloff; the diffuse term collects the
/// scattered-out light. Molecules dominate in the blue, which makes the sky
/// blue-rich, while the aerosol component keeps a few percent of diffuse
/// light through the infrared the way a real sky does. The blackbody is
/// normalized to peak 1 at its Wien wavelength, so both outputs are
/// dimensionless shapes rather than absolute irradiance.
inline IlluminationSpectra solar_spectra(const SunPosition& sun,
                                         const Eigen::VectorXd& wavelengths_nm,
                                         const SolarModel& model = {}) {
  sun.validate();
  if (wavelengths_nm.size() == 0) throw ValidationError("empty wavelength grid");
  for (Eigen::Index i = 0; i < wavelengths_nm.size(); ++i)
    if (wavelengths_nm[i] < 350.0 || wavelengths_nm[i] > 2500.0)
      throw ValidationError("solar model is defined for wavelengths in [350, 2500] nm");

  constexpr double h = 6.62607015e-34;
  constexpr double c = 2.99792458e8;
  constexpr double kb = 1.380649e-23;
  constexpr double wien_b = 2.897771955e-3;  // m K

  const double t = model.temperature_k;
  const auto planck = [&](double lambda_m) {
    return 1.0 / (std::pow(lambda_m, 5) * (std::exp(h * c / (lambda_m * kb * t)) - 1.0));
  };
  const double peak = planck(wien_b / t);

  const double zenith = sun.zenith_deg * std::numbers::pi / 180.0;
  const double air_mass = 1.0 / std::cos(zenith);

  const Eigen::Index b = wavelengths_nm.size();
  IlluminationSpectra spectra;
  spectra.s1.resize(b);
  spectra.s2.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double e0 = planck(wavelengths_nm[i] * 1e-9) / peak;
    const double ratio = wavelengths_nm[i] / 550.0;
    const double tau =
        model.rayleigh_k * std::pow(ratio, -4.0) + model.aerosol_k * std::pow(ratio, -1.3);
    spectra.s1[i] = e0 * std::exp(-tau * air_mass);
    spectra.s2[i] = model.diffuse_scale * e0 * (1.0 - std::exp(-tau));
  }
  spectra.validate();
  return spectra;
}

// ---------------------------------------------------------------------------
// Scene description and forward rendering.
// ---------------------------------------------------------------------------

struct SceneSpec {
  SurfaceModel dsm;
  SunPosition sun;
  EndmemberLibrary endmembers;
  AbundanceMap truth;  // binary one-hot columns
  double e = 0.01;     // indirect-bounce coefficient applied in cast shadow
  double snr_db = 50;  // +infinity means noiseless

  void validate() const {
    dsm.validate();
    sun.validate();
    endmembers.validate();
    truth.validate();
    if (truth.width != dsm.width || truth.height != dsm.height)
      throw ValidationError("abundance truth and surface model dimensions differ");
    if (truth.classes() != endmembers.classes())
      throw ValidationError("abundance truth and library class counts differ");
    for (int p = 0; p < truth.pixels(); ++p) {
      int ones = 0;
      for (int k = 0; k < truth.classes(); ++k) {
        const double a = truth.a(k, p);
        if (a != 0.0 && a != 1.0)
          throw ValidationError("ground-truth abundances must be binary");
        ones += a == 1.0 ? 1 : 0;
      }
      if (ones != 1) throw ValidationError("each ground-truth pixel must have exactly one class");
    }
    if (!(e >= 0.0)) throw ValidationError("indirect coefficient must be nonnegative");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
      throw ValidationError("snr_db must be finite or +infinity for a noiseless scene");
  }
};

/// Noiseless radiance of a scene. Each pixel mixes the endmembers by its
/// abundance column, lit by the direct beam (gated by visibility and
/// incidence), the sky dome (scaled by openness), and, in cast shadow, one
/// extra bounce of the beam off the scene's materials:
///
///   l = (M a) . (s1 v cos + s2 f + e_p s1 . (M 1))      e_p = e when v = 0
inline SpectralCube render_radiance(const SceneSpec& scene, const IlluminationGeometry& geom,
                                    const IlluminationSpectra& spectra) {
  // Component checks only: rendering itself is happy with any nonnegative
  // abundance mix, while SceneSpec::validate additionally pins the binary
  // ground-truth convention of the benchmark protocol.
  scene.endmembers.validate();
  scene.truth.validate();
  geom.validate();
  spectra.validate();
  if (!(scene.e >= 0.0)) throw ValidationError("indirect coefficient must be nonnegative");
  if (geom.width != scene.truth.width || geom.height != scene.truth.height)
    throw ValidationError("geometry and scene dimensions differ");
  if (scene.truth.classes() != scene.endmembers.classes())
    throw ValidationError("abundance and library class counts differ");
  if (spectra.bands() != scene.endmembers.bands())
    throw ValidationError("spectra and library band counts differ");

  const Eigen::MatrixXd& m = scene.endmembers.m;
  const Eigen::VectorXd bounce_sum = spectra.s1.cwiseProduct(m.rowwise().sum());

  SpectralCube cube;
  cube.width = geom.width;
  cube.height = geom.height;
  cube.wavelengths = scene.endmembers.wavelengths;
  cube.kind = CubeKind::Radiance;
  cube.values.resize(m.rows(), geom.pixels());
  for (int p = 0; p < geom.pixels(); ++p) {
    const double ep = geom.v[p] == 0.0 ? scene.e : 0.0;
    const Eigen::VectorXd light = spectra.s1 * (geom.v[p] * geom.cos_theta[p]) +
                                  spectra.s2 * geom.f[p] + ep * bounce_sum;
    cube.values.col(p) = (m * scene.truth.a.col(p)).cwiseProduct(light);
  }
  return cube;
}

// ---------------------------------------------------------------------------
// Noise: per-pixel counter-based Gaussian streams.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Uniform draw in (0, 1] indexed by (key, counter). Pure function of its
/// arguments, so the stream has no sequential state to share or lock.
inline double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(key + 0x632be59bd9b4e019ull * (counter + 1));
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal draw i of the stream keyed by `key`. Draws are paired
/// through the Box-Muller transform; both members of a pair read the same
/// two uniforms, so any draw can be evaluated independently of the rest.
inline double counter_normal(std::uint64_t key, std::uint64_t i) {
  const std::uint64_t pair = i / 2;
  const double u1 = counter_uniform(key, 2 * pair);
  const double u2 = counter_uniform(key, 2 * pair + 1);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return i % 2 == 0 ? radius * std::cos(angle) : radius * std::sin(angle);
}

}  // namespace detail

/// Additive white Gaussian noise at a target signal-to-noise ratio. The
/// noise variance is mean signal power divided by 10^(snr/10), measured over
/// the whole cube. Each pixel owns one counter-based stream derived from
/// (seed, pixel index), which makes the output byte-identical no matter how
/// the loop is scheduled. snr_db = +infinity returns the input unchanged.
inline SpectralCube add_noise(const SpectralCube& cube, double snr_db, std::uint64_t seed) {
  cube.validate();
  if (std::isnan(snr_db)) throw ValidationError("snr_db must not be NaN");
  if (snr_db == std::numeric_limits<double>::infinity()) return cube;
  if (!std::isfinite(snr_db)) throw ValidationError("snr_db must be finite or +infinity");

  const double mean_power = cube.values.array().square().mean();
  const double sigma = std::sqrt(mean_power / std::pow(10.0, snr_db / 10.0));

  SpectralCube noisy = cube;
  for (int p = 0; p < cube.pixels(); ++p) {
    const std::uint64_t key =
        detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(p) + 1));
    for (int b = 0; b < cube.bands(); ++b)
      noisy.values(b, p) += sigma * detail::counter_normal(key, static_cast<std::uint64_t>(b));
  }
  return noisy;
}

// ---------------------------------------------------------------------------
// Calibration to apparent reflectance.
// ---------------------------------------------------------------------------

/// Divides every pixel by the radiance of a fully lit horizontal white
/// panel, the standard field-calibration step. Shadowed pixels keep their
/// distorted magnitude and blue-shifted shape; that distortion is what the
/// reflectance-domain methods then have to cope with. Noise can push a
/// radiance sample below zero, which has no reflectance meaning, so values
/// are floored at zero.
inline SpectralCube calibration_reflectance(const SpectralCube& cube,
                                            const IlluminationSpectra& spectra,
                                            double cos_theta_c) {
  cube.validate();
  spectra.validate();
  if (cube.kind != CubeKind::Radiance)
    throw ValidationError("calibration expects a radiance cube");
  if (spectra.bands() != cube.bands())
    throw ValidationError("spectra and cube band counts differ");
  if (!(cos_theta_c > 0.0 && cos_theta_c <= 1.0))
    throw ValidationError("panel incidence cosine must lie in (0, 1]");

  const Eigen::VectorXd panel = spectra.s1 * cos_theta_c + spectra.s2;
  if (panel.minCoeff() <= 0.0)
    throw ValidationError("panel radiance must be strictly positive in every band");

  SpectralCube out = cube;
  out.kind = CubeKind::ApparentReflectance;
  out.values = (panel.cwiseInverse().asDiagonal() * cube.values).cwiseMax(0.0);
  return out;
}

// ---------------------------------------------------------------------------
// The benchmark scene: flat ground, one building, a few trees.
// ---------------------------------------------------------------------------

namespace detail {

inline double gaussian_bump(double x, double center, double width) {
  const double d = (x - center) / width;
  return std::exp(-0.5 * d * d);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// Three synthetic endmembers on a given wavelength grid: a soil that climbs
/// steeply through the visible the way bare ground does (with an iron
/// absorption near 870 nm and water dips), a flat bright building material
/// with a cement hydration dip, and a vegetation spectrum with green peak,
/// red edge, and water absorptions. The visible-range shapes are deliberately
/// distinct — rising, flat, and dark-with-a-green-bump — because cast shadow
/// keeps mostly sky light, so shaded pixels must be separable on visible
/// shape alone. Vegetation staying dark in the visible also matters for the
/// benchmark: reflectance-domain methods confuse shadowed bright material
/// with dark material.
inline EndmemberLibrary synthetic_endmembers(const Eigen::VectorXd& wavelengths_nm) {
  EndmemberLibrary lib;
  lib.wavelengths = wavelengths_nm;
  lib.class_names = {"soil", "building", "vegetation"};
  lib.m.resize(wavelengths_nm.size(), 3);
  for (Eigen::Index i = 0; i < wavelengths_nm.size(); ++i) {
    const double wl = wavelengths_nm[i];
    const double soil = 0.04 + 0.28 * detail::sigmoid((wl - 640.0) / 180.0) +
                        0.12 * detail::sigmoid((wl - 1300.0) / 300.0) -
                        0.03 * detail::gaussian_bump(wl, 870.0, 60.0) -
                        0.05 * detail::gaussian_bump(wl, 1420.0, 70.0) -
                        0.06 * detail::gaussian_bump(wl, 1930.0, 90.0);
    const double building = 0.32 - 0.02 * (wl - 400.0) / 2000.0 -
                            0.03 * detail::gaussian_bump(wl, 1450.0, 70.0) -
                            0.06 * detail::gaussian_bump(wl, 1900.0, 90.0);
    const double vegetation = 0.04 + 0.04 * detail::gaussian_bump(wl, 550.0, 40.0) +
                              0.45 * detail::sigmoid((wl - 720.0) / 25.0) -
                              0.18 * detail::gaussian_bump(wl, 1450.0, 60.0) -
                              0.20 * detail::gaussian_bump(wl, 1940.0, 90.0) -
                              0.10 * detail::sigmoid((wl - 1600.0) / 400.0);
    lib.m(i, 0) = std::clamp(soil, 0.01, 0.95);
    lib.m(i, 1) = std::clamp(building, 0.01, 0.95);
    lib.m(i, 2) = std::clamp(vegetation, 0.01, 0.95);
  }
  lib.validate();
  return lib;
}

struct Sim1Options {
  double snr_db = 50.0;
  double e = 0.01;
  std::uint64_t seed = 7;
  int bands = 100;
  int threads = 1;
  int n_azimuths = 64;
};

struct Sim1Products {
  SceneSpec scene;
  IlluminationGeometry geometry;
  IlluminationSpectra spectra;
  SpectralCube radiance_noiseless;
  SpectralCube radiance;              // with noise at scene.snr_db
  SpectralCube apparent_reflectance;  // calibrated from the noisy radiance
  SpectralCube true_reflectance;      // abundance-weighted endmember mix
  std::string calibration_class;
  std::vector<std::pair<int, int>> calibration_pixels;  // mixed sunlit/shaded
};

/// Builds the 70x70 benchmark scene: flat soil plain, one 16 m building
/// whose shadow falls across open ground, and four tree canopies. Sun at
/// zenith 40, azimuth 190, indirect bounce 0.01 in cast shadow. Returns the
/// full product chain plus a 25-pixel soil calibration selection that mixes
/// sunlit and shaded samples.
inline Sim1Products make_sim1(const Sim1Options& options = {}) {
  constexpr int kSize = 70;
  Sim1Products out;

  SurfaceModel dsm;
  dsm.width = kSize;
  dsm.height = kSize;
  dsm.cell_size = 1.0;
  dsm.elevations = Eigen::VectorXd::Zero(kSize * kSize);

  // Class map: 0 soil, 1 building, 2 vegetation.
  std::vector<int> klass(static_cast<size_t>(kSize) * kSize, 0);

  for (int r = 12; r <= 25; ++r)
    for (int c = 40; c <= 53; ++c) {
      dsm.at(r, c) = 16.0;
      klass[static_cast<size_t>(r) * kSize + c] = 1;
    }

  const struct {
    int row, col;
    double height, radius;
  } trees[] = {{45, 14, 9.0, 3.0}, {52, 32, 8.0, 3.2}, {34, 57, 9.5, 2.8}, {58, 52, 8.5, 3.0}};
  for (const auto& tree : trees)
    for (int r = 0; r < kSize; ++r)
      for (int c = 0; c < kSize; ++c) {
        const double d2 = (r - tree.row) * double(r - tree.row) +
                          (c - tree.col) * double(c - tree.col);
        const double canopy = tree.height * std::exp(-0.5 * d2 / (tree.radius * tree.radius));
        if (canopy > 1.0 && klass[static_cast<size_t>(r) * kSize + c] != 1) {
          dsm.at(r, c) = std::max(dsm.at(r, c), canopy);
          klass[static_cast<size_t>(r) * kSize + c] = 2;
        }
      }

  out.scene.dsm = dsm;
  out.scene.sun = SunPosition{40.0, 190.0};
  out.scene.e = options.e;
  out.scene.snr_db = options.snr_db;

  const Eigen::VectorXd wavelengths =
      Eigen::VectorXd::LinSpaced(options.bands, 400.0, 2400.0);
  out.scene.endmembers = synthetic_endmembers(wavelengths);

  out.scene.truth.width = kSize;
  out.scene.truth.height = kSize;
  out.scene.truth.class_names = out.scene.endmembers.class_names;
  out.scene.truth.a = Eigen::MatrixXd::Zero(3, kSize * kSize);
  for (int p = 0; p < kSize * kSize; ++p)
    out.scene.truth.a(klass[static_cast<size_t>(p)], p) = 1.0;

  GeometryOptions geometry_options;
  geometry_options.n_azimuths = options.n_azimuths;
  geometry_options.threads = options.threads;
  out.geometry = illumination_geometry(out.scene.dsm, out.scene.sun, geometry_options);

  out.spectra = solar_spectra(out.scene.sun, wavelengths);
  out.radiance_noiseless = render_radiance(out.scene, out.geometry, out.spectra);
  out.radiance = add_noise(out.radiance_noiseless, options.snr_db, options.seed);

  const double cos_zenith = std::cos(out.scene.sun.zenith_deg * std::numbers::pi / 180.0);
  out.apparent_reflectance = calibration_reflectance(out.radiance, out.spectra, cos_zenith);
  out.true_reflectance =
      shadow_compensated_reflectance(out.scene.truth, out.scene.endmembers);

  // Calibration selection: 13 sunlit and 12 shaded soil pixels, evenly
  // spaced through the scan-order lists so both shadow regimes and a spread
  // of sky openness are represented.
  std::vector<int> sunlit_soil, shaded_soil;
  for (int p = 0; p < kSize * kSize; ++p) {
    if (klass[static_cast<size_t>(p)] != 0) continue;
    (out.geometry.v[p] == 1.0 ? sunlit_soil : shaded_soil).push_back(p);
  }
  if (shaded_soil.size() < 12 || sunlit_soil.size() < 13)
    throw ValidationError("benchmark scene lost its shadow; calibration needs both regimes");
  out.calibration_class = "soil";
  const auto pick = [&](const std::vector<int>& pool, int count) {
    for (int i = 0; i < count; ++i) {
      const int p = pool[pool.size() * static_cast<size_t>(i) / count];
      out.calibration_pixels.emplace_back(p / kSize, p % kSize);
    }
  };
  pick(sunlit_soil, 13);
  pick(shaded_soil, 12);
  return out;
}

}  // namespace iisu
