#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "iisu/simulate.hpp"

namespace {

using namespace iisu;

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(SolarSpectra, DiffuseSkyIsBlueRichRelativeToBeam) {
  Eigen::VectorXd wl(2);
  wl << 450.0, 800.0;
  const IlluminationSpectra spectra = solar_spectra(SunPosition{40.0, 180.0}, wl);
  EXPECT_GT(spectra.s1.minCoeff(), 0.0);
  EXPECT_GT(spectra.s2.minCoeff(), 0.0);
  EXPECT_GT(spectra.s2[0] / spectra.s1[0], spectra.s2[1] / spectra.s1[1]);
}

TEST(SolarSpectra, LongerSlantPathDimsTheBeam) {
  const Eigen::VectorXd wl = Eigen::VectorXd::LinSpaced(20, 400.0, 2400.0);
  const IlluminationSpectra low = solar_spectra(SunPosition{70.0, 180.0}, wl);
  const IlluminationSpectra high = solar_spectra(SunPosition{40.0, 180.0}, wl);
  for (int b = 0; b < 20; ++b) EXPECT_LT(low.s1[b], high.s1[b]) << b;
  // The sky term depends only on the optical depth, not the slant path.
  EXPECT_TRUE(low.s2.isApprox(high.s2, 1e-15));
}

TEST(SolarSpectra, RejectsWavelengthsOutsideModelRange) {
  Eigen::VectorXd wl(2);
  wl << 300.0, 800.0;
  EXPECT_THROW(solar_spectra(SunPosition{40.0, 180.0}, wl), ValidationError);
  wl << 800.0, 2600.0;
  EXPECT_THROW(solar_spectra(SunPosition{40.0, 180.0}, wl), ValidationError);
}

SceneSpec two_pixel_scene(double e) {
  SceneSpec scene;
  scene.dsm.width = 2;
  scene.dsm.height = 1;
  scene.dsm.cell_size = 1.0;
  scene.dsm.elevations = Eigen::VectorXd::Zero(2);
  scene.sun = SunPosition{40.0, 180.0};
  scene.endmembers = synthetic_endmembers(Eigen::VectorXd::LinSpaced(25, 400.0, 2400.0));
  scene.truth.width = 2;
  scene.truth.height = 1;
  scene.truth.class_names = scene.endmembers.class_names;
  scene.truth.a = Eigen::MatrixXd::Zero(3, 2);
  scene.truth.a(0, 0) = 1.0;
  scene.truth.a(2, 1) = 1.0;
  scene.e = e;
  scene.snr_db = kInf;
  return scene;
}

TEST(RenderRadiance, SunlitPixelSeesBeamPlusSky) {
  const SceneSpec scene = two_pixel_scene(0.01);
  const IlluminationSpectra spectra =
      solar_spectra(scene.sun, scene.endmembers.wavelengths);
  IlluminationGeometry geom;
  geom.width = 2;
  geom.height = 1;
  geom.v = Eigen::Vector2d(1, 1);
  geom.f = Eigen::Vector2d(1, 1);
  const double cos_z = std::cos(40.0 * M_PI / 180.0);
  geom.cos_theta = Eigen::Vector2d(cos_z, cos_z);

  const SpectralCube cube = render_radiance(scene, geom, spectra);
  EXPECT_EQ(cube.kind, CubeKind::Radiance);
  const Eigen::VectorXd expected =
      scene.endmembers.m.col(0).cwiseProduct(spectra.s1 * cos_z + spectra.s2);
  EXPECT_TRUE(cube.values.col(0).isApprox(expected, 1e-14));
}

TEST(RenderRadiance, ShadedPixelSeesSkyAndOneBounce) {
  const SceneSpec scene = two_pixel_scene(0.01);
  const IlluminationSpectra spectra =
      solar_spectra(scene.sun, scene.endmembers.wavelengths);
  IlluminationGeometry geom;
  geom.width = 2;
  geom.height = 1;
  geom.v = Eigen::Vector2d(1, 0);
  geom.f = Eigen::Vector2d(1.0, 0.85);
  geom.cos_theta = Eigen::Vector2d(0.7, 0.7);

  const SpectralCube cube = render_radiance(scene, geom, spectra);
  const Eigen::VectorXd& m_veg = scene.endmembers.m.col(2);
  Eigen::VectorXd expected = m_veg.cwiseProduct(spectra.s2 * 0.85);
  for (int j = 0; j < 3; ++j)
    expected +=
        0.01 * spectra.s1.cwiseProduct(m_veg.cwiseProduct(scene.endmembers.m.col(j)));
  EXPECT_TRUE(cube.values.col(1).isApprox(expected, 1e-14));
}

TEST(RenderRadiance, EmptyAbundanceColumnGivesZeroRadiance) {
  SceneSpec scene = two_pixel_scene(0.01);
  scene.truth.a.col(1).setZero();
  const IlluminationSpectra spectra =
      solar_spectra(scene.sun, scene.endmembers.wavelengths);
  IlluminationGeometry geom;
  geom.width = 2;
  geom.height = 1;
  geom.v = Eigen::Vector2d(1, 1);
  geom.f = Eigen::Vector2d(1, 1);
  geom.cos_theta = Eigen::Vector2d(0.7, 0.7);
  const SpectralCube cube = render_radiance(scene, geom, spectra);
  EXPECT_TRUE(cube.values.col(1).isZero(0.0));
}

TEST(SceneSpec, BenchmarkTruthMustBeBinaryOneHot) {
  SceneSpec scene = two_pixel_scene(0.01);
  EXPECT_NO_THROW(scene.validate());
  scene.truth.a(0, 0) = 0.5;
  scene.truth.a(1, 0) = 0.5;
  EXPECT_THROW(scene.validate(), ValidationError);
}

SpectralCube constant_cube(int width, int height, int bands, double value) {
  SpectralCube cube;
  cube.width = width;
  cube.height = height;
  cube.wavelengths = Eigen::VectorXd::LinSpaced(bands, 400.0, 2400.0);
  cube.kind = CubeKind::Radiance;
  cube.values = Eigen::MatrixXd::Constant(bands, width * height, value);
  return cube;
}

TEST(AddNoise, InfiniteSnrIsIdentity) {
  const SpectralCube cube = constant_cube(4, 4, 5, 0.3);
  const SpectralCube out = add_noise(cube, kInf, 99);
  EXPECT_EQ(out.values, cube.values);
}

TEST(AddNoise, SeedControlsTheStreamExactly) {
  const SpectralCube cube = constant_cube(6, 5, 8, 0.3);
  const SpectralCube a = add_noise(cube, 30.0, 1234);
  const SpectralCube b = add_noise(cube, 30.0, 1234);
  const SpectralCube c = add_noise(cube, 30.0, 1235);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
}

TEST(AddNoise, HitsTheRequestedSignalToNoiseRatio) {
  const SpectralCube cube = constant_cube(100, 100, 10, 0.4);
  const double snr_db = 30.0;
  const SpectralCube noisy = add_noise(cube, snr_db, 2718);
  const double mean_power = cube.values.array().square().mean();
  const double mse = (noisy.values - cube.values).array().square().mean();
  const double measured_db = 10.0 * std::log10(mean_power / mse);
  EXPECT_NEAR(measured_db, snr_db, 0.5);
  const double target_var = mean_power / std::pow(10.0, snr_db / 10.0);
  EXPECT_NEAR(mse / target_var, 1.0, 0.05);
}

TEST(AddNoise, RejectsNanAndNegativeInfinity) {
  const SpectralCube cube = constant_cube(2, 2, 3, 0.3);
  EXPECT_THROW(add_noise(cube, std::nan(""), 1), ValidationError);
  EXPECT_THROW(add_noise(cube, -kInf, 1), ValidationError);
}

TEST(Calibration, WhitePanelPixelReadsOne) {
  const Eigen::VectorXd wl = Eigen::VectorXd::LinSpaced(12, 400.0, 2400.0);
  const IlluminationSpectra spectra = solar_spectra(SunPosition{40.0, 180.0}, wl);
  const double cos_c = std::cos(40.0 * M_PI / 180.0);
  SpectralCube cube;
  cube.width = 1;
  cube.height = 1;
  cube.wavelengths = wl;
  cube.kind = CubeKind::Radiance;
  cube.values = spectra.s1 * cos_c + spectra.s2;
  const SpectralCube y = calibration_reflectance(cube, spectra, cos_c);
  EXPECT_EQ(y.kind, CubeKind::ApparentReflectance);
  EXPECT_TRUE(y.values.isApproxToConstant(1.0, 1e-14));
}

TEST(Calibration, SunlitMatchedGeometryRecoversReflectance) {
  const SceneSpec scene = two_pixel_scene(0.0);
  const IlluminationSpectra spectra =
      solar_spectra(scene.sun, scene.endmembers.wavelengths);
  const double cos_z = std::cos(40.0 * M_PI / 180.0);
  IlluminationGeometry geom;
  geom.width = 2;
  geom.height = 1;
  geom.v = Eigen::Vector2d(1, 1);
  geom.f = Eigen::Vector2d(1, 1);
  geom.cos_theta = Eigen::Vector2d(cos_z, cos_z);
  const SpectralCube radiance = render_radiance(scene, geom, spectra);
  const SpectralCube y = calibration_reflectance(radiance, spectra, cos_z);
  EXPECT_LT((y.values.col(0) - scene.endmembers.m.col(0)).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LT((y.values.col(1) - scene.endmembers.m.col(2)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Calibration, ShadedPixelKeepsItsDistortion) {
  const SceneSpec scene = two_pixel_scene(0.0);
  const IlluminationSpectra spectra =
      solar_spectra(scene.sun, scene.endmembers.wavelengths);
  const double cos_z = std::cos(40.0 * M_PI / 180.0);
  IlluminationGeometry geom;
  geom.width = 2;
  geom.height = 1;
  geom.v = Eigen::Vector2d(1, 0);
  geom.f = Eigen::Vector2d(1.0, 0.8);
  geom.cos_theta = Eigen::Vector2d(cos_z, cos_z);
  const SpectralCube radiance = render_radiance(scene, geom, spectra);
  const SpectralCube y = calibration_reflectance(radiance, spectra, cos_z);

  const Eigen::VectorXd panel = spectra.s1 * cos_z + spectra.s2;
  const Eigen::VectorXd expected =
      scene.endmembers.m.col(2).cwiseProduct(spectra.s2 * 0.8).cwiseQuotient(panel);
  EXPECT_TRUE(y.values.col(1).isApprox(expected, 1e-13));
  // Blue-weighted sky light: the apparent spectrum is tilted, not a uniform
  // darkening of the true reflectance.
  const Eigen::VectorXd ratio =
      y.values.col(1).cwiseQuotient(scene.endmembers.m.col(2));
  EXPECT_GT(ratio.maxCoeff() / ratio.minCoeff(), 3.0);
}

TEST(Calibration, ClampsNegativeNoiseExcursionsToZero) {
  const Eigen::VectorXd wl = Eigen::VectorXd::LinSpaced(5, 400.0, 2400.0);
  const IlluminationSpectra spectra = solar_spectra(SunPosition{40.0, 180.0}, wl);
  SpectralCube cube;
  cube.width = 1;
  cube.height = 1;
  cube.wavelengths = wl;
  cube.kind = CubeKind::Radiance;
  cube.values = Eigen::MatrixXd::Constant(5, 1, -0.01);
  const SpectralCube y = calibration_reflectance(cube, spectra, 0.7);
  EXPECT_EQ(y.values.minCoeff(), 0.0);
}

TEST(Calibration, RejectsNonRadianceInputAndBadPanelAngle) {
  const Eigen::VectorXd wl = Eigen::VectorXd::LinSpaced(5, 400.0, 2400.0);
  const IlluminationSpectra spectra = solar_spectra(SunPosition{40.0, 180.0}, wl);
  SpectralCube cube = constant_cube(2, 2, 5, 0.2);
  cube.kind = CubeKind::ApparentReflectance;
  EXPECT_THROW(calibration_reflectance(cube, spectra, 0.7), ValidationError);
  cube.kind = CubeKind::Radiance;
  EXPECT_THROW(calibration_reflectance(cube, spectra, 0.0), ValidationError);
  EXPECT_THROW(calibration_reflectance(cube, spectra, 1.1), ValidationError);
}

TEST(Sim1, SceneHasTheDocumentedShape) {
  Sim1Options options;
  options.bands = 30;
  options.n_azimuths = 16;
  const Sim1Products sim = make_sim1(options);
  EXPECT_EQ(sim.scene.dsm.width, 70);
  EXPECT_EQ(sim.scene.dsm.height, 70);
  EXPECT_NO_THROW(sim.scene.validate());
  EXPECT_EQ(sim.radiance.bands(), 30);
  EXPECT_EQ(sim.radiance.kind, CubeKind::Radiance);
  EXPECT_EQ(sim.apparent_reflectance.kind, CubeKind::ApparentReflectance);
  EXPECT_EQ(sim.true_reflectance.kind, CubeKind::Reflectance);

  // The building must throw a usable shadow and the scene must keep a clear
  // sunlit majority; both matter for calibration and for the benchmark.
  const double shaded = (sim.geometry.v.array() == 0.0).count();
  EXPECT_GT(shaded / sim.geometry.v.size(), 0.05);
  EXPECT_LT(shaded / sim.geometry.v.size(), 0.5);

  ASSERT_EQ(sim.calibration_pixels.size(), 25u);
  EXPECT_EQ(sim.calibration_class, "soil");
  int sunlit = 0, dark = 0;
  for (const auto& [r, c] : sim.calibration_pixels) {
    const int p = r * 70 + c;
    EXPECT_EQ(sim.scene.truth.a(0, p), 1.0) << "calibration pixel not soil";
    (sim.geometry.v[p] == 1.0 ? sunlit : dark) += 1;
  }
  EXPECT_EQ(sunlit, 13);
  EXPECT_EQ(dark, 12);
}

TEST(Sim1, SameOptionsSameBits) {
  Sim1Options options;
  options.bands = 12;
  options.n_azimuths = 8;
  options.seed = 42;
  const Sim1Products a = make_sim1(options);
  const Sim1Products b = make_sim1(options);
  EXPECT_EQ(a.radiance.values, b.radiance.values);
  EXPECT_EQ(a.apparent_reflectance.values, b.apparent_reflectance.values);
  options.seed = 43;
  const Sim1Products c = make_sim1(options);
  EXPECT_NE(a.radiance.values, c.radiance.values);
}

}  // namespace
