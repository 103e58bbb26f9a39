#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "iisu/parallel.hpp"
#include "iisu/solvers.hpp"
#include "iisu/types.hpp"

namespace iisu {

/// Elementwise products of endmember pairs, one column per unordered pair
/// (k, j) with k <= j, ordered (1,1), (1,2), ..., (1,K), (2,2), ..., (K,K).
/// These span the second-order interaction terms of the mixing model.
inline Eigen::MatrixXd bilinear_dictionary(const Eigen::MatrixXd& m) {
  const Eigen::Index b = m.rows();
  const Eigen::Index k = m.cols();
  Eigen::MatrixXd xi(b, bilinear_dictionary_size(static_cast<int>(k)));
  Eigen::Index col = 0;
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) xi.col(col++) = m.col(i).cwiseProduct(m.col(j));
  return xi;
}

// ---------------------------------------------------------------------------
// Stage one: direct and diffuse illumination spectra from calibration pixels.
// ---------------------------------------------------------------------------

/// Radiance samples of one known material plus the local illumination
/// geometry at each sample. The material's reflectance and the full library
/// (for the indirect bounce term) come along for the fit.
struct CalibrationData {
  Eigen::MatrixXd l;       // B x N radiance at the calibration pixels
  Eigen::VectorXd m;       // reflectance of the calibration material
  Eigen::MatrixXd m_all;   // B x K full endmember library
  Eigen::VectorXd v;       // N, binary sun visibility
  Eigen::VectorXd f;       // N, sky view factor
  Eigen::VectorXd cos_theta;  // N, solar incidence cosine

  int bands() const { return static_cast<int>(m.size()); }
  int samples() const { return static_cast<int>(v.size()); }

  void validate() const {
    const int b = bands();
    const int n = samples();
    if (b < 2) throw ValidationError("calibration data needs at least two bands");
    if (n < 2) throw ValidationError("calibration needs at least two pixels");
    if (l.rows() != b || l.cols() != n)
      throw ValidationError("calibration radiance block has wrong shape");
    if (m_all.rows() != b) throw ValidationError("endmember band count mismatch");
    if (f.size() != n || cos_theta.size() != n)
      throw ValidationError("calibration geometry vectors have wrong length");
    bool sunlit = false;
    bool shaded = false;
    for (int i = 0; i < n; ++i) {
      if (v[i] == 1.0)
        sunlit = true;
      else if (v[i] == 0.0)
        shaded = true;
      else
        throw ValidationError("sun visibility must be 0 or 1");
    }
    if (!sunlit || !shaded)
      throw ValidationError(
          "calibration needs at least one sunlit and one shaded pixel; with only one "
          "illumination state the direct and diffuse spectra cannot be separated");
  }
};

/// Collects calibration samples for the named library class from a radiance
/// cube. Pixels are (row, col) pairs.
inline CalibrationData gather_calibration(const SpectralCube& radiance,
                                          const IlluminationGeometry& geom,
                                          const EndmemberLibrary& lib,
                                          const std::string& class_name,
                                          const std::vector<std::pair<int, int>>& pixels) {
  radiance.validate();
  geom.validate();
  lib.validate();
  if (radiance.kind != CubeKind::Radiance)
    throw ValidationError("illumination estimation expects a radiance cube");
  if (radiance.width != geom.width || radiance.height != geom.height)
    throw ValidationError("cube and geometry dimensions differ");
  if (lib.bands() != radiance.bands())
    throw ValidationError("endmember library band count does not match cube");
  for (int b = 0; b < lib.bands(); ++b)
    if (std::abs(lib.wavelengths[b] - radiance.wavelengths[b]) > 1e-3)
      throw ValidationError("endmember wavelength grid does not match cube");

  CalibrationData cal;
  cal.m = lib.m.col(lib.class_index(class_name));
  cal.m_all = lib.m;
  const int n = static_cast<int>(pixels.size());
  cal.l.resize(radiance.bands(), n);
  cal.v.resize(n);
  cal.f.resize(n);
  cal.cos_theta.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto [r, c] = pixels[i];
    if (r < 0 || r >= radiance.height || c < 0 || c >= radiance.width) {
      std::ostringstream msg;
      msg << "calibration pixel (" << r << ", " << c << ") outside the "
          << radiance.height << "x" << radiance.width << " grid";
      throw ValidationError(msg.str());
    }
    const int p = radiance.pixel_index(r, c);
    cal.l.col(i) = radiance.values.col(p);
    cal.v[i] = geom.v[p];
    cal.f[i] = geom.f[p];
    cal.cos_theta[i] = geom.cos_theta[p];
  }
  cal.validate();
  return cal;
}

struct IlluminationFitOptions {
  double tol = 1e-4;   // stop when the objective improves by less than this
  int max_iter = 200;  // outer iteration cap
};

struct IlluminationEstimate {
  IlluminationSpectra spectra;
  Eigen::MatrixXd e;  // K x N indirect-light coefficients per calibration pixel
  std::vector<double> objective_history;  // index 0 is the starting objective
  bool converged = false;
};

/// Alternates two exact nonnegative least squares blocks: the illumination
/// spectra given the bounce coefficients, then the bounce coefficients given
/// the spectra. Both blocks minimize the same residual
///
///   0.5 * sum_n || l_n - m.(s1 v_n cos_n + s2 f_n) - diag(s1) Bm e_n ||^2
///
/// so the objective cannot increase; an increase beyond rounding noise means
/// the inputs are inconsistent and raises SolverError.
///
/// The spectra block over all samples splits exactly by band into
/// independent two-column problems, because band b of every residual touches
/// only s1[b] and s2[b]. That keeps the update linear in the band count.
///
/// Bounce coefficients are fitted for shaded samples only; sunlit samples
/// keep zero bounce. Without that restriction the objective is flat along a
/// whole subspace (skylight trades against sky-proportional bounce), and the
/// returned spectra would depend on the iteration path instead of the data.
inline IlluminationEstimate estimate_illumination(const CalibrationData& cal,
                                                  const IlluminationFitOptions& options = {}) {
  cal.validate();
  if (options.max_iter < 1) throw ValidationError("iteration cap must be positive");
  const int b = cal.bands();
  const int n = cal.samples();
  const int k = static_cast<int>(cal.m_all.cols());

  // Column j holds m . m_j, the reflectance of light that bounced off
  // material j before hitting the calibration surface.
  const Eigen::MatrixXd bounce = cal.m_all.array().colwise() * cal.m.array();

  IlluminationEstimate est;
  est.spectra.s1 = Eigen::VectorXd::Zero(b);
  est.spectra.s2 = Eigen::VectorXd::Zero(b);
  est.e = Eigen::MatrixXd::Zero(k, n);

  const auto objective = [&]() {
    const Eigen::MatrixXd indirect = est.spectra.s1.asDiagonal() * bounce * est.e;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd direct = cal.m.cwiseProduct(
          est.spectra.s1 * (cal.v[i] * cal.cos_theta[i]) + est.spectra.s2 * cal.f[i]);
      sum += (cal.l.col(i) - direct - indirect.col(i)).squaredNorm();
    }
    return 0.5 * sum;
  };

  est.objective_history.push_back(objective());

  for (int iter = 0; iter < options.max_iter; ++iter) {
    // Spectra block, one two-variable fit per band.
    const Eigen::MatrixXd bounce_mix = bounce * est.e;  // B x N
    for (int band = 0; band < b; ++band) {
      Eigen::MatrixXd design(n, 2);
      for (int i = 0; i < n; ++i) {
        design(i, 0) = cal.m[band] * cal.v[i] * cal.cos_theta[i] + bounce_mix(band, i);
        design(i, 1) = cal.m[band] * cal.f[i];
      }
      const Eigen::VectorXd s = nnls_active_set(design, cal.l.row(band).transpose());
      est.spectra.s1[band] = s[0];
      est.spectra.s2[band] = s[1];
    }

    // Bounce block, one small fit per shaded calibration pixel. Sunlit
    // samples keep the zero bounce they were initialized with: indirect
    // light matters where direct light is blocked, and a sunlit sample with
    // a free bounce coefficient could absorb skylight instead (adding
    // s1.(M w) to s2 while subtracting f_i * w from every e_i changes no
    // prediction, because bounce * w = m.(M w)). Pinning the sunlit columns
    // removes that trade, so the sunlit samples determine both spectra.
    const Eigen::MatrixXd scaled_bounce = est.spectra.s1.asDiagonal() * bounce;
    for (int i = 0; i < n; ++i) {
      if (cal.v[i] == 1.0) continue;
      const Eigen::VectorXd direct = cal.m.cwiseProduct(
          est.spectra.s1 * (cal.v[i] * cal.cos_theta[i]) + est.spectra.s2 * cal.f[i]);
      est.e.col(i) = nnls_active_set(scaled_bounce, cal.l.col(i) - direct);
    }

    const double prev = est.objective_history.back();
    const double curr = objective();
    est.objective_history.push_back(curr);
    if (curr > prev + 1e-9 * std::max(1.0, prev))
      throw SolverError("illumination fit diverged; objective increased");
    if (prev - curr < options.tol) {
      est.converged = true;
      break;
    }
  }
  return est;
}

// ---------------------------------------------------------------------------
// Stage two: per-pixel abundances and interaction coefficients.
// ---------------------------------------------------------------------------

struct UnmixOptions {
  AdmmSettings admm{};
  int threads = 1;
};

struct UnmixPixelResult {
  Eigen::VectorXd a;      // K, normalized to sum 1 unless degenerate
  Eigen::VectorXd a_raw;  // K, the abundance block as fitted, unnormalized
  Eigen::VectorXd x;      // K(K+1)/2 interaction coefficients, raw scale
  bool degenerate = false;
  bool converged = true;
};

/// One pixel of the radiance-domain fit. The design matrix scales each
/// endmember by the direct plus diffuse illumination reaching this pixel and
/// appends the interaction dictionary lit by the direct spectrum:
///
///   [ diag(s1 v cos + s2 f) M | diag(s1) Xi ]
///
/// The fit is nonnegative least squares by ADMM; the abundance block is then
/// normalized to the simplex. A pixel whose abundance mass collapses below
/// 1e-12 gets the uniform barycenter and a degenerate flag instead of a
/// division by almost zero.
inline UnmixPixelResult unmix_pixel(const Eigen::VectorXd& l, const Eigen::MatrixXd& m,
                                    const Eigen::MatrixXd& xi,
                                    const IlluminationSpectra& spectra, double v, double f,
                                    double cos_theta, const AdmmSettings& admm = {}) {
  const Eigen::Index k = m.cols();
  const Eigen::Index r = xi.cols();
  const Eigen::VectorXd direct = spectra.s1 * (v * cos_theta) + spectra.s2 * f;
  Eigen::MatrixXd design(m.rows(), k + r);
  design.leftCols(k) = direct.asDiagonal() * m;
  design.rightCols(r) = spectra.s1.asDiagonal() * xi;

  const AdmmResult fit = nnls_admm(design, l, admm);
  UnmixPixelResult result;
  result.converged = fit.converged;
  result.x = fit.x.tail(r);
  result.a_raw = fit.x.head(k);
  const double sum = result.a_raw.sum();
  if (sum < 1e-12) {
    result.degenerate = true;
    result.a = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  } else {
    result.a = result.a_raw / sum;
  }
  return result;
}

struct UnmixImageResult {
  AbundanceMap abundances;
  BilinearCoefficients bilinear;
  SpectralCube reconstruction;        // fitted radiance, for residual metrics
  std::vector<std::uint8_t> degenerate;  // per pixel
  int non_converged_pixels = 0;
};

/// Whole-image stage two. Pixels are independent, so the work splits across
/// threads by row block; every pixel writes only its own column, which keeps
/// the output identical for any thread count.
inline UnmixImageResult unmix_image(const SpectralCube& radiance,
                                    const IlluminationGeometry& geom,
                                    const EndmemberLibrary& lib,
                                    const IlluminationSpectra& spectra,
                                    const UnmixOptions& options = {}) {
  radiance.validate();
  geom.validate();
  lib.validate();
  spectra.validate();
  if (radiance.kind != CubeKind::Radiance)
    throw ValidationError("stage two expects a radiance cube");
  if (radiance.width != geom.width || radiance.height != geom.height)
    throw ValidationError("cube and geometry dimensions differ");
  if (lib.bands() != radiance.bands())
    throw ValidationError("endmember library band count does not match cube");
  for (int b = 0; b < lib.bands(); ++b)
    if (std::abs(lib.wavelengths[b] - radiance.wavelengths[b]) > 1e-3)
      throw ValidationError("endmember wavelength grid does not match cube");
  if (spectra.bands() != radiance.bands())
    throw ValidationError("illumination spectra band count does not match cube");

  const int p = radiance.pixels();
  const int k = lib.classes();
  const Eigen::MatrixXd xi = bilinear_dictionary(lib.m);

  UnmixImageResult result;
  result.abundances.width = radiance.width;
  result.abundances.height = radiance.height;
  result.abundances.class_names = lib.class_names;
  result.abundances.a.resize(k, p);
  result.bilinear.x.resize(xi.cols(), p);
  result.reconstruction = radiance;
  result.degenerate.assign(static_cast<size_t>(p), 0);
  std::vector<std::uint8_t> non_converged(static_cast<size_t>(p), 0);

  parallel_for(radiance.height, options.threads, [&](int row) {
    for (int col = 0; col < radiance.width; ++col) {
      const int idx = radiance.pixel_index(row, col);
      const UnmixPixelResult pixel =
          unmix_pixel(radiance.values.col(idx), lib.m, xi, spectra, geom.v[idx], geom.f[idx],
                      geom.cos_theta[idx], options.admm);
      result.abundances.a.col(idx) = pixel.a;
      result.bilinear.x.col(idx) = pixel.x;
      const Eigen::VectorXd direct =
          spectra.s1 * (geom.v[idx] * geom.cos_theta[idx]) + spectra.s2 * geom.f[idx];
      // The reconstruction uses the raw fitted block; normalization is a
      // reporting convention and would change the fitted radiance.
      result.reconstruction.values.col(idx) =
          direct.cwiseProduct(lib.m * pixel.a_raw) + spectra.s1.cwiseProduct(xi * pixel.x);
      result.degenerate[static_cast<size_t>(idx)] = pixel.degenerate ? 1 : 0;
      non_converged[static_cast<size_t>(idx)] = pixel.converged ? 0 : 1;
    }
  });

  for (const auto flag : non_converged) result.non_converged_pixels += flag;
  return result;
}

/// Reflectance each pixel would show under full, direct illumination: the
/// abundance-weighted endmember mix. This is the shadow-free product the
/// whole pipeline exists to recover.
inline SpectralCube shadow_compensated_reflectance(const AbundanceMap& abundances,
                                                   const EndmemberLibrary& lib) {
  abundances.validate();
  lib.validate();
  if (abundances.classes() != lib.classes())
    throw ValidationError("abundance map and library class counts differ");
  SpectralCube cube;
  cube.width = abundances.width;
  cube.height = abundances.height;
  cube.wavelengths = lib.wavelengths;
  cube.kind = CubeKind::Reflectance;
  cube.band_names = {};
  cube.values = lib.m * abundances.a;
  return cube;
}

}  // namespace iisu
