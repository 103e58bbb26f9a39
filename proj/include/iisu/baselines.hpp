#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iisu/parallel.hpp"
#include "iisu/solvers.hpp"
#include "iisu/types.hpp"
#include "iisu/unmixing.hpp"

namespace iisu {

/// Output of one reference unmixing method. `aux` carries the per-pixel
/// scale for the scaled solver and the shade fraction for the shade-aware
/// ones; `bilinear` is filled only by the interaction-term model. The
/// reconstruction lives in the method's observed domain so residual metrics
/// compare like with like.
struct BaselineResult {
  AbundanceMap abundances;
  Eigen::VectorXd aux;
  Eigen::MatrixXd bilinear;
  SpectralCube reconstruction;
  std::vector<std::uint8_t> degenerate;
  int non_converged_pixels = 0;
};

namespace detail {

inline void check_baseline_inputs(const SpectralCube& cube, const EndmemberLibrary& lib) {
  cube.validate();
  lib.validate();
  if (cube.kind == CubeKind::Radiance)
    throw ValidationError(
        "reference unmixing methods expect reflectance input; calibrate the radiance cube "
        "first");
  if (lib.bands() != cube.bands())
    throw ValidationError("endmember library band count does not match cube");
  for (int b = 0; b < lib.bands(); ++b)
    if (std::abs(lib.wavelengths[b] - cube.wavelengths[b]) > 1e-3)
      throw ValidationError("endmember wavelength grid does not match cube");
}

inline BaselineResult make_baseline_result(const SpectralCube& cube,
                                           const EndmemberLibrary& lib) {
  BaselineResult result;
  result.abundances.width = cube.width;
  result.abundances.height = cube.height;
  result.abundances.class_names = lib.class_names;
  result.abundances.a.resize(lib.classes(), cube.pixels());
  result.reconstruction = cube;
  result.degenerate.assign(static_cast<size_t>(cube.pixels()), 0);
  return result;
}

}  // namespace detail

/// Fully constrained unmixing: nonnegative abundances summing to one,
/// fitted directly to the observed reflectance. No shade handling at all,
/// which is exactly the point of keeping it in the benchmark: darkened
/// pixels pull its abundances toward whichever endmember is dimmest.
inline BaselineResult fcls_unmix(const SpectralCube& cube, const EndmemberLibrary& lib,
                                 int threads = 1) {
  detail::check_baseline_inputs(cube, lib);
  BaselineResult result = detail::make_baseline_result(cube, lib);
  parallel_for(cube.pixels(), threads, [&](int p) {
    const FclsResult fit = fcls_solve(lib.m, cube.values.col(p));
    result.abundances.a.col(p) = fit.a;
    result.reconstruction.values.col(p) = lib.m * fit.a;
    result.degenerate[static_cast<size_t>(p)] = fit.degenerate ? 1 : 0;
  });
  return result;
}

/// Fully constrained unmixing with a flat dark endmember appended to the
/// library. The reported abundances cover only the material classes,
/// renormalized after the shade share is removed; that share is returned
/// per pixel in `aux`.
inline BaselineResult fcls_shade_unmix(const SpectralCube& cube, const EndmemberLibrary& lib,
                                       int threads = 1, double shade_value = 0.001) {
  detail::check_baseline_inputs(cube, lib);
  const int k = lib.classes();
  Eigen::MatrixXd design(lib.bands(), k + 1);
  design.leftCols(k) = lib.m;
  design.col(k) = Eigen::VectorXd::Constant(lib.bands(), shade_value);

  BaselineResult result = detail::make_baseline_result(cube, lib);
  result.aux.resize(cube.pixels());
  parallel_for(cube.pixels(), threads, [&](int p) {
    const FclsResult fit = fcls_solve(design, cube.values.col(p));
    result.reconstruction.values.col(p) = design * fit.a;
    result.aux[p] = fit.degenerate ? 0.0 : fit.a[k];
    Eigen::VectorXd material = fit.a.head(k);
    const double sum = material.sum();
    if (fit.degenerate || sum < 1e-12) {
      result.degenerate[static_cast<size_t>(p)] = 1;
      result.abundances.a.col(p).setConstant(1.0 / static_cast<double>(k));
    } else {
      result.abundances.a.col(p) = material / sum;
    }
  });
  return result;
}

/// Scaled constrained unmixing: drops the sum constraint, fits y = M c with
/// c >= 0, and reads the brightness scale off the coefficient mass. The
/// abundances are scale invariant, so uniform darkening (the crude shadow
/// model) does not move them.
inline BaselineResult scls_unmix(const SpectralCube& cube, const EndmemberLibrary& lib,
                                 int threads = 1) {
  detail::check_baseline_inputs(cube, lib);
  const int k = lib.classes();
  BaselineResult result = detail::make_baseline_result(cube, lib);
  result.aux.resize(cube.pixels());
  parallel_for(cube.pixels(), threads, [&](int p) {
    const Eigen::VectorXd c = nnls_active_set(lib.m, cube.values.col(p));
    result.reconstruction.values.col(p) = lib.m * c;
    const double tau = c.sum();
    result.aux[p] = tau;
    if (tau < 1e-12) {
      result.degenerate[static_cast<size_t>(p)] = 1;
      result.abundances.a.col(p).setConstant(1.0 / static_cast<double>(k));
    } else {
      result.abundances.a.col(p) = c / tau;
    }
  });
  return result;
}

/// Bilinear mixing baseline: linear endmembers, a flat dark endmember, and
/// the pairwise interaction dictionary, all fitted jointly under
/// nonnegativity. Material abundances are renormalized as in the shade
/// variant; the interaction coefficients land in `bilinear`.
inline BaselineResult nlmm_unmix(const SpectralCube& cube, const EndmemberLibrary& lib,
                                 int threads = 1, double shade_value = 0.001,
                                 const AdmmSettings& admm = {}) {
  detail::check_baseline_inputs(cube, lib);
  const int k = lib.classes();
  const Eigen::MatrixXd xi = bilinear_dictionary(lib.m);
  const Eigen::Index r = xi.cols();
  Eigen::MatrixXd design(lib.bands(), k + 1 + r);
  design.leftCols(k) = lib.m;
  design.col(k) = Eigen::VectorXd::Constant(lib.bands(), shade_value);
  design.rightCols(r) = xi;

  BaselineResult result = detail::make_baseline_result(cube, lib);
  result.aux.resize(cube.pixels());
  result.bilinear.resize(r, cube.pixels());
  std::vector<std::uint8_t> non_converged(static_cast<size_t>(cube.pixels()), 0);
  parallel_for(cube.pixels(), threads, [&](int p) {
    const AdmmResult fit = nnls_admm(design, cube.values.col(p), admm);
    non_converged[static_cast<size_t>(p)] = fit.converged ? 0 : 1;
    result.reconstruction.values.col(p) = design * fit.x;
    result.aux[p] = fit.x[k];
    result.bilinear.col(p) = fit.x.tail(r);
    Eigen::VectorXd material = fit.x.head(k);
    const double sum = material.sum();
    if (sum < 1e-12) {
      result.degenerate[static_cast<size_t>(p)] = 1;
      result.abundances.a.col(p).setConstant(1.0 / static_cast<double>(k));
    } else {
      result.abundances.a.col(p) = material / sum;
    }
  });
  for (const auto flag : non_converged) result.non_converged_pixels += flag;
  return result;
}

}  // namespace iisu
