#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <utility>
#include <vector>

#include "iisu/parallel.hpp"
#include "iisu/types.hpp"

namespace iisu {

/// Replaces nodata cells by the value of the nearest valid cell, found by a
/// multi-source breadth-first flood over the 8-neighborhood. The scan order
/// is fixed, so the result is deterministic.
inline SurfaceModel fill_nodata(const SurfaceModel& dsm) {
  dsm.validate();
  if (!dsm.has_nodata()) return dsm;

  SurfaceModel filled = dsm;
  std::vector<char> known(static_cast<size_t>(dsm.width) * dsm.height, 0);
  std::deque<std::pair<int, int>> queue;
  for (int r = 0; r < dsm.height; ++r)
    for (int c = 0; c < dsm.width; ++c)
      if (!dsm.is_nodata(r, c)) {
        known[static_cast<size_t>(r) * dsm.width + c] = 1;
        queue.emplace_back(r, c);
      }
  if (queue.empty()) throw ValidationError("surface model contains no valid cells");

  while (!queue.empty()) {
    const auto [r, c] = queue.front();
    queue.pop_front();
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int nr = r + dr;
        const int nc = c + dc;
        if (nr < 0 || nr >= dsm.height || nc < 0 || nc >= dsm.width) continue;
        auto& flag = known[static_cast<size_t>(nr) * dsm.width + nc];
        if (flag) continue;
        flag = 1;
        filled.at(nr, nc) = filled.at(r, c);
        queue.emplace_back(nr, nc);
      }
  }
  filled.nodata.reset();
  return filled;
}

/// Unit surface normals in (east, north, up) coordinates, one per cell.
struct NormalField {
  int width = 0;
  int height = 0;
  Eigen::Matrix3Xd normals;  // column per pixel, row-major pixel order
};

/// Central-difference normals; one-sided differences at the grid border.
/// Row 0 is the northern edge, so the north derivative runs against the
/// row index.
inline NormalField surface_normals(const SurfaceModel& dsm) {
  dsm.validate();
  if (dsm.has_nodata())
    throw ValidationError("fill nodata cells before computing surface normals");

  NormalField field;
  field.width = dsm.width;
  field.height = dsm.height;
  field.normals.resize(3, static_cast<Eigen::Index>(dsm.width) * dsm.height);

  const double h = dsm.cell_size;
  for (int r = 0; r < dsm.height; ++r) {
    for (int c = 0; c < dsm.width; ++c) {
      const int ce = std::min(c + 1, dsm.width - 1);
      const int cw = std::max(c - 1, 0);
      const int rn = std::max(r - 1, 0);
      const int rs = std::min(r + 1, dsm.height - 1);
      const double dzde = (dsm.at(r, ce) - dsm.at(r, cw)) / ((ce - cw) * h);
      const double dzdn = (dsm.at(rn, c) - dsm.at(rs, c)) / ((rs - rn) * h);
      Eigen::Vector3d n(-dzde, -dzdn, 1.0);
      field.normals.col(static_cast<Eigen::Index>(r) * dsm.width + c) = n.normalized();
    }
  }
  return field;
}

/// Cosine of the solar incidence angle per cell, clamped at zero for faces
/// turned away from the sun.
inline Eigen::VectorXd incident_cosine(const NormalField& normals, const SunPosition& sun) {
  sun.validate();
  const Eigen::Vector3d d = sun.direction();
  Eigen::VectorXd cos_theta = normals.normals.transpose() * d;
  return cos_theta.cwiseMax(0.0).cwiseMin(1.0);
}

namespace detail {

/// Bilinear elevation lookup at fractional grid coordinates. The caller
/// guarantees the point lies inside [0, w-1] x [0, h-1].
inline double interpolate_elevation(const SurfaceModel& dsm, double row_f, double col_f) {
  const int r0 = std::clamp(static_cast<int>(std::floor(row_f)), 0, dsm.height - 1);
  const int c0 = std::clamp(static_cast<int>(std::floor(col_f)), 0, dsm.width - 1);
  const int r1 = std::min(r0 + 1, dsm.height - 1);
  const int c1 = std::min(c0 + 1, dsm.width - 1);
  const double fr = std::clamp(row_f - r0, 0.0, 1.0);
  const double fc = std::clamp(col_f - c0, 0.0, 1.0);
  const double top = (1.0 - fc) * dsm.at(r0, c0) + fc * dsm.at(r0, c1);
  const double bot = (1.0 - fc) * dsm.at(r1, c0) + fc * dsm.at(r1, c1);
  return (1.0 - fr) * top + fr * bot;
}

}  // namespace detail

/// Marches a ray from the cell center toward the sun in half-cell steps and
/// reports whether any terrain sample rises above the ray. Leaving the grid
/// counts as unobstructed sky.
inline bool sun_visible(const SurfaceModel& dsm, int row, int col, const SunPosition& sun) {
  sun.validate();
  const double zenith = sun.zenith_deg * std::numbers::pi / 180.0;
  if (zenith == 0.0) return true;  // sun at the zenith clears every wall

  const double azimuth = sun.azimuth_deg * std::numbers::pi / 180.0;
  const double de = std::sin(azimuth);       // east component per meter traveled
  const double dn = std::cos(azimuth);       // north component per meter traveled
  const double slope = 1.0 / std::tan(zenith);  // ray rise per horizontal meter

  const double z0 = dsm.at(row, col);
  const double step = 0.5 * dsm.cell_size;
  const double max_extent =
      std::hypot(dsm.width, dsm.height) * dsm.cell_size + 2.0 * dsm.cell_size;

  for (double t = step; t <= max_extent; t += step) {
    const double col_f = col + t * de / dsm.cell_size;
    const double row_f = row - t * dn / dsm.cell_size;
    if (col_f < 0.0 || col_f > dsm.width - 1 || row_f < 0.0 || row_f > dsm.height - 1)
      return true;
    const double terrain = detail::interpolate_elevation(dsm, row_f, col_f);
    if (terrain > z0 + t * slope + 1e-9) return false;
  }
  return true;
}

/// Binary sun visibility for every cell.
inline Eigen::VectorXd sun_visibility(const SurfaceModel& dsm, const SunPosition& sun,
                                      int threads = 1) {
  dsm.validate();
  if (dsm.has_nodata()) throw ValidationError("fill nodata cells before visibility analysis");
  Eigen::VectorXd v(static_cast<Eigen::Index>(dsm.width) * dsm.height);
  parallel_for(dsm.height, threads, [&](int r) {
    for (int c = 0; c < dsm.width; ++c)
      v[static_cast<Eigen::Index>(r) * dsm.width + c] =
          sun_visible(dsm, r, c, sun) ? 1.0 : 0.0;
  });
  return v;
}

/// Fraction of the sky hemisphere open above one cell. For each of
/// `n_azimuths` directions the horizon elevation angle h is found by a
/// half-cell march across the whole grid, and the directions are averaged
/// as cos^2:
///
///   f = (1/N) sum  1 / (1 + tan^2 h_i)
///
/// A flat plain gives f = 1; an infinitely tall enclosing wall gives 0.
inline double sky_view_factor_at(const SurfaceModel& dsm, int row, int col,
                                 int n_azimuths = 64) {
  if (n_azimuths < 8) throw ValidationError("sky view factor needs at least 8 azimuths");
  const double z0 = dsm.at(row, col);
  const double step = 0.5 * dsm.cell_size;
  const double max_extent =
      std::hypot(dsm.width, dsm.height) * dsm.cell_size + 2.0 * dsm.cell_size;

  double sum = 0.0;
  for (int i = 0; i < n_azimuths; ++i) {
    const double azimuth = 2.0 * std::numbers::pi * i / n_azimuths;
    const double de = std::sin(azimuth);
    const double dn = std::cos(azimuth);
    double max_tan = 0.0;
    for (double t = step; t <= max_extent; t += step) {
      const double col_f = col + t * de / dsm.cell_size;
      const double row_f = row - t * dn / dsm.cell_size;
      if (col_f < 0.0 || col_f > dsm.width - 1 || row_f < 0.0 || row_f > dsm.height - 1)
        break;
      const double rise = detail::interpolate_elevation(dsm, row_f, col_f) - z0;
      if (rise > 0.0) max_tan = std::max(max_tan, rise / t);
    }
    sum += 1.0 / (1.0 + max_tan * max_tan);
  }
  return sum / n_azimuths;
}

inline Eigen::VectorXd sky_view_factors(const SurfaceModel& dsm, int n_azimuths = 64,
                                        int threads = 1) {
  dsm.validate();
  if (dsm.has_nodata()) throw ValidationError("fill nodata cells before sky view analysis");
  Eigen::VectorXd f(static_cast<Eigen::Index>(dsm.width) * dsm.height);
  parallel_for(dsm.height, threads, [&](int r) {
    for (int c = 0; c < dsm.width; ++c)
      f[static_cast<Eigen::Index>(r) * dsm.width + c] =
          sky_view_factor_at(dsm, r, c, n_azimuths);
  });
  return f;
}

struct GeometryOptions {
  int n_azimuths = 64;
  int threads = 1;
};

/// End-to-end illumination geometry: nodata fill, normals, solar incidence,
/// cast shadows, and sky openness in one pass.
inline IlluminationGeometry illumination_geometry(const SurfaceModel& dsm,
                                                  const SunPosition& sun,
                                                  const GeometryOptions& options = {}) {
  const SurfaceModel filled = fill_nodata(dsm);
  const NormalField normals = surface_normals(filled);

  IlluminationGeometry geom;
  geom.width = filled.width;
  geom.height = filled.height;
  geom.cos_theta = incident_cosine(normals, sun);
  geom.v = sun_visibility(filled, sun, options.threads);
  geom.f = sky_view_factors(filled, options.n_azimuths, options.threads);
  geom.validate();
  return geom;
}

}  // namespace iisu
