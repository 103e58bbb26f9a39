#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace iisu {

/// Raised when an input, file, or domain object violates its invariants.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an iterative solver fails to reach its termination criteria.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CubeKind { Radiance, ApparentReflectance, Reflectance };

inline std::string to_string(CubeKind kind) {
  switch (kind) {
    case CubeKind::Radiance: return "radiance";
    case CubeKind::ApparentReflectance: return "apparent_reflectance";
    case CubeKind::Reflectance: return "reflectance";
  }
  throw ValidationError("unknown cube kind");
}

inline CubeKind cube_kind_from_string(const std::string& s) {
  if (s == "radiance") return CubeKind::Radiance;
  if (s == "apparent_reflectance") return CubeKind::ApparentReflectance;
  if (s == "reflectance") return CubeKind::Reflectance;
  throw ValidationError("unknown cube kind: " + s);
}

/// B-band raster over width x height pixels. Values are stored as a
/// bands x pixels matrix; pixel p = row * width + col. On disk the
/// payload is band-sequential 32-bit little-endian floats, in memory
/// everything is double.
struct SpectralCube {
  int width = 0;
  int height = 0;
  Eigen::VectorXd wavelengths;  // nanometers, strictly increasing, size B
  CubeKind kind = CubeKind::Radiance;
  Eigen::MatrixXd values;  // B x P
  std::vector<std::string> band_names;  // optional labels (class names etc.)

  int bands() const { return static_cast<int>(wavelengths.size()); }
  int pixels() const { return width * height; }
  int pixel_index(int row, int col) const { return row * width + col; }

  Eigen::VectorXd pixel(int p) const { return values.col(p); }

  void validate() const {
    if (width <= 0 || height <= 0) throw ValidationError("cube has no pixels");
    if (bands() <= 0) throw ValidationError("cube has no bands");
    if (values.rows() != bands() || values.cols() != pixels())
      throw ValidationError("cube value matrix does not match declared dimensions");
    if (!values.allFinite()) throw ValidationError("cube contains non-finite values");
    for (int b = 1; b < bands(); ++b)
      if (!(wavelengths[b] > wavelengths[b - 1]))
        throw ValidationError("cube wavelengths are not strictly increasing");
    if (kind != CubeKind::Radiance && values.minCoeff() < 0.0)
      throw ValidationError("reflectance cube contains negative values");
    if (!band_names.empty() && static_cast<int>(band_names.size()) != bands())
      throw ValidationError("band name count does not match band count");
  }
};

/// Elevation grid (DSM). Row 0 is the northern edge; elevations are
/// row-major in meters. Cells equal to the nodata sentinel are treated
/// as missing and filled before any geometry runs on the grid.
struct SurfaceModel {
  int width = 0;
  int height = 0;
  double cell_size = 1.0;  // meters
  Eigen::VectorXd elevations;  // row-major, size width * height
  std::optional<double> nodata;

  double at(int row, int col) const { return elevations[row * width + col]; }
  double& at(int row, int col) { return elevations[row * width + col]; }

  bool is_nodata(int row, int col) const {
    return nodata.has_value() && at(row, col) == *nodata;
  }

  bool has_nodata() const {
    if (!nodata.has_value()) return false;
    for (int i = 0; i < elevations.size(); ++i)
      if (elevations[i] == *nodata) return true;
    return false;
  }

  void validate() const {
    if (width <= 0 || height <= 0) throw ValidationError("surface model has no cells");
    if (!(cell_size > 0.0)) throw ValidationError("cell size must be positive");
    if (elevations.size() != static_cast<Eigen::Index>(width) * height)
      throw ValidationError("elevation count does not match grid dimensions");
    for (int i = 0; i < elevations.size(); ++i) {
      const double z = elevations[i];
      if (nodata.has_value() && z == *nodata) continue;
      if (!std::isfinite(z)) throw ValidationError("surface model contains non-finite elevation");
    }
  }
};

/// Sun direction given as zenith angle (degrees from vertical) and
/// azimuth (degrees clockwise from north).
struct SunPosition {
  double zenith_deg = 0.0;   // [0, 90)
  double azimuth_deg = 0.0;  // [0, 360)

  void validate() const {
    if (!(zenith_deg >= 0.0 && zenith_deg < 90.0))
      throw ValidationError("sun zenith must lie in [0, 90) degrees");
    if (!(azimuth_deg >= 0.0 && azimuth_deg < 360.0))
      throw ValidationError("sun azimuth must lie in [0, 360) degrees");
  }

  /// Unit vector pointing toward the sun in (east, north, up) coordinates.
  Eigen::Vector3d direction() const {
    const double z = zenith_deg * M_PI / 180.0;
    const double a = azimuth_deg * M_PI / 180.0;
    return {std::sin(z) * std::sin(a), std::sin(z) * std::cos(a), std::cos(z)};
  }
};

/// Per-pixel illumination parameters derived from the DSM: sun visibility
/// v (binary cast-shadow mask), sky factor f, and incident cosine.
struct IlluminationGeometry {
  int width = 0;
  int height = 0;
  Eigen::VectorXd v;          // {0, 1}
  Eigen::VectorXd f;          // [0, 1]
  Eigen::VectorXd cos_theta;  // [0, 1]

  int pixels() const { return width * height; }

  void validate() const {
    const Eigen::Index p = static_cast<Eigen::Index>(width) * height;
    if (p <= 0) throw ValidationError("illumination geometry has no pixels");
    if (v.size() != p || f.size() != p || cos_theta.size() != p)
      throw ValidationError("illumination geometry size mismatch");
    for (Eigen::Index i = 0; i < p; ++i) {
      if (v[i] != 0.0 && v[i] != 1.0) throw ValidationError("visibility must be 0 or 1");
      if (!(f[i] >= 0.0 && f[i] <= 1.0)) throw ValidationError("sky factor outside [0, 1]");
      if (!(cos_theta[i] >= 0.0 && cos_theta[i] <= 1.0))
        throw ValidationError("incident cosine outside [0, 1]");
    }
  }
};

/// Reflectance endmember library: one column per material class.
struct EndmemberLibrary {
  Eigen::MatrixXd m;  // B x K, reflectance
  std::vector<std::string> class_names;
  Eigen::VectorXd wavelengths;  // nanometers, size B

  int bands() const { return static_cast<int>(m.rows()); }
  int classes() const { return static_cast<int>(m.cols()); }

  int class_index(const std::string& name) const {
    for (int k = 0; k < classes(); ++k)
      if (class_names[k] == name) return k;
    throw ValidationError("unknown endmember class: " + name);
  }

  void validate() const {
    if (classes() < 1) throw ValidationError("endmember library needs at least one class");
    if (bands() < 2) throw ValidationError("endmember library needs at least two bands");
    if (wavelengths.size() != bands())
      throw ValidationError("endmember wavelength count does not match band count");
    if (static_cast<int>(class_names.size()) != classes())
      throw ValidationError("class name count does not match class count");
    if (!m.allFinite() || m.minCoeff() < 0.0)
      throw ValidationError("endmember reflectance must be finite and nonnegative");
    for (int b = 1; b < bands(); ++b)
      if (!(wavelengths[b] > wavelengths[b - 1]))
        throw ValidationError("endmember wavelengths are not strictly increasing");
    std::set<std::string> unique(class_names.begin(), class_names.end());
    if (unique.size() != class_names.size())
      throw ValidationError("duplicate endmember class names");
  }
};

/// Direct-sun (s1) and diffuse-sky (s2) spectral irradiance, per band.
struct IlluminationSpectra {
  Eigen::VectorXd s1;
  Eigen::VectorXd s2;

  int bands() const { return static_cast<int>(s1.size()); }

  void validate() const {
    if (s1.size() == 0 || s1.size() != s2.size())
      throw ValidationError("illumination spectra size mismatch");
    if (!s1.allFinite() || !s2.allFinite() || s1.minCoeff() < 0.0 || s2.minCoeff() < 0.0)
      throw ValidationError("illumination spectra must be finite and nonnegative");
  }
};

/// Per-pixel fractional abundances, one row per class.
struct AbundanceMap {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd a;  // K x P, nonnegative
  std::vector<std::string> class_names;

  int classes() const { return static_cast<int>(a.rows()); }
  int pixels() const { return static_cast<int>(a.cols()); }

  void validate() const {
    if (classes() < 1 || pixels() < 1) throw ValidationError("abundance map is empty");
    if (pixels() != width * height)
      throw ValidationError("abundance map dimensions do not match pixel count");
    if (!a.allFinite() || a.minCoeff() < 0.0)
      throw ValidationError("abundances must be finite and nonnegative");
    if (!class_names.empty() && static_cast<int>(class_names.size()) != classes())
      throw ValidationError("abundance class name count mismatch");
  }
};

/// Per-pixel coefficients of the bilinear endmember dictionary,
/// R = K(K+1)/2 rows.
struct BilinearCoefficients {
  Eigen::MatrixXd x;  // R x P, nonnegative

  void validate() const {
    if (!x.allFinite() || (x.size() > 0 && x.minCoeff() < 0.0))
      throw ValidationError("bilinear coefficients must be finite and nonnegative");
  }
};

inline int bilinear_dictionary_size(int classes) {
  return classes * (classes + 1) / 2;
}

}  // namespace iisu
