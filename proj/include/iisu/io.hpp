#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "iisu/types.hpp"

namespace iisu {

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap32(v);
}

inline void write_f32(std::ostream& out, double value) {
  const float f = static_cast<float>(value);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  bits = to_little_endian(bits);
  out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
}

inline double read_f32(std::istream& in) {
  std::uint32_t bits = 0;
  in.read(reinterpret_cast<char*>(&bits), sizeof(bits));
  bits = to_little_endian(bits);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return static_cast<double>(f);
}

/// Cube paths name the JSON header; the payload lives next to it. A
/// trailing ".json" is optional on input.
inline std::filesystem::path cube_stem(const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    auto stem = path;
    stem.replace_extension();
    return stem;
  }
  return path;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spectral cube: JSON header sidecar + raw band-sequential f32 payload.
// ---------------------------------------------------------------------------

inline void save_cube(const SpectralCube& cube, const std::string& path) {
  cube.validate();
  const auto stem = detail::cube_stem(path);
  const auto header_path = std::filesystem::path(stem).concat(".json");
  const auto data_path = std::filesystem::path(stem).concat(".bin");

  nlohmann::json header;
  header["width"] = cube.width;
  header["height"] = cube.height;
  header["bands"] = cube.bands();
  header["wavelengths"] = std::vector<double>(
      cube.wavelengths.data(), cube.wavelengths.data() + cube.wavelengths.size());
  header["kind"] = to_string(cube.kind);
  header["dtype"] = "f32";
  header["interleave"] = "bsq";
  header["byte_order"] = "little";
  header["data"] = data_path.filename().string();
  if (!cube.band_names.empty()) header["band_names"] = cube.band_names;

  std::ofstream hout(header_path);
  if (!hout) throw ValidationError("cannot write cube header: " + header_path.string());
  hout << header.dump(2) << "\n";
  hout.close();

  std::ofstream bout(data_path, std::ios::binary);
  if (!bout) throw ValidationError("cannot write cube payload: " + data_path.string());
  for (int b = 0; b < cube.bands(); ++b)
    for (int p = 0; p < cube.pixels(); ++p) detail::write_f32(bout, cube.values(b, p));
  if (!bout) throw ValidationError("write failed: " + data_path.string());
}

inline SpectralCube load_cube(const std::string& path) {
  const auto stem = detail::cube_stem(path);
  const auto header_path = std::filesystem::path(stem).concat(".json");
  std::ifstream hin(header_path);
  if (!hin) throw ValidationError("cannot open cube header: " + header_path.string());
  nlohmann::json header;
  try {
    hin >> header;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed cube header " + header_path.string() + ": " + e.what());
  }

  SpectralCube cube;
  try {
    cube.width = header.at("width").get<int>();
    cube.height = header.at("height").get<int>();
    const int bands = header.at("bands").get<int>();
    const auto wl = header.at("wavelengths").get<std::vector<double>>();
    if (static_cast<int>(wl.size()) != bands)
      throw ValidationError("wavelength count does not match band count");
    cube.wavelengths = Eigen::Map<const Eigen::VectorXd>(wl.data(), wl.size());
    cube.kind = cube_kind_from_string(header.at("kind").get<std::string>());
    if (header.at("dtype").get<std::string>() != "f32")
      throw ValidationError("unsupported cube dtype");
    if (header.at("interleave").get<std::string>() != "bsq")
      throw ValidationError("unsupported cube interleave");
    if (header.contains("band_names"))
      cube.band_names = header["band_names"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid cube header " + header_path.string() + ": " + e.what());
  }

  const auto data_path = header_path.parent_path() / header.at("data").get<std::string>();
  std::ifstream bin(data_path, std::ios::binary);
  if (!bin) throw ValidationError("cannot open cube payload: " + data_path.string());
  bin.seekg(0, std::ios::end);
  const auto byte_count = static_cast<std::uint64_t>(bin.tellg());
  bin.seekg(0, std::ios::beg);

  const std::uint64_t expected =
      static_cast<std::uint64_t>(cube.bands()) * cube.width * cube.height * 4u;
  if (byte_count != expected) {
    std::ostringstream msg;
    msg << "cube payload size mismatch: " << data_path.string() << " holds " << byte_count
        << " bytes, header declares " << expected;
    throw ValidationError(msg.str());
  }

  cube.values.resize(cube.bands(), cube.width * cube.height);
  for (int b = 0; b < cube.bands(); ++b)
    for (int p = 0; p < cube.pixels(); ++p) cube.values(b, p) = detail::read_f32(bin);
  cube.validate();
  return cube;
}

// ---------------------------------------------------------------------------
// Surface model: ESRI ASCII grid subset (ncols/nrows/cellsize/nodata_value).
// ---------------------------------------------------------------------------

inline void save_surface(const SurfaceModel& dsm, const std::string& path) {
  dsm.validate();
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write surface model: " + path);
  out << "ncols " << dsm.width << "\n";
  out << "nrows " << dsm.height << "\n";
  out << "xllcorner 0.0\nyllcorner 0.0\n";
  out << "cellsize " << std::setprecision(17) << dsm.cell_size << "\n";
  if (dsm.nodata.has_value()) out << "NODATA_value " << *dsm.nodata << "\n";
  for (int r = 0; r < dsm.height; ++r) {
    for (int c = 0; c < dsm.width; ++c) {
      if (c) out << ' ';
      out << std::setprecision(17) << dsm.at(r, c);
    }
    out << "\n";
  }
  if (!out) throw ValidationError("write failed: " + path);
}

inline SurfaceModel load_surface(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open surface model: " + path);

  SurfaceModel dsm;
  dsm.width = dsm.height = -1;
  dsm.cell_size = -1.0;
  std::vector<double> values;

  std::string token;
  while (in >> token) {
    std::string key = token;
    std::transform(key.begin(), key.end(), key.begin(), ::tolower);
    if (key == "ncols" || key == "nrows" || key == "cellsize" || key == "nodata_value" ||
        key == "xllcorner" || key == "yllcorner" || key == "xllcenter" || key == "yllcenter") {
      double value;
      if (!(in >> value)) throw ValidationError("malformed header in " + path);
      if (key == "ncols") dsm.width = static_cast<int>(value);
      else if (key == "nrows") dsm.height = static_cast<int>(value);
      else if (key == "cellsize") dsm.cell_size = value;
      else if (key == "nodata_value") dsm.nodata = value;
    } else {
      // First non-header token starts the data block.
      try {
        values.push_back(std::stod(token));
      } catch (const std::exception&) {
        throw ValidationError("unexpected token '" + token + "' in " + path);
      }
      double v;
      while (in >> v) values.push_back(v);
      break;
    }
  }

  if (dsm.width <= 0 || dsm.height <= 0)
    throw ValidationError("surface model header missing ncols/nrows: " + path);
  if (!(dsm.cell_size > 0.0))
    throw ValidationError("surface model header missing positive cellsize: " + path);
  if (static_cast<int>(values.size()) != dsm.width * dsm.height) {
    std::ostringstream msg;
    msg << "surface model " << path << " holds " << values.size() << " values, expected "
        << dsm.width * dsm.height;
    throw ValidationError(msg.str());
  }
  dsm.elevations = Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
  dsm.validate();
  return dsm;
}

// ---------------------------------------------------------------------------
// Endmember library: CSV with a wavelength_nm column and one column per class.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // Trim surrounding whitespace.
    const auto begin = field.find_first_not_of(" \t\r");
    const auto end = field.find_last_not_of(" \t\r");
    fields.push_back(begin == std::string::npos ? "" : field.substr(begin, end - begin + 1));
  }
  return fields;
}

}  // namespace detail

inline void save_endmembers(const EndmemberLibrary& lib, const std::string& path) {
  lib.validate();
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write endmember library: " + path);
  out << "wavelength_nm";
  for (const auto& name : lib.class_names) out << "," << name;
  out << "\n";
  for (int b = 0; b < lib.bands(); ++b) {
    out << std::setprecision(17) << lib.wavelengths[b];
    for (int k = 0; k < lib.classes(); ++k) out << "," << std::setprecision(17) << lib.m(b, k);
    out << "\n";
  }
  if (!out) throw ValidationError("write failed: " + path);
}

inline EndmemberLibrary load_endmembers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open endmember library: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty endmember file: " + path);
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "wavelength_nm")
    throw ValidationError("endmember CSV must start with a wavelength_nm column: " + path);

  EndmemberLibrary lib;
  lib.class_names.assign(header.begin() + 1, header.end());
  const int k = static_cast<int>(lib.class_names.size());

  std::vector<double> wavelengths;
  std::vector<double> body;  // row-major
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    if (static_cast<int>(fields.size()) != k + 1) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": expected " << (k + 1) << " fields, got "
          << fields.size();
      throw ValidationError(msg.str());
    }
    try {
      wavelengths.push_back(std::stod(fields[0]));
      for (int j = 0; j < k; ++j) {
        const double v = std::stod(fields[j + 1]);
        if (!(v >= 0.0 && v <= 1.0)) {
          std::ostringstream msg;
          msg << path << ":" << line_no << ": reflectance " << v << " outside [0, 1]";
          throw ValidationError(msg.str());
        }
        body.push_back(v);
      }
    } catch (const std::invalid_argument&) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": non-numeric field");
    }
  }

  const int b = static_cast<int>(wavelengths.size());
  if (b < 2) throw ValidationError("endmember library needs at least two rows: " + path);
  lib.wavelengths = Eigen::Map<const Eigen::VectorXd>(wavelengths.data(), b);
  lib.m.resize(b, k);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < k; ++j) lib.m(i, j) = body[i * k + j];
  lib.validate();
  return lib;
}

// ---------------------------------------------------------------------------
// Calibration pixel selection: JSON list of (row, col) indices + class name.
// ---------------------------------------------------------------------------

struct PixelSelection {
  std::string class_name;
  std::vector<std::pair<int, int>> pixels;  // (row, col)
};

inline void save_selection(const PixelSelection& sel, const std::string& path) {
  nlohmann::json j;
  j["class_name"] = sel.class_name;
  auto& arr = j["pixels"] = nlohmann::json::array();
  for (const auto& [r, c] : sel.pixels) arr.push_back({r, c});
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write selection: " + path);
  out << j.dump(2) << "\n";
}

inline PixelSelection load_selection(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open selection: " + path);
  nlohmann::json j;
  try {
    in >> j;
    PixelSelection sel;
    sel.class_name = j.at("class_name").get<std::string>();
    for (const auto& p : j.at("pixels"))
      sel.pixels.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    return sel;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed selection " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Illumination spectra: CSV with wavelength_nm, s1, s2 columns.
// ---------------------------------------------------------------------------

inline void save_spectra_csv(const IlluminationSpectra& spectra,
                             const Eigen::VectorXd& wavelengths, const std::string& path) {
  spectra.validate();
  if (wavelengths.size() != spectra.bands())
    throw ValidationError("spectra wavelength count mismatch");
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write spectra: " + path);
  out << "wavelength_nm,s1,s2\n";
  for (int b = 0; b < spectra.bands(); ++b)
    out << std::setprecision(17) << wavelengths[b] << "," << spectra.s1[b] << ","
        << spectra.s2[b] << "\n";
}

/// Loads s1/s2 and checks the CSV's wavelength grid against `expected`
/// (pass an empty vector to skip the check).
inline IlluminationSpectra load_spectra_csv(const std::string& path,
                                            const Eigen::VectorXd& expected = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open spectra: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty spectra file: " + path);
  const auto header = detail::split_csv_line(line);
  if (header.size() != 3 || header[0] != "wavelength_nm" || header[1] != "s1" ||
      header[2] != "s2")
    throw ValidationError("spectra CSV must have wavelength_nm,s1,s2 columns: " + path);

  std::vector<double> wl, s1, s2;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) throw ValidationError("malformed spectra row in " + path);
    wl.push_back(std::stod(fields[0]));
    s1.push_back(std::stod(fields[1]));
    s2.push_back(std::stod(fields[2]));
  }
  IlluminationSpectra spectra;
  spectra.s1 = Eigen::Map<const Eigen::VectorXd>(s1.data(), s1.size());
  spectra.s2 = Eigen::Map<const Eigen::VectorXd>(s2.data(), s2.size());
  spectra.validate();
  if (expected.size() > 0) {
    if (static_cast<Eigen::Index>(wl.size()) != expected.size())
      throw ValidationError("spectra band count does not match cube: " + path);
    for (Eigen::Index b = 0; b < expected.size(); ++b)
      if (std::abs(wl[b] - expected[b]) > 1e-3)
        throw ValidationError("spectra wavelength grid does not match cube: " + path);
  }
  return spectra;
}

// ---------------------------------------------------------------------------
// Raster adapters for per-pixel products.
// ---------------------------------------------------------------------------

/// Packs (v, f, cos_theta) into a 3-band cube for CLI interchange. Band
/// positions carry synthetic wavelengths 0,1,2 since there is no
/// spectral axis.
inline SpectralCube geometry_to_cube(const IlluminationGeometry& geom) {
  geom.validate();
  SpectralCube cube;
  cube.width = geom.width;
  cube.height = geom.height;
  cube.wavelengths = Eigen::Vector3d(0.0, 1.0, 2.0);
  cube.kind = CubeKind::Reflectance;
  cube.band_names = {"v", "f", "cos_theta"};
  cube.values.resize(3, geom.pixels());
  cube.values.row(0) = geom.v.transpose();
  cube.values.row(1) = geom.f.transpose();
  cube.values.row(2) = geom.cos_theta.transpose();
  return cube;
}

inline IlluminationGeometry geometry_from_cube(const SpectralCube& cube) {
  cube.validate();
  if (cube.bands() != 3) throw ValidationError("geometry raster must have exactly 3 bands");
  IlluminationGeometry geom;
  geom.width = cube.width;
  geom.height = cube.height;
  geom.v = cube.values.row(0).transpose();
  geom.f = cube.values.row(1).transpose();
  geom.cos_theta = cube.values.row(2).transpose();
  // f32 quantization on disk can nudge exact {0,1} values; snap v back.
  for (Eigen::Index i = 0; i < geom.v.size(); ++i) geom.v[i] = geom.v[i] >= 0.5 ? 1.0 : 0.0;
  geom.validate();
  return geom;
}

/// Abundance maps travel in the cube container with one band per class.
inline SpectralCube abundance_to_cube(const AbundanceMap& map) {
  map.validate();
  SpectralCube cube;
  cube.width = map.width;
  cube.height = map.height;
  cube.wavelengths = Eigen::VectorXd::LinSpaced(map.classes(), 0.0, map.classes() - 1.0);
  if (map.classes() == 1) cube.wavelengths = Eigen::VectorXd::Zero(1);
  cube.kind = CubeKind::Reflectance;
  cube.band_names = map.class_names;
  cube.values = map.a;
  return cube;
}

inline AbundanceMap abundance_from_cube(const SpectralCube& cube) {
  cube.validate();
  AbundanceMap map;
  map.width = cube.width;
  map.height = cube.height;
  map.a = cube.values;
  map.class_names = cube.band_names;
  map.validate();
  return map;
}

}  // namespace iisu
