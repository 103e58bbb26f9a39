#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "iisu/types.hpp"

namespace iisu {

/// Root mean square abundance error over all classes and pixels.
inline double rmse_a(const AbundanceMap& truth, const AbundanceMap& est) {
  truth.validate();
  est.validate();
  if (truth.classes() != est.classes() || truth.pixels() != est.pixels())
    throw ValidationError("abundance maps have different shapes");
  const double n = static_cast<double>(truth.classes()) * truth.pixels();
  return std::sqrt((truth.a - est.a).squaredNorm() / n);
}

/// Root mean square error between two cubes over all bands and pixels.
inline double rmse_r(const SpectralCube& truth, const SpectralCube& est) {
  truth.validate();
  est.validate();
  if (truth.bands() != est.bands() || truth.pixels() != est.pixels())
    throw ValidationError("cubes have different shapes");
  const double n = static_cast<double>(truth.bands()) * truth.pixels();
  return std::sqrt((truth.values - est.values).squaredNorm() / n);
}

/// Reconstruction RMSE normalized by the dynamic range of the observed
/// cube, taken over the whole cube rather than per band. Needs a
/// non-constant observation for the range to mean anything.
inline double nre(const SpectralCube& observed, const SpectralCube& reconstructed) {
  observed.validate();
  reconstructed.validate();
  if (observed.bands() != reconstructed.bands() ||
      observed.pixels() != reconstructed.pixels())
    throw ValidationError("cubes have different shapes");
  const double lo = observed.values.minCoeff();
  const double hi = observed.values.maxCoeff();
  if (!(hi > lo))
    throw ValidationError("observed cube is constant; normalized error is undefined");
  const double n = static_cast<double>(observed.bands()) * observed.pixels();
  return std::sqrt((observed.values - reconstructed.values).squaredNorm() / n) / (hi - lo);
}

/// Per-pixel winning class; ties go to the lowest class index.
inline std::vector<int> classify(const AbundanceMap& map) {
  map.validate();
  std::vector<int> labels(static_cast<size_t>(map.pixels()));
  for (int p = 0; p < map.pixels(); ++p) {
    int best = 0;
    for (int k = 1; k < map.classes(); ++k)
      if (map.a(k, p) > map.a(best, p)) best = k;
    labels[static_cast<size_t>(p)] = best;
  }
  return labels;
}

/// Fraction of matching labels, optionally restricted to pixels where
/// `mask` is nonzero.
inline double classification_accuracy(const std::vector<int>& truth,
                                      const std::vector<int>& est,
                                      const std::vector<std::uint8_t>* mask = nullptr) {
  if (truth.size() != est.size()) throw ValidationError("label vectors differ in length");
  if (mask && mask->size() != truth.size())
    throw ValidationError("mask length does not match labels");
  std::size_t considered = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (mask && (*mask)[i] == 0) continue;
    ++considered;
    hits += truth[i] == est[i] ? 1 : 0;
  }
  if (considered == 0) throw ValidationError("no pixels selected for accuracy");
  return static_cast<double>(hits) / static_cast<double>(considered);
}

/// Abundance RMSE split by class, same normalization per class.
inline Eigen::VectorXd per_class_rmse(const AbundanceMap& truth, const AbundanceMap& est) {
  if (truth.classes() != est.classes() || truth.pixels() != est.pixels())
    throw ValidationError("abundance maps have different shapes");
  Eigen::VectorXd out(truth.classes());
  for (int k = 0; k < truth.classes(); ++k)
    out[k] = std::sqrt((truth.a.row(k) - est.a.row(k)).squaredNorm() / truth.pixels());
  return out;
}

struct EvaluationReport {
  std::string method;
  double rmse_a = 0.0;
  double rmse_r = 0.0;
  double nre = 0.0;
  Eigen::VectorXd per_class_rmse;
  double classification_accuracy = -1.0;  // negative when no ground truth labels

  void validate() const {
    if (!(rmse_a >= 0.0) || !(rmse_r >= 0.0) || !(nre >= 0.0))
      throw ValidationError("metrics must be nonnegative and finite");
  }
};

/// Metrics for one method against scene ground truth. `observed` is the
/// cube the method consumed and `reconstruction` its model fit in the same
/// domain, so the normalized error is comparable across methods that read
/// different domains.
inline EvaluationReport evaluate_method(const std::string& method,
                                        const AbundanceMap& truth_abundance,
                                        const SpectralCube& truth_reflectance,
                                        const AbundanceMap& est_abundance,
                                        const SpectralCube& est_reflectance,
                                        const SpectralCube& observed,
                                        const SpectralCube& reconstruction) {
  EvaluationReport report;
  report.method = method;
  report.rmse_a = rmse_a(truth_abundance, est_abundance);
  report.rmse_r = rmse_r(truth_reflectance, est_reflectance);
  report.nre = nre(observed, reconstruction);
  report.per_class_rmse = per_class_rmse(truth_abundance, est_abundance);
  report.classification_accuracy =
      classification_accuracy(classify(truth_abundance), classify(est_abundance));
  report.validate();
  return report;
}

inline std::string comparison_csv(const std::vector<EvaluationReport>& reports) {
  if (reports.empty()) throw ValidationError("comparison needs at least one method");
  std::ostringstream out;
  out << "method,rmse_a,rmse_r,nre\n";
  for (const auto& r : reports)
    out << r.method << "," << std::setprecision(10) << r.rmse_a << "," << r.rmse_r << ","
        << r.nre << "\n";
  return out.str();
}

inline std::string comparison_text(const std::vector<EvaluationReport>& reports) {
  if (reports.empty()) throw ValidationError("comparison needs at least one method");
  std::ostringstream out;
  out << std::left << std::setw(12) << "method" << std::right << std::setw(14) << "rmse_a"
      << std::setw(14) << "rmse_r" << std::setw(14) << "nre"
      << "\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(12) << r.method << std::right << std::scientific
        << std::setprecision(4) << std::setw(14) << r.rmse_a << std::setw(14) << r.rmse_r
        << std::setw(14) << r.nre << "\n";
    out.unsetf(std::ios::scientific);
  }
  return out.str();
}

}  // namespace iisu
