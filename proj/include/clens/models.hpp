#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clens {

struct GroupAccuracyModel {
  double alpha = 0.0;
  std::uint32_t n_classes = 0;
  double fit_rss = 0.0;
};

/// C^(alpha-1) * exp(-alpha * x).
double eval_group_model(double alpha, double x, std::uint32_t n_classes);

/// Weighted least squares over alpha in [0, 1]: grid with step 1e-3, then
/// golden-section refinement around the best grid point. Bins with weight 0
/// are treated as empty.
GroupAccuracyModel fit_group_model(std::span<const double> bin_centers, std::span<const double> bin_accuracies,
                                   std::span<const double> weights, std::uint32_t n_classes);

/// Weighted residual sum of squares of the group model at `alpha`.
double group_model_rss(double alpha, std::span<const double> bin_centers, std::span<const double> bin_accuracies,
                       std::span<const double> weights, std::uint32_t n_classes);

/// alpha_m = (log2 P_m - log2 P_min) / (log2 P_max - log2 P_min) within a family.
std::vector<double> complexity_index(std::span<const std::uint64_t> param_counts);

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

struct CollinearityInput {
  std::string dataset;
  /// Subpopulation ratios: easy, medium, hard.
  std::array<double, 3> ratios{};
  std::vector<double> alphas;
  std::vector<double> accuracies;
};

struct CollinearityFit {
  std::uint32_t n_classes = 0;
  double chance = 0.0;  // hard-group accuracy, 1/C
  std::vector<std::string> datasets;
  std::vector<double> minacc;  // per dataset intercept
  std::vector<double> slope;   // per dataset slope
  std::vector<double> line_r2;
  // Shared parameters; unset when their column is identically zero.
  std::optional<double> minacc_easy;
  std::optional<double> minacc_med;
  std::optional<double> s_easy;
  std::optional<double> s_med;
  /// Per dataset: model-implied minus fitted value for each constraint.
  std::vector<double> minacc_residual;
  std::vector<double> slope_residual;

  /// acc^(i)(alpha) from the per-dataset line.
  double accuracy(std::size_t dataset, double alpha) const;
};

/// Per-dataset lines acc = minacc + alpha * s, then the shared easy/medium
/// parameters from
///   minacc^(i) = r_easy minacc_easy + r_med minacc_med + r_hard / C
///   s^(i)      = r_easy s_easy + r_med s_med
/// by least squares.
CollinearityFit fit_collinearity(std::span<const CollinearityInput> inputs, std::uint32_t n_classes);

}  // namespace clens
