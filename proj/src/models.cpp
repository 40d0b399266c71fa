#include "clens/models.hpp"

#include <algorithm>
#include <cmath>

#include "clens/error.hpp"

namespace clens {

double eval_group_model(double alpha, double x, std::uint32_t n_classes) {
  if (n_classes < 2) throw Error(ErrorCode::OutOfDomain, "need at least 2 classes");
  const double max_x = std::log(static_cast<double>(n_classes));
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::OutOfDomain, "alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  if (!(x >= 0.0 && x <= max_x)) {
    throw Error(ErrorCode::OutOfDomain, "x " + std::to_string(x) + " outside [0, ln C]");
  }
  return std::pow(static_cast<double>(n_classes), alpha - 1.0) * std::exp(-alpha * x);
}

double group_model_rss(double alpha, std::span<const double> bin_centers, std::span<const double> bin_accuracies,
                       std::span<const double> weights, std::uint32_t n_classes) {
  double rss = 0.0;
  for (std::size_t k = 0; k < bin_centers.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    const double r = bin_accuracies[k] - eval_group_model(alpha, bin_centers[k], n_classes);
    rss += weights[k] * r * r;
  }
  return rss;
}

GroupAccuracyModel fit_group_model(std::span<const double> bin_centers, std::span<const double> bin_accuracies,
                                   std::span<const double> weights, std::uint32_t n_classes) {
  if (bin_accuracies.size() != bin_centers.size() || weights.size() != bin_centers.size()) {
    throw Error(ErrorCode::LengthMismatch, "centers, accuracies and weights differ in length");
  }
  std::size_t used = 0;
  for (std::size_t k = 0; k < bin_centers.size(); ++k) {
    if (!(weights[k] >= 0.0)) throw Error(ErrorCode::OutOfDomain, "negative bin weight");
    if (weights[k] == 0.0) continue;
    if (!(bin_accuracies[k] >= 0.0 && bin_accuracies[k] <= 1.0)) {
      throw Error(ErrorCode::OutOfDomain, "bin accuracy outside [0, 1]");
    }
    ++used;
  }
  if (used < 2) throw Error(ErrorCode::InsufficientBins, "need at least 2 non-empty bins");

  auto f = [&](double a) { return group_model_rss(a, bin_centers, bin_accuracies, weights, n_classes); };

  constexpr int kGrid = 1000;
  int best_k = 0;
  double best_f = f(0.0);
  for (int k = 1; k <= kGrid; ++k) {
    const double v = f(static_cast<double>(k) / kGrid);
    if (v < best_f) {
      best_f = v;
      best_k = k;
    }
  }
  double best_a = static_cast<double>(best_k) / kGrid;

  double lo = std::max(0.0, best_a - 1.0 / kGrid);
  double hi = std::min(1.0, best_a + 1.0 / kGrid);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  while (hi - lo > 1e-9) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  // The refined point only replaces the grid optimum if it is no worse.
  for (double a : {0.5 * (lo + hi), lo, hi}) {
    const double v = f(a);
    if (v < best_f) {
      best_f = v;
      best_a = a;
    }
  }
  return {best_a, n_classes, best_f};
}

std::vector<double> complexity_index(std::span<const std::uint64_t> param_counts) {
  if (param_counts.empty()) throw Error(ErrorCode::DegenerateFamily, "no models");
  for (auto p : param_counts) {
    if (p == 0) throw Error(ErrorCode::DegenerateFamily, "parameter count must be positive");
  }
  const auto [min_it, max_it] = std::minmax_element(param_counts.begin(), param_counts.end());
  if (*min_it == *max_it) throw Error(ErrorCode::DegenerateFamily, "all parameter counts are equal");
  const double lo = std::log2(static_cast<double>(*min_it));
  const double hi = std::log2(static_cast<double>(*max_it));
  std::vector<double> alpha;
  alpha.reserve(param_counts.size());
  for (auto p : param_counts) alpha.push_back((std::log2(static_cast<double>(p)) - lo) / (hi - lo));
  return alpha;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "x and y differ in length");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (x.size() < 2 || sxx <= 0.0) throw Error(ErrorCode::RankDeficient, "need at least 2 distinct x values");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

namespace {

// Least squares for rows a_i . p = b_i with two columns; a column that is zero
// in every row is dropped and its parameter left unset.
std::array<std::optional<double>, 2> solve_two_column(const std::vector<std::array<double, 2>>& rows,
                                                      const std::vector<double>& rhs, const char* what) {
  double a11 = 0.0, a12 = 0.0, a22 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    a11 += rows[i][0] * rows[i][0];
    a12 += rows[i][0] * rows[i][1];
    a22 += rows[i][1] * rows[i][1];
    b1 += rows[i][0] * rhs[i];
    b2 += rows[i][1] * rhs[i];
  }
  std::array<std::optional<double>, 2> out;
  if (a11 == 0.0 && a22 == 0.0) return out;
  if (a22 == 0.0) {
    out[0] = b1 / a11;
    return out;
  }
  if (a11 == 0.0) {
    out[1] = b2 / a22;
    return out;
  }
  const double det = a11 * a22 - a12 * a12;
  if (det <= 1e-12 * a11 * a22) {
    throw Error(ErrorCode::RankDeficient, std::string("collinear subpopulation ratios in the ") + what +
                                              " constraints");
  }
  out[0] = (a22 * b1 - a12 * b2) / det;
  out[1] = (a11 * b2 - a12 * b1) / det;
  return out;
}

}  // namespace

CollinearityFit fit_collinearity(std::span<const CollinearityInput> inputs, std::uint32_t n_classes) {
  if (n_classes < 2) throw Error(ErrorCode::DimensionZero, "need at least 2 classes");
  if (inputs.size() < 2) throw Error(ErrorCode::RankDeficient, "need at least 2 datasets");
  CollinearityFit fit;
  fit.n_classes = n_classes;
  fit.chance = 1.0 / static_cast<double>(n_classes);

  std::vector<std::array<double, 2>> rows;
  for (const auto& in : inputs) {
    const double sum = in.ratios[0] + in.ratios[1] + in.ratios[2];
    if (std::fabs(sum - 1.0) > 1e-9 || std::any_of(in.ratios.begin(), in.ratios.end(),
                                                    [](double r) { return !(r >= 0.0); })) {
      throw Error(ErrorCode::RatiosNotNormalized, "subpopulation ratios of '" + in.dataset + "' do not sum to 1");
    }
    const LineFit line = fit_line(in.alphas, in.accuracies);
    fit.datasets.push_back(in.dataset);
    fit.minacc.push_back(line.intercept);
    fit.slope.push_back(line.slope);
    fit.line_r2.push_back(line.r2);
    rows.push_back({in.ratios[0], in.ratios[1]});
  }

  std::vector<double> minacc_rhs;
  for (std::size_t i = 0; i < inputs.size(); ++i) minacc_rhs.push_back(fit.minacc[i] - inputs[i].ratios[2] * fit.chance);
  const auto m = solve_two_column(rows, minacc_rhs, "intercept");
  const auto s = solve_two_column(rows, fit.slope, "slope");
  fit.minacc_easy = m[0];
  fit.minacc_med = m[1];
  fit.s_easy = s[0];
  fit.s_med = s[1];

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& r = inputs[i].ratios;
    const double implied_m = r[0] * fit.minacc_easy.value_or(0.0) + r[1] * fit.minacc_med.value_or(0.0) +
                             r[2] * fit.chance;
    const double implied_s = r[0] * fit.s_easy.value_or(0.0) + r[1] * fit.s_med.value_or(0.0);
    fit.minacc_residual.push_back(implied_m - fit.minacc[i]);
    fit.slope_residual.push_back(implied_s - fit.slope[i]);
  }
  return fit;
}

double CollinearityFit::accuracy(std::size_t dataset, double alpha) const {
  return minacc.at(dataset) + alpha * slope.at(dataset);
}

}  // namespace clens
