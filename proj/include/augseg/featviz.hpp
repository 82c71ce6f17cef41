#pragma once

#include <vector>

#include "augseg/io.hpp"
#include "augseg/tensor.hpp"

namespace augseg::viz {

struct PcaResult {
  std::size_t channels = 0;
  std::size_t locations = 0;
  /// Unit principal directions, one C-vector per component.
  std::vector<std::vector<double>> directions;
  /// Variance along each direction (covariance eigenvalues).
  std::vector<double> variances;
  double total_variance = 0.0;
  /// Projection of every centered location on each direction, [k][H*W].
  std::vector<std::vector<double>> scores;
};

struct PcaOptions {
  std::size_t components = 3;
  double tolerance = 1e-8;
  std::size_t max_iterations = 1000;
};

/// PCA over spatial locations of a [1,C,H,W] map: every location is a
/// C-vector, centered by the mean vector; top directions come from deflated
/// power iteration on the C x C covariance. Throws ContractError when C < k.
PcaResult pca(const Tensor& feature, const PcaOptions& opt = {});

/// Components as color channels, each min-max scaled to [0,255]. A component
/// carrying no variance (including an all-constant input) renders as flat 128.
io::RgbImage featviz(const Tensor& feature, const PcaOptions& opt = {});

}  // namespace augseg::viz
