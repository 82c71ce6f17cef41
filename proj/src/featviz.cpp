#include "augseg/featviz.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "augseg/error.hpp"

namespace augseg::viz {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Relative size below which a variance counts as numerical noise.
constexpr double kNegligible = 1e-10;

}  // namespace

PcaResult pca(const Tensor& feature, const PcaOptions& opt) {
  if (feature.rank() != 4 || feature.dim(0) != 1) {
    throw DimensionError("featviz expects a [1,C,H,W] map, got " + shape_string(feature.shape()));
  }
  const std::size_t c = feature.dim(1), n = feature.dim(2) * feature.dim(3), k = opt.components;
  if (k == 0 || c < k) {
    throw ContractError("PCA needs at least " + std::to_string(k) + " channels, got " + std::to_string(c));
  }
  auto x = feature.data();
  PcaResult r;
  r.channels = c;
  r.locations = n;

  std::vector<double> mean(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < n; ++p) mean[ch] += x[ch * n + p];
    mean[ch] /= static_cast<double>(n);
  }
  std::vector<double> cov(c * c, 0.0);
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = a; b < c; ++b) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += (x[a * n + p] - mean[a]) * (x[b * n + p] - mean[b]);
      cov[a * c + b] = cov[b * c + a] = s / static_cast<double>(n);
    }
  for (std::size_t a = 0; a < c; ++a) r.total_variance += cov[a * c + a];

  std::mt19937_64 rng(0);
  std::normal_distribution<double> start(0.0, 1.0);
  std::vector<double> work = cov;
  for (std::size_t comp = 0; comp < k; ++comp) {
    std::vector<double> v(c);
    for (auto& e : v) e = start(rng);
    auto orthonormalize = [&](std::vector<double>& u) {
      for (const auto& prev : r.directions) {
        const double d = dot(u, prev);
        for (std::size_t i = 0; i < c; ++i) u[i] -= d * prev[i];
      }
      const double norm = std::sqrt(dot(u, u));
      if (norm == 0.0) return false;
      for (auto& e : u) e /= norm;
      return true;
    };
    orthonormalize(v);
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
      std::vector<double> next(c, 0.0);
      for (std::size_t a = 0; a < c; ++a)
        for (std::size_t b = 0; b < c; ++b) next[a] += work[a * c + b] * v[b];
      if (!orthonormalize(next)) break;  // the deflated operator vanished
      const double sign = dot(next, v) < 0 ? -1.0 : 1.0;
      double change = 0.0;
      for (std::size_t i = 0; i < c; ++i) change = std::max(change, std::abs(next[i] - sign * v[i]));
      v = std::move(next);
      if (change < opt.tolerance) break;
    }
    double lambda = 0.0;
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) lambda += v[a] * cov[a * c + b] * v[b];
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) work[a * c + b] -= lambda * v[a] * v[b];
    r.directions.push_back(v);
    r.variances.push_back(std::max(lambda, 0.0));
  }

  for (std::size_t comp = 0; comp < k; ++comp) {
    std::vector<double> s(n, 0.0);
    const auto& v = r.directions[comp];
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < n; ++p) s[p] += v[ch] * (x[ch * n + p] - mean[ch]);
    r.scores.push_back(std::move(s));
  }
  return r;
}

io::RgbImage featviz(const Tensor& feature, const PcaOptions& opt) {
  if (opt.components > 3) throw ContractError("featviz renders at most 3 components");
  const auto r = pca(feature, opt);
  io::RgbImage img{feature.dim(3), feature.dim(2), std::vector<std::uint8_t>(3 * r.locations, 128)};
  for (std::size_t comp = 0; comp < r.scores.size(); ++comp) {
    if (r.variances[comp] <= kNegligible * std::max(r.total_variance, 1e-300) || r.total_variance == 0.0) continue;
    const auto& s = r.scores[comp];
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    const double span = *hi - *lo;
    if (!(span > 0.0)) continue;
    for (std::size_t p = 0; p < s.size(); ++p) {
      img.pixels[3 * p + comp] = static_cast<std::uint8_t>(std::nearbyint(255.0 * (s[p] - *lo) / span));
    }
  }
  return img;
}

}  // namespace augseg::viz
