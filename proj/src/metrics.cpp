#include "augseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>

#include "augseg/error.hpp"

namespace augseg::metrics {

namespace {

void check_same(const LabelMask& pred, const LabelMask& gt, std::size_t cls) {
  pred.validate();
  gt.validate();
  if (pred.values.shape() != gt.values.shape()) {
    throw ContractError("mask shapes differ: " + shape_string(pred.values.shape()) + " vs " +
                        shape_string(gt.values.shape()));
  }
  if (cls >= pred.num_classes || cls >= gt.num_classes) {
    throw ContractError("class " + std::to_string(cls) + " out of range");
  }
}

constexpr double kFar = 1e20;

// Squared distance transform of one line (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  const std::size_t n = f.size();
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto sq = [](double x) { return x * x; };
  auto meet = [&](std::size_t q, std::size_t p) {
    const double qd = static_cast<double>(q), pd = static_cast<double>(p);
    return ((f[q] + sq(qd)) - (f[p] + sq(pd))) / (2.0 * qd - 2.0 * pd);
  };
  for (std::size_t q = 1; q < n; ++q) {
    double s = meet(q, v[k]);
    while (s <= z[k]) s = meet(q, v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    d[q] = sq(static_cast<double>(q) - static_cast<double>(v[k])) + f[v[k]];
  }
}

// Exact squared Euclidean distance to the nearest site for every pixel.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& sites, std::size_t h, std::size_t w) {
  std::vector<double> grid(h * w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites[i] ? 0.0 : kFar;
  const std::size_t n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<std::size_t> v(n);
  f.resize(h);
  d.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = grid[y * w + x];
    edt_1d(f, d, v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y * w), w, f.begin());
    edt_1d(f, d, v, z);
    std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y * w));
  }
  return grid;
}

}  // namespace

double dice_score(const LabelMask& pred, const LabelMask& gt, std::size_t cls) {
  check_same(pred, gt, cls);
  const auto c = static_cast<double>(cls);
  auto p = pred.values.data(), g = gt.values.data();
  std::size_t np = 0, ng = 0, both = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] == c, b = g[i] == c;
    np += a;
    ng += b;
    both += a && b;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

double mean_foreground_dice(const LabelMask& pred, const LabelMask& gt) {
  double total = 0.0;
  for (std::size_t c = 1; c < gt.num_classes; ++c) total += dice_score(pred, gt, c);
  return total / static_cast<double>(gt.num_classes - 1);
}

std::vector<std::pair<std::size_t, std::size_t>> boundary_pixels(const LabelMask& mask, std::size_t cls) {
  mask.validate();
  if (mask.batch() != 1) throw ContractError("boundary extraction works on a single [1,H,W] mask");
  const std::size_t h = mask.height(), w = mask.width();
  const auto c = static_cast<double>(cls);
  auto v = mask.values.data();
  auto in = [&](std::size_t y, std::size_t x) { return v[y * w + x] == c; };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!in(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || !in(y - 1, x) || !in(y + 1, x) ||
                        !in(y, x - 1) || !in(y, x + 1);
      if (edge) out.emplace_back(y, x);
    }
  return out;
}

double hd95(const LabelMask& pred, const LabelMask& gt, std::size_t cls, double spacing) {
  check_same(pred, gt, cls);
  if (!(spacing > 0.0)) throw ContractError("spacing must be positive");
  const auto bp = boundary_pixels(pred, cls);
  const auto bg = boundary_pixels(gt, cls);
  const std::size_t h = gt.height(), w = gt.width();
  if (bp.empty() && bg.empty()) return 0.0;
  if (bp.empty() || bg.empty()) {
    return std::hypot(static_cast<double>(h), static_cast<double>(w)) * spacing;
  }
  auto site_map = [&](const auto& pts) {
    std::vector<std::uint8_t> m(h * w, 0);
    for (auto [y, x] : pts) m[y * w + x] = 1;
    return m;
  };
  const auto to_gt = squared_edt(site_map(bg), h, w);
  const auto to_pred = squared_edt(site_map(bp), h, w);
  std::vector<double> pooled;
  pooled.reserve(bp.size() + bg.size());
  for (auto [y, x] : bp) pooled.push_back(to_gt[y * w + x]);
  for (auto [y, x] : bg) pooled.push_back(to_pred[y * w + x]);
  std::sort(pooled.begin(), pooled.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(pooled.size())));
  return std::sqrt(pooled[std::max<std::size_t>(rank, 1) - 1]) * spacing;
}

MetricsRecord evaluate_sample(const LabelMask& pred, const LabelMask& gt, std::string sample_id, double spacing) {
  MetricsRecord r;
  r.sample_id = std::move(sample_id);
  const std::size_t k = gt.num_classes;
  for (std::size_t c = 0; c < k; ++c) {
    r.dice.push_back(dice_score(pred, gt, c));
    r.hd95.push_back(hd95(pred, gt, c, spacing));
  }
  for (std::size_t c = 1; c < k; ++c) {
    r.mean_dice += r.dice[c];
    r.mean_hd95 += r.hd95[c];
  }
  r.mean_dice /= static_cast<double>(k - 1);
  r.mean_hd95 /= static_cast<double>(k - 1);
  return r;
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsRecord> records, bool with_summary) {
  os << "sample_id,class,dice,hd95\n";
  os.precision(10);
  std::size_t k = 0;
  for (const auto& r : records) {
    k = std::max(k, r.dice.size());
    for (std::size_t c = 1; c < r.dice.size(); ++c) {
      os << r.sample_id << ',' << c << ',' << r.dice[c] << ',' << r.hd95[c] << '\n';
    }
  }
  if (!with_summary || records.empty()) return;
  for (std::size_t c = 1; c < k; ++c) {
    double d = 0.0, hd = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      if (c >= r.dice.size()) continue;
      d += r.dice[c];
      hd += r.hd95[c];
      ++n;
    }
    os << "mean," << c << ',' << d / static_cast<double>(n) << ',' << hd / static_cast<double>(n) << '\n';
  }
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs, WilcoxonMethod method) {
  std::vector<double> d;
  for (double x : diffs) {
    if (!std::isfinite(x)) throw NumericError("non-finite paired difference");
    if (x != 0.0) d.push_back(x);
  }
  WilcoxonResult r;
  r.n = d.size();
  if (d.empty()) {
    r.method = "degenerate";
    return r;
  }
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });

  // Ranks are kept doubled so tied averages stay integral.
  std::vector<std::uint64_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const std::size_t t = j - i + 1;
    for (std::size_t q = i; q <= j; ++q) rank2[order[q]] = (i + 1) + (j + 1);
    tie_term += static_cast<double>(t * t * t - t);
    i = j + 1;
  }
  std::uint64_t plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) plus2 += rank2[i];
  }
  const std::uint64_t w2 = std::min(plus2, total2 - plus2);
  r.w = static_cast<double>(w2) / 2.0;

  const bool exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && n <= 20);
  if (exact) {
    if (n > 62) throw ContractError("exact Wilcoxon distribution limited to n <= 62");
    // counts[s]: sign assignments whose positive doubled-rank sum is s.
    std::vector<double> counts(total2 + 1, 0.0);
    counts[0] = 1.0;
    std::uint64_t reach = 0;
    for (auto rk : rank2) {
      reach += rk;
      for (std::uint64_t s = reach; s >= rk; --s) {
        counts[s] += counts[s - rk];
        if (s == rk) break;
      }
    }
    double tail = 0.0;
    for (std::uint64_t s = 0; s <= w2; ++s) tail += counts[s];
    r.p = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
    r.method = "exact";
    return r;
  }
  const double nd = static_cast<double>(n);
  const double mu = nd * (nd + 1.0) / 4.0;
  const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
  r.method = "normal";
  if (var <= 0.0) return r;
  const double z = std::max(0.0, std::abs(r.w - mu) - 0.5) / std::sqrt(var);
  r.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return r;
}

nlohmann::json to_json(const WilcoxonResult& r) {
  return {{"n", r.n}, {"W", r.w}, {"p", r.p}, {"method", r.method}};
}

}  // namespace augseg::metrics
