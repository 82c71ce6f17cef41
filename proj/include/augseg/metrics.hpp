#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "augseg/objective.hpp"
#include "json.hpp"

namespace augseg::metrics {

/// 2|P and G| / (|P| + |G|) for one class, pooled over the whole mask.
/// Both sets empty counts as perfect agreement (1).
double dice_score(const LabelMask& pred, const LabelMask& gt, std::size_t cls);

/// Average of dice_score over classes 1..K-1.
double mean_foreground_dice(const LabelMask& pred, const LabelMask& gt);

/// Pixels of a class region that touch the background through one of their
/// four neighbours, or lie on the image border. `mask` is one [1,H,W] sample.
std::vector<std::pair<std::size_t, std::size_t>> boundary_pixels(const LabelMask& mask, std::size_t cls);

/// Symmetric 95th-percentile Hausdorff distance between class boundaries of a
/// single-sample mask pair ([1,H,W]).
///
/// Both directed nearest-boundary distance lists are pooled and the value at
/// nearest rank ceil(0.95 n) is returned, scaled by `spacing`. Both regions
/// empty gives 0; exactly one empty gives the image diagonal times `spacing`.
double hd95(const LabelMask& pred, const LabelMask& gt, std::size_t cls, double spacing = 1.0);

struct MetricsRecord {
  std::string sample_id;
  std::vector<double> dice;  // per class, index 0 is background
  std::vector<double> hd95;  // per class
  double mean_dice = 0.0;    // foreground classes
  double mean_hd95 = 0.0;    // foreground classes
};

MetricsRecord evaluate_sample(const LabelMask& pred, const LabelMask& gt, std::string sample_id,
                              double spacing = 1.0);

/// CSV with header `sample_id,class,dice,hd95`, one row per sample and
/// foreground class, followed by `mean` rows per class when `with_summary`.
void write_metrics_csv(std::ostream& os, std::span<const MetricsRecord> records, bool with_summary = true);

enum class WilcoxonMethod { Auto, Exact, Normal };

struct WilcoxonResult {
  std::size_t n = 0;  // pairs left after dropping zero differences
  double w = 0.0;     // min(W+, W-)
  double p = 1.0;     // two-sided
  std::string method; // "exact", "normal" or "degenerate"
};

/// Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped and tied magnitudes share their average rank.
/// Auto uses the exact null distribution for n <= 20 and the continuity
/// corrected normal approximation above. All-zero input returns p = 1 with
/// method "degenerate".
WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs, WilcoxonMethod method = WilcoxonMethod::Auto);

/// {"n", "W", "p", "method"}
nlohmann::json to_json(const WilcoxonResult& r);

}  // namespace augseg::metrics
