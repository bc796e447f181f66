#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dkp/pose.hpp"

namespace dkp {

/// One prediction/ground-truth pairing with its binning attributes.
struct EvalPair {
    Pose pred;
    Pose gt;
    double depth = 0.0;     // ||gt translation||
    bool occluded = false;  // estimator missed (or substituted) this frame

    static EvalPair make(const Pose& pred, const Pose& gt, bool occluded = false);
};

struct EvalReport {
    std::string bin;
    double ared = 0.0;                  // fraction, not percent
    std::map<double, double> acc;       // delta (radians) -> fraction
    double mederr_deg = 0.0;
    std::size_t n = 0;
};

/// Angular thresholds reported everywhere.
inline constexpr double kAccDeltaWide = M_PI / 6.0;
inline constexpr double kAccDeltaNarrow = M_PI / 18.0;

/// Mean relative Euclidean distance of the translation, ||t_hat - t|| / ||t||.
double ared(const std::vector<EvalPair>& pairs);

/// Fraction of pairs with angular yaw error strictly below delta.
double acc_delta(const std::vector<EvalPair>& pairs, double delta);

/// Median angular yaw error in degrees (even count: mean of the two middle values).
double mederr(const std::vector<EvalPair>& pairs);

enum class BinAxis { None, Depth, Occlusion };

struct BinSpec {
    BinAxis axis = BinAxis::None;
    std::vector<double> depth_edges = {40.0};  // ascending; used when axis == Depth
};

/// Per-bin ared / acc(pi/6) / acc(pi/18) / mederr. Empty bins are omitted
/// with a warning.
std::vector<EvalReport> binned_report(const std::vector<EvalPair>& pairs, const BinSpec& bins);

/// ARED mean and variance per equal-count depth decile, for error-vs-distance
/// curves. Each row is (bin center depth, mean, variance).
struct CurvePoint {
    double depth_center = 0.0;
    double ared_mean = 0.0;
    double ared_var = 0.0;
    std::size_t n = 0;
};
std::vector<CurvePoint> ared_depth_curve(const std::vector<EvalPair>& pairs,
                                         std::size_t n_bins = 10);

/// Comma-separated emission (one row per bin; fractions reported as given).
std::string report_table_csv(const std::vector<EvalReport>& reports,
                             const std::string& method_label);
std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace dkp
