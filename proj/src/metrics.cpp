#include "dkp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dkp/errors.hpp"

namespace dkp {

EvalPair EvalPair::make(const Pose& pred, const Pose& gt, bool occluded) {
    EvalPair p;
    p.pred = pred;
    p.gt = gt;
    p.depth = gt.range();
    p.occluded = occluded;
    return p;
}

double ared(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw InvalidInputError("ared: no pairs");
    double sum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        const double norm = p.gt.range();
        if (norm <= 0.0) {
            throw InvalidInputError("ared: pair " + std::to_string(i) +
                                    " has zero-norm ground-truth translation");
        }
        const double dx = p.pred.x - p.gt.x;
        const double dy = p.pred.y - p.gt.y;
        const double dz = p.pred.z - p.gt.z;
        sum += std::sqrt(dx * dx + dy * dy + dz * dz) / norm;
    }
    return sum / static_cast<double>(pairs.size());
}

double acc_delta(const std::vector<EvalPair>& pairs, double delta) {
    if (pairs.empty()) throw InvalidInputError("acc_delta: no pairs");
    std::size_t hits = 0;
    for (const auto& p : pairs) {
        if (angular_error(p.pred.theta, p.gt.theta) < delta) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double mederr(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw InvalidInputError("mederr: no pairs");
    std::vector<double> errs;
    errs.reserve(pairs.size());
    for (const auto& p : pairs) {
        errs.push_back(angular_error(p.pred.theta, p.gt.theta) * 180.0 / M_PI);
    }
    std::sort(errs.begin(), errs.end());
    const std::size_t n = errs.size();
    if (n % 2 == 1) return errs[n / 2];
    return 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
}

namespace {

EvalReport make_report(const std::vector<EvalPair>& pairs, std::string bin_label) {
    EvalReport r;
    r.bin = std::move(bin_label);
    r.ared = ared(pairs);
    r.acc[kAccDeltaWide] = acc_delta(pairs, kAccDeltaWide);
    r.acc[kAccDeltaNarrow] = acc_delta(pairs, kAccDeltaNarrow);
    r.mederr_deg = mederr(pairs);
    r.n = pairs.size();
    return r;
}

std::string depth_bin_label(double lo, double hi) {
    char buf[64];
    if (std::isinf(hi)) {
        std::snprintf(buf, sizeof(buf), "%gm-inf", lo);
    } else {
        std::snprintf(buf, sizeof(buf), "%gm-%gm", lo, hi);
    }
    return buf;
}

}  // namespace

std::vector<EvalReport> binned_report(const std::vector<EvalPair>& pairs, const BinSpec& bins) {
    if (pairs.empty()) throw InvalidInputError("binned_report: no pairs");
    std::vector<EvalReport> out;
    switch (bins.axis) {
        case BinAxis::None:
            out.push_back(make_report(pairs, "all"));
            break;
        case BinAxis::Occlusion: {
            std::vector<EvalPair> visible, occluded;
            for (const auto& p : pairs) (p.occluded ? occluded : visible).push_back(p);
            if (visible.empty()) {
                warn("binned_report: no visible pairs; bin omitted");
            } else {
                out.push_back(make_report(visible, "visible"));
            }
            if (occluded.empty()) {
                warn("binned_report: no occluded pairs; bin omitted");
            } else {
                out.push_back(make_report(occluded, "occluded"));
            }
            break;
        }
        case BinAxis::Depth: {
            std::vector<double> edges = bins.depth_edges;
            std::sort(edges.begin(), edges.end());
            double lo = 0.0;
            for (std::size_t b = 0; b <= edges.size(); ++b) {
                const double hi =
                    b < edges.size() ? edges[b] : std::numeric_limits<double>::infinity();
                std::vector<EvalPair> in_bin;
                for (const auto& p : pairs) {
                    if (p.depth >= lo && p.depth < hi) in_bin.push_back(p);
                }
                const std::string label = depth_bin_label(lo, hi);
                if (in_bin.empty()) {
                    warn("binned_report: depth bin " + label + " is empty; omitted");
                } else {
                    out.push_back(make_report(in_bin, label));
                }
                lo = hi;
            }
            break;
        }
    }
    return out;
}

std::vector<CurvePoint> ared_depth_curve(const std::vector<EvalPair>& pairs, std::size_t n_bins) {
    if (pairs.empty()) throw InvalidInputError("ared_depth_curve: no pairs");
    if (n_bins == 0) throw InvalidInputError("ared_depth_curve: n_bins must be >= 1");

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pairs[a].depth < pairs[b].depth;
    });

    std::vector<CurvePoint> out;
    const std::size_t n = order.size();
    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t begin = b * n / n_bins;
        const std::size_t end = (b + 1) * n / n_bins;
        if (begin >= end) continue;
        std::vector<EvalPair> in_bin;
        in_bin.reserve(end - begin);
        std::vector<double> rel;
        for (std::size_t i = begin; i < end; ++i) in_bin.push_back(pairs[order[i]]);
        double mean = 0.0;
        for (const auto& p : in_bin) {
            const double dx = p.pred.x - p.gt.x, dy = p.pred.y - p.gt.y, dz = p.pred.z - p.gt.z;
            rel.push_back(std::sqrt(dx * dx + dy * dy + dz * dz) / p.gt.range());
            mean += rel.back();
        }
        mean /= static_cast<double>(rel.size());
        double var = 0.0;
        for (double v : rel) var += (v - mean) * (v - mean);
        var /= static_cast<double>(rel.size());

        CurvePoint pt;
        pt.depth_center = in_bin[in_bin.size() / 2].depth;  // median depth of the bin
        pt.ared_mean = mean;
        pt.ared_var = var;
        pt.n = in_bin.size();
        out.push_back(pt);
    }
    return out;
}

std::string report_table_csv(const std::vector<EvalReport>& reports,
                             const std::string& method_label) {
    std::ostringstream os;
    os << "method,bin,n,ared,acc_pi6,acc_pi18,mederr_deg\n";
    char buf[256];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.6f,%.6f,%.6f,%.6f\n", method_label.c_str(),
                      r.bin.c_str(), r.n, r.ared, r.acc.at(kAccDeltaWide),
                      r.acc.at(kAccDeltaNarrow), r.mederr_deg);
        os << buf;
    }
    return os.str();
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::ostringstream os;
    os << "depth_bin_center,ared_mean,ared_var\n";
    char buf[128];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.8f\n", p.depth_center, p.ared_mean,
                      p.ared_var);
        os << buf;
    }
    return os.str();
}

}  // namespace dkp
