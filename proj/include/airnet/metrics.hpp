#ifndef AIRNET_METRICS_HPP
#define AIRNET_METRICS_HPP

#include <string>
#include <utility>
#include <vector>

#include "airnet/volume.hpp"

namespace airnet {

struct MetricRecord {
    std::string scan_id;
    double tl_pct = 0.0;             // ground-truth centerline coverage
    double cl_pct = 0.0;             // predicted-centerline leakage
    double fpr_pct = 0.0;            // false-positive voxels / gt voxels
    double dsc = 0.0;                // Dice coefficient
    double total_tree_length_mm = 0.0;
};

/// Zeroes both masks where the central-airway mask is set (trachea and main
/// bronchi are excluded from all measures).
std::pair<Volume3D, Volume3D> exclude_central(const Volume3D& pred, const Volume3D& gt,
                                              const Volume3D& central);

/// 100 * |gt_centerline AND pred| / |gt_centerline|
double tree_length_pct(const Volume3D& pred, const Volume3D& gt_centerline);

/// 100 * |pred_centerline AND NOT gt| / |gt_centerline|
double centerline_leakage_pct(const Volume3D& pred_centerline, const Volume3D& gt,
                              const Volume3D& gt_centerline);

/// 100 * |pred AND NOT gt| / |gt|
double false_positive_rate_pct(const Volume3D& pred, const Volume3D& gt);

/// 2|P AND G| / (|P| + |G|); both masks empty is an error, not 1.
double dice(const Volume3D& pred, const Volume3D& gt);

/// covered gt-centerline voxels * geometric mean of the voxel spacing
double total_tree_length_mm(const Volume3D& pred, const Volume3D& gt_centerline, Vec3 spacing);

/// Central exclusion, skeletonization of both masks, then all five metrics.
MetricRecord evaluate_scan(const std::string& scan_id, const Volume3D& pred,
                           const Volume3D& gt, const Volume3D& central);

/// Linear-interpolation percentile (q in [0,100]) over a copy of values.
double percentile_linear(std::vector<double> values, double q);

struct Quartiles {
    double p25 = 0.0, median = 0.0, p75 = 0.0;
};

struct CohortSummary {
    std::string group;
    int n = 0;
    Quartiles tl, cl, fpr, dsc, total_length;
};

CohortSummary summarize(const std::string& group, const std::vector<MetricRecord>& records);

void write_metrics_csv(const std::vector<MetricRecord>& records, const std::string& path);
std::vector<MetricRecord> read_metrics_csv(const std::string& path);
void write_summary_json(const std::vector<CohortSummary>& groups, const std::string& path);

} // namespace airnet

#endif
