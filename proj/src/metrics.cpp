#include "airnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "airnet/morphology.hpp"

namespace airnet {

std::pair<Volume3D, Volume3D> exclude_central(const Volume3D& pred, const Volume3D& gt,
                                              const Volume3D& central) {
    if (!(pred.dims() == gt.dims()) || !(pred.dims() == central.dims()))
        throw std::invalid_argument("exclude_central: dims mismatch");
    return {mask_and_not(pred, central), mask_and_not(gt, central)};
}

double tree_length_pct(const Volume3D& pred, const Volume3D& gt_centerline) {
    const std::size_t total = gt_centerline.count_nonzero();
    if (total == 0) throw std::invalid_argument("tree_length_pct: empty gt centerline");
    return 100.0 * static_cast<double>(overlap_count(gt_centerline, pred)) /
           static_cast<double>(total);
}

double centerline_leakage_pct(const Volume3D& pred_centerline, const Volume3D& gt,
                              const Volume3D& gt_centerline) {
    const std::size_t total = gt_centerline.count_nonzero();
    if (total == 0) throw std::invalid_argument("centerline_leakage_pct: empty gt centerline");
    const std::size_t stray = mask_and_not(pred_centerline, gt).count_nonzero();
    return 100.0 * static_cast<double>(stray) / static_cast<double>(total);
}

double false_positive_rate_pct(const Volume3D& pred, const Volume3D& gt) {
    const std::size_t total = gt.count_nonzero();
    if (total == 0) throw std::invalid_argument("false_positive_rate_pct: empty gt");
    const std::size_t fp = mask_and_not(pred, gt).count_nonzero();
    return 100.0 * static_cast<double>(fp) / static_cast<double>(total);
}

double dice(const Volume3D& pred, const Volume3D& gt) {
    const std::size_t p = pred.count_nonzero();
    const std::size_t g = gt.count_nonzero();
    if (p == 0 && g == 0)
        throw std::runtime_error("dice: both masks empty (undefined)");
    return 2.0 * static_cast<double>(overlap_count(pred, gt)) / static_cast<double>(p + g);
}

double total_tree_length_mm(const Volume3D& pred, const Volume3D& gt_centerline, Vec3 spacing) {
    if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0))
        throw std::invalid_argument("total_tree_length_mm: spacing must be positive");
    const double factor = std::cbrt(spacing.x * spacing.y * spacing.z);
    return static_cast<double>(overlap_count(gt_centerline, pred)) * factor;
}

MetricRecord evaluate_scan(const std::string& scan_id, const Volume3D& pred,
                           const Volume3D& gt, const Volume3D& central) {
    auto [p, g] = exclude_central(pred, gt, central);
    const Volume3D gt_cl = skeletonize(g);
    const Volume3D pred_cl = skeletonize(p);
    MetricRecord r;
    r.scan_id = scan_id;
    r.tl_pct = tree_length_pct(p, gt_cl);
    r.cl_pct = centerline_leakage_pct(pred_cl, g, gt_cl);
    r.fpr_pct = false_positive_rate_pct(p, g);
    r.dsc = (p.count_nonzero() == 0 && g.count_nonzero() == 0) ? 0.0 : dice(p, g);
    r.total_tree_length_mm = total_tree_length_mm(p, gt_cl, pred.spacing());
    return r;
}

double percentile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile_linear: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

CohortSummary summarize(const std::string& group, const std::vector<MetricRecord>& records) {
    if (records.empty()) throw std::invalid_argument("summarize: empty group " + group);
    auto quart = [&](auto field) {
        std::vector<double> v;
        v.reserve(records.size());
        for (const MetricRecord& r : records) v.push_back(field(r));
        return Quartiles{percentile_linear(v, 25.0), percentile_linear(v, 50.0),
                         percentile_linear(v, 75.0)};
    };
    CohortSummary s;
    s.group = group;
    s.n = static_cast<int>(records.size());
    s.tl = quart([](const MetricRecord& r) { return r.tl_pct; });
    s.cl = quart([](const MetricRecord& r) { return r.cl_pct; });
    s.fpr = quart([](const MetricRecord& r) { return r.fpr_pct; });
    s.dsc = quart([](const MetricRecord& r) { return r.dsc; });
    s.total_length = quart([](const MetricRecord& r) { return r.total_tree_length_mm; });
    return s;
}

void write_metrics_csv(const std::vector<MetricRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    out << "scan_id,tl_pct,cl_pct,fpr_pct,dsc,total_tree_length_mm\n";
    out.precision(10);
    for (const MetricRecord& r : records)
        out << r.scan_id << ',' << r.tl_pct << ',' << r.cl_pct << ',' << r.fpr_pct << ','
            << r.dsc << ',' << r.total_tree_length_mm << '\n';
    if (!out) throw std::runtime_error("write_metrics_csv: write failed for " + path);
}

std::vector<MetricRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_metrics_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("scan_id,", 0) != 0)
        throw std::runtime_error("read_metrics_csv: bad header in " + path);
    std::vector<MetricRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        MetricRecord r;
        std::string tok;
        std::getline(ls, r.scan_id, ',');
        std::getline(ls, tok, ',');
        r.tl_pct = std::stod(tok);
        std::getline(ls, tok, ',');
        r.cl_pct = std::stod(tok);
        std::getline(ls, tok, ',');
        r.fpr_pct = std::stod(tok);
        std::getline(ls, tok, ',');
        r.dsc = std::stod(tok);
        std::getline(ls, tok, ',');
        r.total_tree_length_mm = std::stod(tok);
        out.push_back(std::move(r));
    }
    return out;
}

void write_summary_json(const std::vector<CohortSummary>& groups, const std::string& path) {
    nlohmann::json j;
    for (const CohortSummary& g : groups) {
        nlohmann::json jg;
        jg["n"] = g.n;
        auto put = [&](const char* name, const Quartiles& q) {
            jg[name] = {{"p25", q.p25}, {"median", q.median}, {"p75", q.p75}};
        };
        put("tree_length_pct", g.tl);
        put("centerline_leakage_pct", g.cl);
        put("false_positive_rate_pct", g.fpr);
        put("dice", g.dsc);
        put("total_tree_length_mm", g.total_length);
        j[g.group] = jg;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_summary_json: cannot open " + path);
    out << j.dump(2) << '\n';
}

} // namespace airnet
