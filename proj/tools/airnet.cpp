// airnet: batch CLI wiring the airway-segmentation pipeline end to end.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "airnet/checkpoint.hpp"
#include "airnet/config.hpp"
#include "airnet/inference.hpp"
#include "airnet/metrics.hpp"
#include "airnet/mhd.hpp"
#include "airnet/morphology.hpp"
#include "airnet/phantom.hpp"
#include "airnet/preprocess.hpp"
#include "airnet/stats.hpp"
#include "airnet/train.hpp"

namespace fs = std::filesystem;
using namespace airnet;

namespace {

struct Cli {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

PipelineConfig load_config(const Cli& cli) {
    IniFile ini =
        cli.config_path.empty() ? IniFile::parse_string("") : IniFile::parse_file(cli.config_path);
    if (cli.seed_set) {
        ini.set("train", "seed", std::to_string(cli.seed));
        ini.set("phantom", "seed", std::to_string(cli.seed));
    }
    if (!cli.out_dir.empty()) ini.set("paths", "out_dir", cli.out_dir);
    return PipelineConfig::from_ini(ini);
}

// comma-separated paths, or @file with one path per line
std::vector<std::string> parse_path_list(const std::string& arg) {
    if (!arg.empty() && arg[0] == '@') return read_list_file(arg.substr(1));
    std::vector<std::string> out;
    std::string cur;
    for (char c : arg) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

TrainScan load_scan_dir(const std::string& dir, int roi_buffer, Index3 patch) {
    const Volume3D ct = read_mhd((fs::path(dir) / "ct.mhd").string());
    const Volume3D gt = read_mhd((fs::path(dir) / "gt.mhd").string());
    const Volume3D lung = read_mhd((fs::path(dir) / "lung.mhd").string());
    return prepare_scan(fs::path(dir).filename().string(), ct, gt, lung, roi_buffer, patch);
}

int cmd_phantom(const Cli& cli, int count_override) {
    PipelineConfig cfg = load_config(cli);
    const int count = count_override > 0 ? count_override : cfg.phantom_count;
    fs::create_directories(cfg.out_dir);
    std::vector<std::string> outputs;
    std::ofstream list(fs::path(cfg.out_dir) / "all_scans.txt");
    for (int i = 0; i < count; ++i) {
        PhantomConfig pc = cfg.phantom;
        pc.tree.seed = derive_seed(cfg.phantom.tree.seed, static_cast<std::uint64_t>(i));
        pc.noise_seed = derive_seed(cfg.phantom.tree.seed, 1000 + static_cast<std::uint64_t>(i));
        PhantomBundle b = make_phantom(pc);
        char name[32];
        std::snprintf(name, sizeof name, "phantom_%03d", i);
        const std::string dir = (fs::path(cfg.out_dir) / name).string();
        write_phantom(b, pc, dir);
        list << dir << '\n';
        outputs.push_back(dir);
        std::cout << "wrote " << dir << " (" << b.tree.segments.size() << " segments)\n";
    }
    outputs.push_back((fs::path(cfg.out_dir) / "all_scans.txt").string());
    write_manifest(cfg.out_dir, "phantom", cfg.config_hash, cfg.phantom.tree.seed, {}, outputs);
    return 0;
}

int cmd_preprocess(const Cli& cli, const std::string& ct_path, const std::string& lung_path,
                   int buffer) {
    PipelineConfig cfg = load_config(cli);
    const Volume3D ct = read_mhd(ct_path);
    const Volume3D lung = read_mhd(lung_path);
    const BBox roi = compute_roi_bbox(lung, buffer);
    fs::create_directories(cfg.out_dir);
    const std::string ct_out = (fs::path(cfg.out_dir) / "ct_crop_norm.mhd").string();
    const std::string lung_out = (fs::path(cfg.out_dir) / "lung_crop.mhd").string();
    write_mhd(normalize_ct(crop(ct, roi)), ct_out);
    write_mhd(crop(lung, roi), lung_out);
    write_manifest(cfg.out_dir, "preprocess", cfg.config_hash, cfg.seed, {ct_path, lung_path},
                   {ct_out, lung_out});
    std::cout << "cropped to [" << roi.lo.x << ',' << roi.lo.y << ',' << roi.lo.z << ")..["
              << roi.hi.x << ',' << roi.hi.y << ',' << roi.hi.z << ")\n";
    return 0;
}

int cmd_train(const Cli& cli, const std::string& resume_path) {
    PipelineConfig cfg = load_config(cli);
    if (cfg.train_list.empty() || cfg.val_list.empty())
        throw std::runtime_error("train requires paths.train_list and paths.val_list");
    const Index3 patch{cfg.model.input_shape[2], cfg.model.input_shape[1],
                       cfg.model.input_shape[0]};
    std::vector<TrainScan> train_scans, val_scans;
    for (const std::string& dir : read_list_file(cfg.train_list))
        train_scans.push_back(load_scan_dir(dir, cfg.roi_buffer, patch));
    for (const std::string& dir : read_list_file(cfg.val_list))
        val_scans.push_back(load_scan_dir(dir, cfg.roi_buffer, patch));

    Checkpoint resume;
    const Checkpoint* resume_ptr = nullptr;
    if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path, cfg.model);
        resume_ptr = &resume;
    }
    TrainResult r = train(train_scans, val_scans, cfg.to_train_options(), resume_ptr);
    std::cout << "trained " << r.history.val_loss.size() << " epoch(s); best epoch "
              << r.best_epoch << " val loss " << r.best_val_loss << "\n";
    write_manifest(cfg.out_dir, "train", cfg.config_hash, cfg.seed,
                   {cfg.train_list, cfg.val_list},
                   {r.best_checkpoint_path, r.last_checkpoint_path,
                    (fs::path(cfg.out_dir) / "loss.csv").string()});
    return 0;
}

int cmd_predict(const Cli& cli, const std::string& ck_path, const std::string& scan,
                const std::string& lung_path, const std::string& central_path,
                const std::string& mode, bool mode_set, float threshold, bool threshold_set,
                int connectivity, bool connectivity_set, bool save_prob, int buffer) {
    PipelineConfig cfg = load_config(cli);
    if (mode_set) cfg.mode = mode;
    if (threshold_set) cfg.threshold = threshold;
    if (connectivity_set) cfg.connectivity = connectivity;
    cfg.apply_mode(threshold_set, connectivity_set);
    if (save_prob) cfg.save_prob = true;

    Checkpoint ck = load_checkpoint(ck_path);
    const Volume3D ct = read_mhd(scan);
    Volume3D lung = lung_path.empty() ? segment_lungs(ct, cfg.lung_params)
                                      : read_mhd(lung_path);
    Volume3D central;
    const Volume3D* central_ptr = nullptr;
    if (!central_path.empty()) {
        central = read_mhd(central_path);
        central_ptr = &central;
    }

    PredictParams pp;
    pp.threshold = cfg.threshold;
    pp.connectivity = cfg.connectivity;
    pp.roi_buffer = buffer;
    PredictResult r = predict(ct, lung, central_ptr, ck.model, pp);

    fs::create_directories(cfg.out_dir);
    const std::string mask_out = (fs::path(cfg.out_dir) / "airway_mask.mhd").string();
    write_mhd(r.mask, mask_out);
    std::vector<std::string> outputs{mask_out};
    if (cfg.save_prob) {
        const std::string prob_out = (fs::path(cfg.out_dir) / "airway_prob.mhd").string();
        write_mhd(r.prob, prob_out);
        outputs.push_back(prob_out);
    }
    write_manifest(cfg.out_dir, "predict", cfg.config_hash, cfg.seed,
                   {ck_path, scan, lung_path, central_path}, outputs);
    std::cout << "mask voxels: " << r.mask.count_nonzero() << " (threshold " << cfg.threshold
              << ", connectivity " << cfg.connectivity << ")\n";
    return 0;
}

int cmd_evaluate(const Cli& cli, const std::string& pred_arg, const std::string& gt_arg,
                 const std::string& central_arg) {
    PipelineConfig cfg = load_config(cli);
    const auto preds = parse_path_list(pred_arg);
    const auto gts = parse_path_list(gt_arg);
    const auto centrals = parse_path_list(central_arg);
    if (preds.empty() || preds.size() != gts.size() ||
        (!centrals.empty() && centrals.size() != preds.size()))
        throw std::runtime_error("evaluate: pred/gt/central lists must have equal nonzero length");

    std::vector<MetricRecord> records;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const Volume3D pred = read_mhd(preds[i]);
        const Volume3D gt = read_mhd(gts[i]);
        Volume3D central =
            centrals.empty()
                ? Volume3D(pred.dims(), pred.spacing(), pred.origin(), ElementKind::binary_mask)
                : read_mhd(centrals[i]);
        records.push_back(
            evaluate_scan(fs::path(preds[i]).parent_path().filename().string(), pred, gt,
                          central));
        const MetricRecord& r = records.back();
        std::cout << r.scan_id << ": TL " << r.tl_pct << "% CL " << r.cl_pct << "% FPR "
                  << r.fpr_pct << "% DSC " << r.dsc << " len " << r.total_tree_length_mm
                  << "mm\n";
    }
    fs::create_directories(cfg.out_dir);
    const std::string csv = (fs::path(cfg.out_dir) / "metrics.csv").string();
    const std::string summary = (fs::path(cfg.out_dir) / "summary.json").string();
    write_metrics_csv(records, csv);
    write_summary_json({summarize("all", records)}, summary);
    std::vector<std::string> inputs = preds;
    inputs.insert(inputs.end(), gts.begin(), gts.end());
    write_manifest(cfg.out_dir, "evaluate", cfg.config_hash, cfg.seed, inputs, {csv, summary});
    return 0;
}

int cmd_compare(const Cli& cli, const std::string& a_path, const std::string& b_path,
                bool paired, const std::string& table_out) {
    const auto a = read_metrics_csv(a_path);
    const auto b = read_metrics_csv(b_path);
    struct Row {
        const char* metric;
        std::vector<double> va, vb;
    };
    auto column = [](const std::vector<MetricRecord>& rs, auto field) {
        std::vector<double> v;
        for (const auto& r : rs) v.push_back(field(r));
        return v;
    };
    std::vector<Row> rows{
        {"tree_length_pct", column(a, [](const MetricRecord& r) { return r.tl_pct; }),
         column(b, [](const MetricRecord& r) { return r.tl_pct; })},
        {"centerline_leakage_pct", column(a, [](const MetricRecord& r) { return r.cl_pct; }),
         column(b, [](const MetricRecord& r) { return r.cl_pct; })},
        {"false_positive_rate_pct", column(a, [](const MetricRecord& r) { return r.fpr_pct; }),
         column(b, [](const MetricRecord& r) { return r.fpr_pct; })},
        {"dice", column(a, [](const MetricRecord& r) { return r.dsc; }),
         column(b, [](const MetricRecord& r) { return r.dsc; })},
        {"total_tree_length_mm",
         column(a, [](const MetricRecord& r) { return r.total_tree_length_mm; }),
         column(b, [](const MetricRecord& r) { return r.total_tree_length_mm; })},
    };
    std::ostringstream table;
    table << "metric,t,df,p,significant_p_lt_0.01\n";
    for (const Row& row : rows) {
        const TTestResult t =
            paired ? ttest_paired(row.va, row.vb) : ttest_unpaired(row.va, row.vb);
        table << row.metric << ',' << t.t << ',' << t.df << ',' << t.p << ','
              << (t.p < 0.01 ? "yes" : "no") << '\n';
    }
    std::cout << table.str();
    if (!table_out.empty()) {
        std::ofstream out(table_out);
        if (!out) throw std::runtime_error("compare: cannot open " + table_out);
        out << table.str();
        Cli cli2 = cli;
        if (cli2.out_dir.empty())
            cli2.out_dir = fs::path(table_out).parent_path().string().empty()
                               ? "."
                               : fs::path(table_out).parent_path().string();
        PipelineConfig cfg = load_config(cli2);
        write_manifest(cfg.out_dir, "compare", cfg.config_hash, cfg.seed, {a_path, b_path},
                       {table_out});
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"airnet: 3D U-Net airway segmentation pipeline"};
    app.require_subcommand(1);

    Cli cli;
    app.add_option("--config", cli.config_path, "pipeline configuration file");
    auto* seed_opt = app.add_option("--seed", cli.seed, "override train/phantom seed");
    app.add_option("--out", cli.out_dir, "override output directory");

    auto* sc_phantom = app.add_subcommand("phantom", "generate a synthetic phantom dataset");
    sc_phantom->fallthrough();
    int count = 0;
    sc_phantom->add_option("--count", count, "number of phantoms");

    auto* sc_pre = app.add_subcommand("preprocess", "ROI-crop and normalize one scan");
    sc_pre->fallthrough();
    std::string pre_ct, pre_lung;
    int pre_buffer = 30;
    sc_pre->add_option("--ct", pre_ct, "CT volume (.mhd)")->required();
    sc_pre->add_option("--lung", pre_lung, "lung mask (.mhd)")->required();
    sc_pre->add_option("--buffer", pre_buffer, "ROI buffer in voxels");

    auto* sc_train = app.add_subcommand("train", "train the model on listed scans");
    sc_train->fallthrough();
    std::string resume;
    sc_train->add_option("--resume", resume, "checkpoint to resume from");

    auto* sc_predict = app.add_subcommand("predict", "segment the airway tree of one scan");
    sc_predict->fallthrough();
    std::string ck_path, scan_path, lung_path, central_path, mode = "default";
    float threshold = 0.5f;
    int connectivity = 26, buffer = 30;
    bool save_prob = false;
    sc_predict->add_option("--checkpoint", ck_path, "trained checkpoint")->required();
    sc_predict->add_option("--scan", scan_path, "CT volume (.mhd)")->required();
    sc_predict->add_option("--lung", lung_path, "lung mask (.mhd); computed if omitted");
    sc_predict->add_option("--central", central_path,
                           "trachea/main-bronchi mask (.mhd); computed if omitted");
    auto* mode_opt = sc_predict->add_option("--mode", mode, "default|exact");
    auto* thr_opt = sc_predict->add_option("--threshold", threshold, "probability threshold");
    auto* conn_opt = sc_predict->add_option("--connectivity", connectivity, "6 or 26");
    sc_predict->add_flag("--save-prob", save_prob, "also write the probability map");
    sc_predict->add_option("--buffer", buffer, "ROI buffer in voxels");

    auto* sc_eval = app.add_subcommand("evaluate", "centerline metrics for prediction/gt pairs");
    sc_eval->fallthrough();
    std::string pred_arg, gt_arg, central_arg;
    sc_eval->add_option("--pred", pred_arg, "comma list or @file of prediction masks")
        ->required();
    sc_eval->add_option("--gt", gt_arg, "comma list or @file of ground-truth masks")->required();
    sc_eval->add_option("--central", central_arg, "comma list or @file of central masks");

    auto* sc_cmp = app.add_subcommand("compare", "t-test two metric tables");
    sc_cmp->fallthrough();
    std::string cmp_a, cmp_b, cmp_out;
    bool paired = false;
    sc_cmp->add_option("--a", cmp_a, "metrics.csv A")->required();
    sc_cmp->add_option("--b", cmp_b, "metrics.csv B")->required();
    sc_cmp->add_flag("--paired", paired, "paired test (same scans)");
    sc_cmp->add_option("--table", cmp_out, "write the table to this CSV");

    CLI11_PARSE(app, argc, argv);
    cli.seed_set = seed_opt->count() > 0;

    try {
        if (sc_phantom->parsed()) return cmd_phantom(cli, count);
        if (sc_pre->parsed()) return cmd_preprocess(cli, pre_ct, pre_lung, pre_buffer);
        if (sc_train->parsed()) return cmd_train(cli, resume);
        if (sc_predict->parsed())
            return cmd_predict(cli, ck_path, scan_path, lung_path, central_path, mode,
                               mode_opt->count() > 0, threshold, thr_opt->count() > 0,
                               connectivity, conn_opt->count() > 0, save_prob, buffer);
        if (sc_eval->parsed()) return cmd_evaluate(cli, pred_arg, gt_arg, central_arg);
        if (sc_cmp->parsed()) return cmd_compare(cli, cmp_a, cmp_b, paired, cmp_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
