#pragma once

#include <algorithm>
#include <numeric>

#include "svad/train.hpp"

namespace svad {

// Frame-level ROC AUC via the rank statistic, with midranks for tied
// scores. Requires at least one frame of each class.
inline double frame_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check(scores.size() == labels.size(), "frame_auc: size mismatch");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) {
        check(l == 0 || l == 1, "frame_auc: labels must be 0/1");
        (l ? pos : neg)++;
    }
    check(pos > 0 && neg > 0, "frame_auc: needs both classes");
    for (double s : scores) check(std::isfinite(s), "frame_auc: non-finite score");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += midrank;
        i = j;
    }
    double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

struct BucketResult {
    int category = 0;
    bool ego_involved = false;
    std::size_t frames = 0;
    double auc = std::numeric_limits<double>::quiet_NaN();  // NaN if single-class
};

struct EvalResult {
    double auc = 0.0;             // pooled over all scored frames
    std::size_t frames = 0;
    std::size_t videos = 0;
    double mean_video_auc = std::numeric_limits<double>::quiet_NaN();
    std::vector<BucketResult> buckets;  // per (category, ego_involved)
    std::vector<std::vector<double>> video_scores;
};

inline json eval_to_json(const EvalResult& r) {
    json buckets = json::array();
    for (const auto& b : r.buckets) {
        json e{{"category", category_codes().at(static_cast<std::size_t>(b.category))},
               {"ego_involved", b.ego_involved},
               {"frames", b.frames}};
        if (std::isfinite(b.auc)) e["auc"] = b.auc;
        else e["auc"] = nullptr;
        buckets.push_back(std::move(e));
    }
    json j{{"auc", r.auc}, {"frames", r.frames}, {"videos", r.videos},
           {"buckets", buckets}};
    if (std::isfinite(r.mean_video_auc)) j["mean_video_auc"] = r.mean_video_auc;
    else j["mean_video_auc"] = nullptr;
    return j;
}

// Streams every video through a fresh session and pools frame scores.
// The first `skip_warmup` frames of each video are excluded from the
// metric (scores for them are still produced and returned).
inline EvalResult evaluate(Model& model, const LoadedDataset& dataset,
                           std::size_t skip_warmup = 0) {
    check(!dataset.empty(), "evaluate: empty dataset");
    EvalResult r;
    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;
    std::map<std::pair<int, bool>, std::pair<std::vector<double>, std::vector<int>>> buckets;
    double video_auc_sum = 0.0;
    std::size_t video_auc_count = 0;

    for (const auto& video : dataset) {
        std::vector<double> scores = score_video(model, video.frames);
        for (std::size_t f = skip_warmup; f < scores.size(); ++f) {
            pooled_scores.push_back(scores[f]);
            pooled_labels.push_back(video.labels[f]);
            auto& bucket = buckets[{video.ann.category, video.ann.ego_involved}];
            bucket.first.push_back(scores[f]);
            bucket.second.push_back(video.labels[f]);
        }
        bool has_pos = false, has_neg = false;
        for (std::size_t f = skip_warmup; f < scores.size(); ++f)
            (video.labels[f] ? has_pos : has_neg) = true;
        if (has_pos && has_neg) {
            std::vector<double> s(scores.begin() + static_cast<long>(skip_warmup),
                                  scores.end());
            std::vector<int> l(video.labels.begin() + static_cast<long>(skip_warmup),
                               video.labels.end());
            video_auc_sum += frame_auc(s, l);
            ++video_auc_count;
        }
        r.video_scores.push_back(std::move(scores));
        ++r.videos;
    }
    r.frames = pooled_scores.size();
    r.auc = frame_auc(pooled_scores, pooled_labels);
    if (video_auc_count > 0) r.mean_video_auc = video_auc_sum / video_auc_count;
    for (auto& [key, sl] : buckets) {
        BucketResult b;
        b.category = key.first;
        b.ego_involved = key.second;
        b.frames = sl.first.size();
        bool has_pos = false, has_neg = false;
        for (int l : sl.second) (l ? has_pos : has_neg) = true;
        if (has_pos && has_neg) b.auc = frame_auc(sl.first, sl.second);
        r.buckets.push_back(b);
    }
    return r;
}

// ---- training driver with per-epoch evaluation ----

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double auc = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    double best_auc = 0.0;
    double final_auc = 0.0;
};

// Runs cfg.train.epochs x steps_per_epoch optimizer steps, evaluating on
// eval_set after each epoch. metrics_out (optional) receives one JSON line
// per step: {"step": n, "loss": l, "lr": r}.
inline TrainResult train_model(Model& model, const LoadedDataset& train_set,
                               const LoadedDataset& eval_set, const RunConfig& cfg,
                               std::ostream* metrics_out = nullptr,
                               std::ostream* log = nullptr) {
    Trainer trainer(model, train_set, cfg.train);
    TrainResult result;
    std::size_t step = 0;
    for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < cfg.train.steps_per_epoch; ++s) {
            StepMetrics m = trainer.step();
            loss_sum += m.loss;
            ++step;
            if (metrics_out)
                *metrics_out << json{{"step", step},
                                     {"loss", m.loss},
                                     {"lr", trainer.optimizer().learning_rate()}}
                                    .dump()
                             << "\n";
        }
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.mean_loss = loss_sum / static_cast<double>(cfg.train.steps_per_epoch);
        rec.auc = evaluate(model, eval_set).auc;
        if (log)
            *log << "epoch " << rec.epoch << "/" << cfg.train.epochs
                 << "  loss " << rec.mean_loss << "  auc " << rec.auc << "\n";
        result.best_auc = std::max(result.best_auc, rec.auc);
        result.final_auc = rec.auc;
        result.epochs.push_back(rec);
    }
    return result;
}

// ---- ablations ----

struct AblationRun {
    std::string label;
    RunConfig cfg;
    TrainResult result;
};

// Variants along one axis. "memory_onoff" crosses short-term memory
// (nf 1 vs base) with long-term memory (0 cells vs base).
inline std::vector<std::pair<std::string, RunConfig>> ablation_variants(
    const RunConfig& base, const std::string& axis, const std::vector<double>& values) {
    std::vector<std::pair<std::string, RunConfig>> out;
    if (axis == "memory_onoff") {
        for (std::size_t nf : {std::size_t{1}, base.model.stmm.nf})
            for (std::size_t cells : {std::size_t{0}, base.model.head.lstm_cells}) {
                RunConfig c = base;
                c.model.stmm.nf = nf;
                c.model.head.lstm_cells = cells;
                out.emplace_back("nf" + std::to_string(nf) + "_cells" +
                                     std::to_string(cells),
                                 c);
            }
        return out;
    }
    check(!values.empty(), "ablation: no values for axis " + axis);
    for (double v : values) {
        RunConfig c = base;
        std::string label;
        if (axis == "nf") {
            c.model.stmm.nf = static_cast<std::size_t>(v);
            label = "nf" + std::to_string(c.model.stmm.nf);
        } else if (axis == "lstm_cells") {
            c.model.head.lstm_cells = static_cast<std::size_t>(v);
            label = "cells" + std::to_string(c.model.head.lstm_cells);
        } else if (axis == "vcl") {
            c.train.vcl = static_cast<std::size_t>(v);
            label = "vcl" + std::to_string(c.train.vcl);
        } else {
            throw std::invalid_argument("unknown ablation axis: " + axis);
        }
        out.emplace_back(label, c);
    }
    return out;
}

namespace detail {

// Minimal line-chart writer (one polyline per run, shared axes).
inline void write_auc_svg(const std::vector<AblationRun>& runs, const std::string& path) {
    const double width = 640, height = 400, ml = 60, mr = 150, mt = 20, mb = 40;
    std::size_t max_epochs = 1;
    for (const auto& r : runs) max_epochs = std::max(max_epochs, r.result.epochs.size());
    auto sx = [&](double e) {
        return ml + (width - ml - mr) * (max_epochs > 1 ? (e - 1) / (max_epochs - 1) : 0.5);
    };
    auto sy = [&](double auc) { return mt + (height - mt - mb) * (1.0 - auc); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    std::ofstream out(path);
    check(out.good(), "cannot write plot: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
        << height << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    for (double g = 0.0; g <= 1.0001; g += 0.25) {
        out << "<line x1='" << ml << "' y1='" << sy(g) << "' x2='" << width - mr
            << "' y2='" << sy(g) << "' stroke='#ddd'/>\n";
        out << "<text x='" << ml - 8 << "' y='" << sy(g) + 4
            << "' font-size='11' text-anchor='end'>" << g << "</text>\n";
    }
    out << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 8
        << "' font-size='12' text-anchor='middle'>epoch</text>\n";
    out << "<text x='14' y='" << height / 2
        << "' font-size='12' text-anchor='middle' transform='rotate(-90 14 "
        << height / 2 << ")'>frame AUC</text>\n";
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const char* color = palette[r % 8];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (const auto& rec : runs[r].result.epochs)
            out << sx(static_cast<double>(rec.epoch)) << "," << sy(rec.auc) << " ";
        out << "'/>\n";
        out << "<text x='" << width - mr + 10 << "' y='" << mt + 14 * (r + 1)
            << "' font-size='11' fill='" << color << "'>" << runs[r].label << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace detail

// Trains one fresh model per variant and writes <out_dir>/summary.json plus
// an AUC-per-epoch chart. Each run reuses the base seed so variants differ
// only in the ablated axis.
inline std::vector<AblationRun> run_ablation(const RunConfig& base, const std::string& axis,
                                             const std::vector<double>& values,
                                             const LoadedDataset& train_set,
                                             const LoadedDataset& eval_set,
                                             const std::string& out_dir,
                                             std::ostream* log = nullptr) {
    std::vector<AblationRun> runs;
    for (const auto& [label, cfg] : ablation_variants(base, axis, values)) {
        if (log) *log << "== ablation run " << label << " ==\n";
        Model model(cfg.model);
        std::mt19937_64 rng(cfg.train.seed);
        init_params(model, rng);
        AblationRun run;
        run.label = label;
        run.cfg = cfg;
        run.result = train_model(model, train_set, eval_set, cfg, nullptr, log);
        runs.push_back(std::move(run));
    }
    fs::create_directories(out_dir);
    json summary = json::array();
    for (const auto& r : runs) {
        json curve = json::array();
        for (const auto& rec : r.result.epochs)
            curve.push_back(json{{"epoch", rec.epoch},
                                 {"mean_loss", rec.mean_loss},
                                 {"auc", rec.auc}});
        summary.push_back(json{{"label", r.label},
                               {"axis", axis},
                               {"config", r.cfg},
                               {"best_auc", r.result.best_auc},
                               {"final_auc", r.result.final_auc},
                               {"epochs", curve}});
    }
    std::ofstream out(fs::path(out_dir) / "summary.json");
    check(out.good(), "cannot write ablation summary");
    out << summary.dump(2) << "\n";
    detail::write_auc_svg(runs, (fs::path(out_dir) / "auc_curves.svg").string());
    return runs;
}

}  // namespace svad
