// Command-line front end: train / eval / score / ablate / synth.

#include <CLI11.hpp>

#include <svad/eval.hpp>
#include <svad/synth.hpp>

namespace {

using namespace svad;

RunConfig resolve_config(const std::string& config_path, const std::string& preset,
                         const std::string& data_dir, const std::string& out_dir,
                         long long seed) {
    RunConfig cfg = config_path.empty() ? preset_config(preset)
                                        : load_run_config(config_path);
    if (!data_dir.empty()) cfg.dataset_dir = data_dir;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
    cfg.validate();
    return cfg;
}

void write_snapshot(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    save_run_config(cfg, (fs::path(out_dir) / "config.json").string());
}

int cmd_train(const RunConfig& cfg) {
    check(!cfg.dataset_dir.empty(), "train: --data is required");
    check(!cfg.output_dir.empty(), "train: --out is required");
    write_snapshot(cfg, cfg.output_dir);
    LoadedDataset ds = load_dataset(cfg.dataset_dir, cfg.model.stmm.in_h,
                                    cfg.model.stmm.in_w);
    std::cerr << "loaded " << ds.size() << " videos from " << cfg.dataset_dir << "\n";

    Model model(cfg.model);
    std::mt19937_64 rng(cfg.train.seed);
    init_params(model, rng);

    std::ofstream metrics(fs::path(cfg.output_dir) / "metrics.jsonl");
    check(metrics.good(), "cannot write metrics file");

    Trainer trainer(model, ds, cfg.train);
    std::cerr << "class weights: normal " << trainer.w_normal() << ", anomaly "
              << trainer.w_anomaly() << "\n";
    double best_auc = -1.0;
    std::size_t step = 0;
    for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < cfg.train.steps_per_epoch; ++s) {
            StepMetrics m = trainer.step();
            loss_sum += m.loss;
            ++step;
            metrics << json{{"step", step},
                            {"loss", m.loss},
                            {"lr", trainer.optimizer().learning_rate()}}
                           .dump()
                    << "\n";
        }
        double auc = evaluate(model, ds).auc;
        std::cerr << "epoch " << e + 1 << "/" << cfg.train.epochs << "  loss "
                  << loss_sum / cfg.train.steps_per_epoch << "  train-auc " << auc << "\n";
        auto opt_state = trainer.optimizer().state();
        save_checkpoint(model, (fs::path(cfg.output_dir) / "last.ckpt").string(),
                        &opt_state);
        if (auc > best_auc) {
            best_auc = auc;
            save_checkpoint(model, (fs::path(cfg.output_dir) / "best.ckpt").string(),
                            &opt_state);
        }
    }
    std::cerr << "best train-auc " << best_auc << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             std::size_t skip_warmup, const std::string& out_path) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    LoadedDataset ds = load_dataset(data_dir, ck.model->cfg.stmm.in_h,
                                    ck.model->cfg.stmm.in_w);
    EvalResult r = evaluate(*ck.model, ds, skip_warmup);
    json j = eval_to_json(r);
    std::cout << j.dump(2) << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        check(out.good(), "cannot write eval report: " + out_path);
        out << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_score(const std::string& ckpt_path, const std::string& frames_dir,
              std::size_t dump_every, const std::string& state_dir) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    DirFrameSource src(frames_dir);
    Session session(*ck.model);
    if (!state_dir.empty()) fs::create_directories(state_dir);
    std::cout << std::fixed << std::setprecision(6);
    for (std::size_t f = 0; f < src.frame_count(); ++f) {
        double score = session.push_frame(src.frame(f));
        std::cout << f << "\t" << score << "\n";
        if (dump_every > 0 && (f + 1) % dump_every == 0 && !state_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "state_%06zu.json", f);
            std::ofstream out(fs::path(state_dir) / name);
            out << state_to_json(session.state()).dump(2) << "\n";
        }
    }
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& axis,
               const std::vector<double>& values) {
    check(!cfg.dataset_dir.empty(), "ablate: --data is required");
    check(!cfg.output_dir.empty(), "ablate: --out is required");
    write_snapshot(cfg, cfg.output_dir);
    LoadedDataset ds = load_dataset(cfg.dataset_dir, cfg.model.stmm.in_h,
                                    cfg.model.stmm.in_w);
    auto runs = run_ablation(cfg, axis, values, ds, ds, cfg.output_dir, &std::cerr);
    for (const auto& r : runs)
        std::cout << r.label << "\tbest " << r.result.best_auc << "\tfinal "
                  << r.result.final_auc << "\n";
    std::cerr << "wrote " << cfg.output_dir << "/summary.json and auc_curves.svg\n";
    return 0;
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir) {
    spec.validate();
    LoadedDataset ds = generate_synthetic(spec);
    write_dataset(ds, out_dir);
    std::ofstream spec_out(fs::path(out_dir) / "synth_spec.json");
    spec_out << json(spec).dump(2) << "\n";
    std::cerr << "wrote " << ds.size() << " videos to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"online frame-level video anomaly detection"};
    app.require_subcommand(1);

    std::string config_path, preset = "toy", data_dir, out_dir;
    long long seed = -1;
    app.add_option("--seed", seed, "override the config seed")->capture_default_str();

    auto add_config_opts = [&](CLI::App* sub) {
        sub->fallthrough();  // let --seed appear after the subcommand
        sub->add_option("--config", config_path, "run-config json file");
        sub->add_option("--preset", preset, "config preset: toy | full")
            ->capture_default_str();
        sub->add_option("--data", data_dir, "dataset directory");
        sub->add_option("--out", out_dir, "output directory");
    };

    CLI::App* train = app.add_subcommand("train", "train a model");
    add_config_opts(train);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->fallthrough();
    std::string ckpt_path, report_path;
    std::size_t skip_warmup = 0;
    eval_cmd->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_option("--skip-warmup", skip_warmup,
                         "exclude the first K frames of each video");
    eval_cmd->add_option("--report", report_path, "also write the json report here");

    CLI::App* score = app.add_subcommand("score", "stream one video, print scores");
    score->fallthrough();
    std::string frames_dir, state_dir;
    std::size_t dump_every = 0;
    score->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    score->add_option("--frames", frames_dir, "directory of numbered .ppm frames")
        ->required();
    score->add_option("--dump-state", dump_every,
                      "dump the recurrent state every K frames");
    score->add_option("--state-out", state_dir, "directory for state snapshots");

    CLI::App* ablate = app.add_subcommand("ablate", "run an ablation sweep");
    add_config_opts(ablate);
    std::string axis = "memory_onoff";
    std::vector<double> values;
    ablate->add_option("--axis", axis, "nf | lstm_cells | vcl | memory_onoff")
        ->capture_default_str();
    ablate->add_option("--values", values, "axis values (unused for memory_onoff)");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->fallthrough();
    svad::SyntheticSpec spec;
    std::string kind = "appearance";
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--kind", kind, "appearance | motion | long_range | mixed")
        ->capture_default_str();
    synth->add_option("--videos", spec.num_videos)->capture_default_str();
    synth->add_option("--frames", spec.frames_per_video)->capture_default_str();
    synth->add_option("--height", spec.h)->capture_default_str();
    synth->add_option("--width", spec.w)->capture_default_str();
    synth->add_option("--window-min", spec.window_min)->capture_default_str();
    synth->add_option("--window-max", spec.window_max)->capture_default_str();
    synth->add_flag("--shared-background", spec.shared_background,
                    "one background texture for the whole dataset");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed())
            return cmd_train(resolve_config(config_path, preset, data_dir, out_dir, seed));
        if (eval_cmd->parsed()) return cmd_eval(ckpt_path, data_dir, skip_warmup, report_path);
        if (score->parsed()) return cmd_score(ckpt_path, frames_dir, dump_every, state_dir);
        if (ablate->parsed())
            return cmd_ablate(resolve_config(config_path, preset, data_dir, out_dir, seed),
                              axis, values);
        if (synth->parsed()) {
            spec.kind = svad::anomaly_kind_from_string(kind);
            if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
            return cmd_synth(spec, out_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
