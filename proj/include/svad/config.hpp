#pragma once

#include <array>
#include <fstream>

#include <json.hpp>

#include "svad/tensor.hpp"

namespace svad {

using json = nlohmann::ordered_json;

// Backbone configuration. feature_dim() is the channel width after the
// last stage (patch merging doubles channels between stages).
struct StmmConfig {
    std::size_t nf = 4;
    std::size_t in_h = 16;
    std::size_t in_w = 16;
    std::size_t embed_dim = 32;
    std::vector<std::size_t> stage_depths{2};
    std::vector<std::size_t> stage_heads{4};
    std::array<std::size_t, 3> window{1, 4, 4};
    double mlp_ratio = 2.0;
    bool rel_pos_bias = true;
    // Fixed per-channel standardization constants applied to [0,1] pixels.
    std::array<double, 3> pixel_mean{0.45, 0.45, 0.45};
    std::array<double, 3> pixel_std{0.225, 0.225, 0.225};

    std::size_t feature_dim() const {
        std::size_t d = embed_dim;
        for (std::size_t s = 1; s < stage_depths.size(); ++s) d *= 2;
        return d;
    }

    void validate() const {
        check(nf >= 1, "StmmConfig: nf must be >= 1");
        check(in_h % 4 == 0 && in_w % 4 == 0, "StmmConfig: H and W must be divisible by 4");
        check(embed_dim > 0, "StmmConfig: embed_dim must be positive");
        check(!stage_depths.empty() && stage_depths.size() == stage_heads.size(),
              "StmmConfig: stage_depths/stage_heads mismatch");
        for (std::size_t s = 0; s < stage_heads.size(); ++s) {
            std::size_t ch = embed_dim << s;
            check(stage_heads[s] > 0 && ch % stage_heads[s] == 0,
                  "StmmConfig: stage channels not divisible by head count");
        }
        check(window[0] >= 1 && window[1] >= 1 && window[2] >= 1,
              "StmmConfig: window dims must be >= 1");
        for (double sd : pixel_std) check(sd > 0, "StmmConfig: pixel_std must be positive");
    }
};

struct HeadConfig {
    std::size_t input_dim = 32;
    std::size_t lstm_cells = 2;
    std::size_t lstm_width = 48;
    double dropout_rate = 0.3;
    std::size_t num_classes = 2;

    void validate() const {
        check(input_dim > 0, "HeadConfig: input_dim must be positive");
        check(lstm_cells <= 8, "HeadConfig: lstm_cells out of range");
        check(lstm_width > 0, "HeadConfig: lstm_width must be positive");
        check(dropout_rate >= 0.0 && dropout_rate < 1.0, "HeadConfig: dropout_rate in [0,1)");
        check(num_classes == 2, "HeadConfig: num_classes must be 2");
    }
};

struct ModelConfig {
    StmmConfig stmm;
    HeadConfig head;

    void validate() const {
        stmm.validate();
        head.validate();
        check(head.input_dim == stmm.feature_dim(),
              "ModelConfig: head input_dim must equal backbone feature_dim");
    }
};

struct TrainConfig {
    std::size_t batch_size = 8;
    std::size_t vcl = 8;
    double learning_rate = 0.0001;
    double momentum = 0.9;
    std::size_t epochs = 10;
    std::size_t steps_per_epoch = 10;
    std::uint64_t seed = 0;
    // Negative weights mean "derive from dataset counts via w_i = e / e_i".
    double w_normal = -1.0;
    double w_anomaly = -1.0;
    bool carry_state_across_clips = false;

    void validate() const {
        check(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
        check(vcl >= 1, "TrainConfig: vcl must be >= 1");
        check(learning_rate >= 0.0, "TrainConfig: learning_rate must be >= 0");
        check(momentum >= 0.0 && momentum < 1.0, "TrainConfig: momentum in [0,1)");
    }
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string dataset_dir;
    std::string output_dir;

    void validate() const {
        model.validate();
        train.validate();
    }
};

// ---- json ----

inline void to_json(json& j, const StmmConfig& c) {
    j = json{{"nf", c.nf},
             {"in_h", c.in_h},
             {"in_w", c.in_w},
             {"embed_dim", c.embed_dim},
             {"stage_depths", c.stage_depths},
             {"stage_heads", c.stage_heads},
             {"window", c.window},
             {"mlp_ratio", c.mlp_ratio},
             {"rel_pos_bias", c.rel_pos_bias},
             {"pixel_mean", c.pixel_mean},
             {"pixel_std", c.pixel_std}};
}
inline void from_json(const json& j, StmmConfig& c) {
    j.at("nf").get_to(c.nf);
    j.at("in_h").get_to(c.in_h);
    j.at("in_w").get_to(c.in_w);
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("stage_depths").get_to(c.stage_depths);
    j.at("stage_heads").get_to(c.stage_heads);
    j.at("window").get_to(c.window);
    j.at("mlp_ratio").get_to(c.mlp_ratio);
    j.at("rel_pos_bias").get_to(c.rel_pos_bias);
    if (j.contains("pixel_mean")) j.at("pixel_mean").get_to(c.pixel_mean);
    if (j.contains("pixel_std")) j.at("pixel_std").get_to(c.pixel_std);
}

inline void to_json(json& j, const HeadConfig& c) {
    j = json{{"input_dim", c.input_dim},
             {"lstm_cells", c.lstm_cells},
             {"lstm_width", c.lstm_width},
             {"dropout_rate", c.dropout_rate},
             {"num_classes", c.num_classes}};
}
inline void from_json(const json& j, HeadConfig& c) {
    j.at("input_dim").get_to(c.input_dim);
    j.at("lstm_cells").get_to(c.lstm_cells);
    j.at("lstm_width").get_to(c.lstm_width);
    j.at("dropout_rate").get_to(c.dropout_rate);
    j.at("num_classes").get_to(c.num_classes);
}

inline void to_json(json& j, const ModelConfig& c) {
    j = json{{"stmm", c.stmm}, {"head", c.head}};
}
inline void from_json(const json& j, ModelConfig& c) {
    j.at("stmm").get_to(c.stmm);
    j.at("head").get_to(c.head);
}

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"batch_size", c.batch_size},
             {"vcl", c.vcl},
             {"learning_rate", c.learning_rate},
             {"momentum", c.momentum},
             {"epochs", c.epochs},
             {"steps_per_epoch", c.steps_per_epoch},
             {"seed", c.seed},
             {"w_normal", c.w_normal},
             {"w_anomaly", c.w_anomaly},
             {"carry_state_across_clips", c.carry_state_across_clips}};
}
inline void from_json(const json& j, TrainConfig& c) {
    j.at("batch_size").get_to(c.batch_size);
    j.at("vcl").get_to(c.vcl);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("momentum").get_to(c.momentum);
    j.at("epochs").get_to(c.epochs);
    j.at("steps_per_epoch").get_to(c.steps_per_epoch);
    j.at("seed").get_to(c.seed);
    j.at("w_normal").get_to(c.w_normal);
    j.at("w_anomaly").get_to(c.w_anomaly);
    j.at("carry_state_across_clips").get_to(c.carry_state_across_clips);
}

inline void to_json(json& j, const RunConfig& c) {
    j = json{{"model", c.model},
             {"train", c.train},
             {"dataset_dir", c.dataset_dir},
             {"output_dir", c.output_dir}};
}
inline void from_json(const json& j, RunConfig& c) {
    j.at("model").get_to(c.model);
    j.at("train").get_to(c.train);
    if (j.contains("dataset_dir")) j.at("dataset_dir").get_to(c.dataset_dir);
    if (j.contains("output_dir")) j.at("output_dir").get_to(c.output_dir);
}

// ---- presets ----

// Desk-scale configuration used by tests and synthetic experiments.
inline RunConfig toy_config() {
    RunConfig c;
    c.model.stmm.nf = 4;
    c.model.stmm.in_h = 16;
    c.model.stmm.in_w = 16;
    c.model.stmm.embed_dim = 32;
    c.model.stmm.stage_depths = {2};
    c.model.stmm.stage_heads = {4};
    c.model.stmm.window = {2, 4, 4};
    c.model.stmm.mlp_ratio = 2.0;
    c.model.head.input_dim = 32;
    c.model.head.lstm_cells = 2;
    c.model.head.lstm_width = 48;
    c.model.head.dropout_rate = 0.1;
    c.train.batch_size = 4;
    c.train.vcl = 8;
    c.train.learning_rate = 0.02;
    c.train.momentum = 0.9;
    c.train.epochs = 20;
    c.train.steps_per_epoch = 10;
    return c;
}

// Full-scale defaults: Video Swin-B backbone, 320x240 input, three-cell
// LSTM head over 1024-wide features, SGD 1e-4 / momentum 0.9.
inline RunConfig full_config() {
    RunConfig c;
    c.model.stmm.nf = 3;
    c.model.stmm.in_h = 320;
    c.model.stmm.in_w = 240;
    c.model.stmm.embed_dim = 128;
    c.model.stmm.stage_depths = {2, 2, 18, 2};
    c.model.stmm.stage_heads = {4, 8, 16, 32};
    c.model.stmm.window = {2, 7, 7};
    c.model.stmm.mlp_ratio = 4.0;
    c.model.head.input_dim = 1024;
    c.model.head.lstm_cells = 3;
    c.model.head.lstm_width = 1024;
    c.model.head.dropout_rate = 0.3;
    c.train.batch_size = 8;
    c.train.vcl = 8;
    c.train.learning_rate = 0.0001;
    c.train.momentum = 0.9;
    c.train.epochs = 100;
    c.train.w_normal = 0.3;
    c.train.w_anomaly = 0.7;
    return c;
}

inline RunConfig preset_config(const std::string& name) {
    if (name == "toy") return toy_config();
    if (name == "full") return full_config();
    throw std::invalid_argument("unknown preset: " + name);
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "cannot open config file: " + path);
    json j = json::parse(in);
    RunConfig c = j.get<RunConfig>();
    c.validate();
    return c;
}

inline void save_run_config(const RunConfig& c, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), "cannot write config file: " + path);
    out << json(c).dump(2) << "\n";
}

}  // namespace svad
