#pragma once

#include "svad/config.hpp"
#include "svad/nn.hpp"

namespace svad {

// Recurrent state carried across frames: one (h, c) pair per LSTM cell.
struct RecurrentState {
    std::vector<std::pair<Tensor, Tensor>> layers;

    static RecurrentState zeros(std::size_t batch, const HeadConfig& cfg) {
        check(batch >= 1, "init_state: batch must be >= 1");
        RecurrentState s;
        for (std::size_t i = 0; i < cfg.lstm_cells; ++i)
            s.layers.emplace_back(Tensor({batch, cfg.lstm_width}),
                                  Tensor({batch, cfg.lstm_width}));
        return s;
    }

    bool matches(const HeadConfig& cfg) const {
        if (layers.size() != cfg.lstm_cells) return false;
        for (const auto& [h, c] : layers) {
            if (h.rank() != 2 || !h.same_shape(c)) return false;
            if (h.shape[1] != cfg.lstm_width) return false;
        }
        return true;
    }

    std::size_t batch() const { return layers.empty() ? 0 : layers[0].first.shape[0]; }
};

// Versioned state snapshot for session checkpoint/resume.
inline json state_to_json(const RecurrentState& s) {
    json layers = json::array();
    for (const auto& [h, c] : s.layers)
        layers.push_back(json{{"h", h.data}, {"c", c.data}});
    return json{{"format", "svad-state"},
                {"version", 1},
                {"batch", s.batch()},
                {"width", s.layers.empty() ? 0 : s.layers[0].first.shape[1]},
                {"layers", layers}};
}

inline RecurrentState state_from_json(const json& j) {
    check(j.value("format", "") == std::string("svad-state"), "not a state snapshot");
    check(j.at("version").get<int>() == 1, "unsupported state version");
    std::size_t batch = j.at("batch").get<std::size_t>();
    std::size_t width = j.at("width").get<std::size_t>();
    RecurrentState s;
    for (const auto& layer : j.at("layers")) {
        Tensor h({batch, width}), c({batch, width});
        h.data = layer.at("h").get<std::vector<double>>();
        c.data = layer.at("c").get<std::vector<double>>();
        check(h.data.size() == batch * width && c.data.size() == batch * width,
              "state snapshot size mismatch");
        s.layers.emplace_back(std::move(h), std::move(c));
    }
    return s;
}

// Tape-resident state for unrolled training.
struct StateVars {
    std::vector<std::pair<Var, Var>> layers;
};

// Classifier head: norm -> linear -> dropout -> norm -> LSTM stack ->
// dropout -> linear to 2 logits. The LSTM sits after the last
// normalization layer and advances exactly one step per call.
class LtmmHead {
public:
    HeadConfig cfg;

    LtmmHead(ParamStore& ps, const HeadConfig& config, const std::string& prefix = "head")
        : cfg(config) {
        cfg.validate();
        in_norm_ = LayerNorm(ps, prefix + ".in_norm", cfg.input_dim);
        in_proj_ = Linear(ps, prefix + ".in_proj", cfg.input_dim, cfg.lstm_width);
        mid_norm_ = LayerNorm(ps, prefix + ".mid_norm", cfg.lstm_width);
        for (std::size_t i = 0; i < cfg.lstm_cells; ++i)
            cells_.emplace_back(ps, prefix + ".lstm" + std::to_string(i),
                                cfg.lstm_width, cfg.lstm_width);
        out_proj_ = Linear(ps, prefix + ".out_proj", cfg.lstm_width, cfg.num_classes);
    }

    void init(ParamStore& ps, std::mt19937_64& rng) const {
        in_norm_.init(ps);
        in_proj_.init(ps, rng);
        mid_norm_.init(ps);
        for (const auto& c : cells_) c.init(ps, rng);
        out_proj_.init(ps, rng);
    }

    StateVars state_to_vars(Ctx& c, const RecurrentState& s) const {
        check(s.matches(cfg), "recurrent state does not match head config");
        StateVars v;
        for (const auto& [h, cc] : s.layers)
            v.layers.emplace_back(c.tape.input(h, false), c.tape.input(cc, false));
        return v;
    }

    RecurrentState vars_to_state(Ctx& c, const StateVars& v) const {
        RecurrentState s;
        for (const auto& [h, cc] : v.layers)
            s.layers.emplace_back(c.tape.val(h), c.tape.val(cc));
        return s;
    }

    // x: [B, input_dim]. Advances state in place by one step.
    Var forward(Ctx& c, Var x, StateVars& state) const {
        check(c.tape.val(x).rank() == 2 && c.tape.val(x).shape[1] == cfg.input_dim,
              "head: feature width mismatch");
        check(state.layers.size() == cfg.lstm_cells, "head: state/config mismatch");
        Tape& t = c.tape;
        Var y = in_norm_.forward(c, x);
        y = in_proj_.forward(c, y);
        if (c.train && cfg.dropout_rate > 0.0)
            y = t.dropout(y, cfg.dropout_rate, *c.rng);
        y = mid_norm_.forward(c, y);
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            auto [h, cc] = cells_[i].step(c, y, state.layers[i].first,
                                          state.layers[i].second);
            state.layers[i] = {h, cc};
            y = h;
        }
        if (c.train && cfg.dropout_rate > 0.0)
            y = t.dropout(y, cfg.dropout_rate, *c.rng);
        return out_proj_.forward(c, y);
    }

    // Convenience non-tape step for inference.
    std::pair<Tensor, RecurrentState> step(ParamStore& ps, const Tensor& features,
                                           const RecurrentState& state) const {
        Ctx c(ps, false);
        Var x = c.tape.input(features, false);
        StateVars sv = state_to_vars(c, state);
        Var logits = forward(c, x, sv);
        return {c.tape.val(logits), vars_to_state(c, sv)};
    }

private:
    LayerNorm in_norm_, mid_norm_;
    Linear in_proj_, out_proj_;
    std::vector<LstmCell> cells_;
};

// Anomaly-class probability from a [B,2] logit block; numerically stable
// two-class softmax.
inline std::vector<double> score_from_logits(const Tensor& logits) {
    check(logits.rank() == 2 && logits.shape[1] == 2, "score: expects [B,2] logits");
    check(logits.all_finite(), "score: non-finite logits");
    std::vector<double> out(logits.shape[0]);
    for (std::size_t r = 0; r < out.size(); ++r) {
        double ln = logits[r * 2], la = logits[r * 2 + 1];
        double mx = std::max(ln, la);
        double en = std::exp(ln - mx), ea = std::exp(la - mx);
        double s = ea / (en + ea);
        // keep the open-interval contract even when exp() underflows
        if (s >= 1.0) s = std::nextafter(1.0, 0.0);
        if (s <= 0.0) s = std::nextafter(0.0, 1.0);
        out[r] = s;
    }
    return out;
}

}  // namespace svad
