#pragma once

#include "svad/engine.hpp"

namespace svad {

// w_i proportional to total/count_i, normalized to sum 1.
inline std::pair<double, double> class_weights(double normal_count, double anomaly_count) {
    check(normal_count > 0 && anomaly_count > 0, "class_weights: zero class count");
    double total = normal_count + anomaly_count;
    double wn = total / normal_count;
    double wa = total / anomaly_count;
    double z = wn + wa;
    return {wn / z, wa / z};
}

// Scalar convenience wrapper over the tape loss (used by tests/oracles).
inline double weighted_ce_value(const Tensor& logits, const std::vector<int>& labels,
                                double w_normal, double w_anomaly) {
    Tape t;
    Var l = t.input(logits, false);
    return t.val(t.weighted_ce(l, std::make_shared<std::vector<int>>(labels), w_normal,
                               w_anomaly))[0];
}

// One sampled training row: VCL consecutive frames of one video.
struct ClipRow {
    std::size_t video = 0;
    std::size_t offset = 0;             // start frame in the source video
    std::vector<const Tensor*> frames;  // standardized, length = VCL
    std::vector<int> labels;
};

struct ClipBatch {
    std::vector<ClipRow> rows;
};

struct StepMetrics {
    double loss = 0.0;
    double accuracy_normal = 0.0;
    double accuracy_anomaly = 0.0;
};

// SGD with classic momentum: v <- mu v + g; p <- p - lr v.
class SgdOptimizer {
public:
    SgdOptimizer(ParamStore& ps, double lr, double momentum)
        : params_(&ps), lr_(lr), momentum_(momentum) {
        for (std::size_t i = 0; i < ps.count(); ++i)
            velocity_.emplace_back(ps.value(i).shape);
    }

    void step(const std::vector<Tensor>& grads) {
        check(grads.size() == velocity_.size(), "optimizer: gradient count mismatch");
        for (std::size_t i = 0; i < grads.size(); ++i) {
            Tensor& v = velocity_[i];
            Tensor& p = params_->value(i);
            for (std::size_t j = 0; j < v.size(); ++j) {
                v[j] = momentum_ * v[j] + grads[i][j];
                p[j] -= lr_ * v[j];
            }
        }
    }

    double learning_rate() const { return lr_; }

    std::vector<std::pair<std::string, Tensor>> state() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (std::size_t i = 0; i < velocity_.size(); ++i)
            out.emplace_back("velocity." + params_->name(i), velocity_[i]);
        return out;
    }

    void restore(const std::vector<std::pair<std::string, Tensor>>& state) {
        check(state.size() == velocity_.size(), "optimizer: state size mismatch");
        for (std::size_t i = 0; i < state.size(); ++i) {
            check(state[i].first == "velocity." + params_->name(i) &&
                      state[i].second.shape == velocity_[i].shape,
                  "optimizer: state entry mismatch");
            velocity_[i] = state[i].second;
        }
    }

private:
    ParamStore* params_;
    double lr_;
    double momentum_;
    std::vector<Tensor> velocity_;
};

// Prescribed initialization: uniform linear weights, semi-orthogonal LSTM
// matrices, zero biases (and the layer-norm/rel-pos conventions).
inline void init_params(Model& model, std::mt19937_64& rng) { model.init(rng); }

class Trainer {
public:
    Trainer(Model& model, const LoadedDataset& dataset, const TrainConfig& cfg)
        : model_(&model), dataset_(&dataset), cfg_(cfg), rng_(cfg.seed),
          optimizer_(model.params, cfg.learning_rate, cfg.momentum) {
        cfg_.validate();
        check(!dataset.empty(), "Trainer: empty dataset");
        // standardize once; rows reference these tensors
        const StmmConfig& sc = model.cfg.stmm;
        for (const auto& video : dataset) {
            check(!video.frames.empty(), "Trainer: video without frames");
            std::vector<Tensor> prepped;
            prepped.reserve(video.frames.size());
            for (const auto& f : video.frames) {
                check(f.shape[0] == sc.in_h && f.shape[1] == sc.in_w,
                      "Trainer: dataset frame size does not match model config");
                prepped.push_back(standardize(f, sc));
            }
            standardized_.push_back(std::move(prepped));
        }
        if (cfg_.w_normal <= 0 || cfg_.w_anomaly <= 0) {
            auto [n, a] = label_counts(dataset);
            std::tie(w_normal_, w_anomaly_) = class_weights(static_cast<double>(n),
                                                            static_cast<double>(a));
        } else {
            double z = cfg_.w_normal + cfg_.w_anomaly;
            w_normal_ = cfg_.w_normal / z;
            w_anomaly_ = cfg_.w_anomaly / z;
        }
    }

    static std::pair<std::size_t, std::size_t> label_counts(const LoadedDataset& ds) {
        std::size_t n = 0, a = 0;
        for (const auto& v : ds)
            for (int l : v.labels) (l ? a : n)++;
        return {n, a};
    }

    double w_normal() const { return w_normal_; }
    double w_anomaly() const { return w_anomaly_; }
    SgdOptimizer& optimizer() { return optimizer_; }
    std::mt19937_64& rng() { return rng_; }

    // B videos, VCL consecutive frames each at a uniform random valid
    // offset; videos shorter than VCL start at 0 and are front-padded by
    // the warm-up rule at unroll time.
    ClipBatch sample_batch() {
        ClipBatch batch;
        std::vector<std::size_t> order(dataset_->size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng_);
        for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
            std::size_t vid;
            if (b < order.size()) {
                vid = order[b];
            } else {
                std::uniform_int_distribution<std::size_t> pick(0, dataset_->size() - 1);
                vid = pick(rng_);
            }
            const auto& video = (*dataset_)[vid];
            std::size_t len = video.frames.size();
            std::size_t offset = 0;
            if (len > cfg_.vcl) {
                std::uniform_int_distribution<std::size_t> off(0, len - cfg_.vcl);
                offset = off(rng_);
            }
            ClipRow row;
            row.video = vid;
            row.offset = offset;
            for (std::size_t j = 0; j < cfg_.vcl; ++j) {
                // short videos get front-padded with their first frame
                std::size_t src = (len >= cfg_.vcl)
                                      ? offset + j
                                      : (j + len >= cfg_.vcl ? j + len - cfg_.vcl : 0);
                row.frames.push_back(&standardized_[vid][src]);
                row.labels.push_back(video.labels[src]);
            }
            batch.rows.push_back(std::move(row));
        }
        return batch;
    }

    // Unrolls each row from a zero recurrent state through the full VCL
    // window, averages the weighted CE over all B*VCL frame predictions,
    // and applies one SGD step. Gradients flow through the whole unroll.
    StepMetrics train_step(const ClipBatch& batch) {
        const Stmm& backbone = model_->backbone();
        const LtmmHead& head = model_->head();
        std::size_t nf = model_->cfg.stmm.nf;

        std::vector<Tensor> grads;
        for (std::size_t i = 0; i < model_->params.count(); ++i)
            grads.emplace_back(model_->params.value(i).shape);

        double total_loss = 0.0;
        std::array<std::size_t, 2> correct{0, 0}, seen{0, 0};
        std::size_t total_frames = 0;
        for (const auto& row : batch.rows) total_frames += row.frames.size();

        for (const auto& row : batch.rows) {
            Ctx c(model_->params, true, &rng_);
            StateVars state;
            if (!carried_ || !cfg_.carry_state_across_clips)
                state = head.state_to_vars(
                    c, RecurrentState::zeros(1, model_->cfg.head));
            else
                state = head.state_to_vars(c, carried_state_);

            std::deque<Tensor> ring;
            Var loss{};
            for (std::size_t j = 0; j < row.frames.size(); ++j) {
                ring.push_back(*row.frames[j]);
                if (ring.size() > nf) ring.pop_front();
                Tensor clip = assemble_clip(ring, nf);
                TokenGrid g = backbone.forward(c, clip);
                Var feat = c.tape.reshape(backbone.reduce(c, g),
                                          {1, model_->cfg.head.input_dim});
                Var logits = head.forward(c, feat, state);
                auto label = std::make_shared<std::vector<int>>(1, row.labels[j]);
                Var l = c.tape.weighted_ce(logits, label, w_normal_, w_anomaly_);
                loss = loss.valid() ? c.tape.add(loss, l) : l;

                const Tensor& lv = c.tape.val(logits);
                int pred = lv[1] > lv[0] ? 1 : 0;
                seen[static_cast<std::size_t>(row.labels[j])]++;
                if (pred == row.labels[j])
                    correct[static_cast<std::size_t>(row.labels[j])]++;
            }
            loss = c.tape.scale(loss, 1.0 / static_cast<double>(total_frames));
            double lv = c.tape.val(loss)[0];
            if (!std::isfinite(lv))
                throw std::runtime_error(
                    "train_step: non-finite loss (row video " +
                    std::to_string(row.video) + ", offset " + std::to_string(row.offset) +
                    "); lower the learning rate or inspect the data");
            total_loss += lv;
            c.tape.backward(loss);
            for (std::size_t i = 0; i < grads.size(); ++i) {
                Tensor g = c.param_grad(i);
                for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += g[j];
            }
            if (cfg_.carry_state_across_clips) {
                carried_state_ = head.vars_to_state(c, state);
                carried_ = true;
            }
        }
        optimizer_.step(grads);

        StepMetrics m;
        m.loss = total_loss;
        m.accuracy_normal = seen[0] ? static_cast<double>(correct[0]) / seen[0] : 0.0;
        m.accuracy_anomaly = seen[1] ? static_cast<double>(correct[1]) / seen[1] : 0.0;
        return m;
    }

    StepMetrics step() { return train_step(sample_batch()); }

private:
    Model* model_;
    const LoadedDataset* dataset_;
    TrainConfig cfg_;
    std::mt19937_64 rng_;
    SgdOptimizer optimizer_;
    std::vector<std::vector<Tensor>> standardized_;
    double w_normal_ = 0.5, w_anomaly_ = 0.5;
    RecurrentState carried_state_;
    bool carried_ = false;
};

}  // namespace svad
