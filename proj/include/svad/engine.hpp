#pragma once

#include <deque>

#include "svad/data.hpp"
#include "svad/model.hpp"

namespace svad {

// Builds the [NF,H,W,3] clip ending at `frames.back()`. When fewer than
// NF frames are available the earliest one is replicated at the front
// (warm-up), so output is defined from the first frame on.
inline Tensor assemble_clip(const std::deque<Tensor>& frames, std::size_t nf) {
    check(!frames.empty(), "assemble_clip: no frames");
    const Tensor& front = frames.front();
    Tensor clip({nf, front.shape[0], front.shape[1], 3});
    std::size_t frame_size = front.size();
    for (std::size_t i = 0; i < nf; ++i) {
        // right-align the available frames, replicate the oldest
        std::size_t src = (i + frames.size() >= nf) ? i + frames.size() - nf : 0;
        const Tensor& f = frames[src];
        std::copy(f.data.begin(), f.data.end(), clip.data.begin() + i * frame_size);
    }
    return clip;
}

// Per-video online scoring session: NF-frame ring buffer plus the head's
// recurrent state. One score per pushed frame, strictly causal. Sessions
// are independent; pushes within one session must be serialized.
class Session {
public:
    explicit Session(Model& model) : model_(&model) {
        model.cfg.validate();
        state_ = RecurrentState::zeros(1, model.cfg.head);
    }

    std::size_t frames_seen() const { return frames_seen_; }
    std::size_t ring_size() const { return ring_.size(); }
    const RecurrentState& state() const { return state_; }

    // Raw RGB frame, any resolution, values in [0,1]. Returns s[t].
    double push_frame(const Tensor& frame) {
        check(frame.rank() == 3 && frame.shape[2] == 3, "push_frame: expects [H,W,3]");
        check(frame.all_finite(), "push_frame: non-finite pixels");
        const StmmConfig& sc = model_->cfg.stmm;
        Tensor prepped = standardize(resize_frame(frame, sc.in_h, sc.in_w), sc);
        ring_.push_back(std::move(prepped));
        if (ring_.size() > sc.nf) ring_.pop_front();
        ++frames_seen_;
        Tensor clip = assemble_clip(ring_, sc.nf);
        auto [score, next_state] = model_->score_clip(clip, state_);
        state_ = std::move(next_state);
        return score;
    }

    void reset() {
        ring_.clear();
        state_ = RecurrentState::zeros(1, model_->cfg.head);
        frames_seen_ = 0;
    }

    void restore_state(RecurrentState s) {
        check(s.matches(model_->cfg.head), "restore_state: state/config mismatch");
        state_ = std::move(s);
    }

private:
    Model* model_;
    std::deque<Tensor> ring_;
    RecurrentState state_;
    std::size_t frames_seen_ = 0;
};

// Scores a whole video through a fresh session.
inline std::vector<double> score_video(Model& model, const std::vector<Tensor>& frames) {
    Session s(model);
    std::vector<double> scores;
    scores.reserve(frames.size());
    for (const auto& f : frames) scores.push_back(s.push_frame(f));
    return scores;
}

}  // namespace svad
