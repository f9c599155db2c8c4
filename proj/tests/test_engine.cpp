#include <doctest.h>

#include <svad/engine.hpp>
#include <svad/synth.hpp>

using namespace svad;

namespace {

ModelConfig tiny_model_config(std::size_t nf = 2, std::size_t cells = 1) {
    ModelConfig cfg;
    cfg.stmm.nf = nf;
    cfg.stmm.in_h = 16;
    cfg.stmm.in_w = 16;
    cfg.stmm.embed_dim = 8;
    cfg.stmm.stage_depths = {1};
    cfg.stmm.stage_heads = {2};
    cfg.stmm.window = {2, 4, 4};
    cfg.stmm.mlp_ratio = 1.0;
    cfg.head.input_dim = 8;
    cfg.head.lstm_cells = cells;
    cfg.head.lstm_width = 8;
    cfg.head.dropout_rate = 0.0;
    return cfg;
}

std::vector<Tensor> random_frames(std::size_t n, std::size_t h, std::size_t w,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(Tensor::uniform({h, w, 3}, 0.0, 1.0, rng));
    return out;
}

}  // namespace

TEST_CASE("assemble_clip right-aligns and replicates the oldest frame") {
    std::deque<Tensor> frames;
    frames.push_back(Tensor::full({2, 2, 3}, 0.1));
    Tensor clip = assemble_clip(frames, 3);
    REQUIRE(clip.shape == std::vector<std::size_t>{3, 2, 2, 3});
    for (double v : clip.data) CHECK(v == 0.1);

    frames.push_back(Tensor::full({2, 2, 3}, 0.2));
    clip = assemble_clip(frames, 3);
    CHECK(clip[0] == 0.1);                 // replicated oldest
    CHECK(clip[12] == 0.1);                // actual oldest
    CHECK(clip[24] == 0.2);                // newest last
    frames.push_back(Tensor::full({2, 2, 3}, 0.3));
    frames.push_back(Tensor::full({2, 2, 3}, 0.4));
    clip = assemble_clip(frames, 3);       // more frames than NF: keep the tail
    CHECK(clip[0] == 0.2);
    CHECK(clip[12] == 0.3);
    CHECK(clip[24] == 0.4);

    CHECK_THROWS(assemble_clip(std::deque<Tensor>{}, 3));
}

TEST_CASE("first pushed frame scores like a fully replicated clip") {
    Model model(tiny_model_config(3));
    std::mt19937_64 rng(7);
    model.init(rng);
    Tensor raw = Tensor::uniform({16, 16, 3}, 0.0, 1.0, rng);

    Session s(model);
    double streamed = s.push_frame(raw);
    CHECK(s.frames_seen() == 1);
    CHECK(s.ring_size() == 1);

    Tensor prepped = standardize(raw, model.cfg.stmm);
    std::deque<Tensor> one{prepped};
    auto [direct, _] = model.score_clip(assemble_clip(one, 3),
                                        RecurrentState::zeros(1, model.cfg.head));
    CHECK(streamed == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("streaming matches an offline replay") {
    Model model(tiny_model_config(2, 2));
    std::mt19937_64 rng(9);
    model.init(rng);
    auto frames = random_frames(10, 16, 16, 13);

    std::vector<double> streamed = score_video(model, frames);

    // independent replay: explicit ring + explicit state threading
    RecurrentState state = RecurrentState::zeros(1, model.cfg.head);
    std::deque<Tensor> ring;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        ring.push_back(standardize(frames[t], model.cfg.stmm));
        if (ring.size() > model.cfg.stmm.nf) ring.pop_front();
        auto [score, next] = model.score_clip(assemble_clip(ring, model.cfg.stmm.nf), state);
        state = std::move(next);
        CHECK(streamed[t] == doctest::Approx(score).epsilon(1e-6));
        CHECK(streamed[t] > 0.0);
        CHECK(streamed[t] < 1.0);
    }
}

TEST_CASE("scores are causal") {
    Model model(tiny_model_config(2, 1));
    std::mt19937_64 rng(15);
    model.init(rng);
    auto frames = random_frames(8, 16, 16, 17);
    std::vector<double> base = score_video(model, frames);

    auto altered = frames;
    altered[5] = Tensor::full({16, 16, 3}, 1.0);  // change a future frame
    std::vector<double> changed = score_video(model, altered);
    for (std::size_t t = 0; t < 5; ++t) CHECK(base[t] == changed[t]);
    CHECK(base[5] != changed[5]);
}

TEST_CASE("reset restores a fresh session") {
    Model model(tiny_model_config(2, 1));
    std::mt19937_64 rng(19);
    model.init(rng);
    auto frames = random_frames(5, 16, 16, 23);

    Session s(model);
    std::vector<double> first;
    for (const auto& f : frames) first.push_back(s.push_frame(f));
    s.reset();
    CHECK(s.frames_seen() == 0);
    CHECK(s.ring_size() == 0);
    for (std::size_t t = 0; t < frames.size(); ++t)
        CHECK(s.push_frame(frames[t]) == first[t]);
}

TEST_CASE("interleaved sessions stay isolated") {
    Model model(tiny_model_config(2, 1));
    std::mt19937_64 rng(27);
    model.init(rng);
    auto a = random_frames(6, 16, 16, 29);
    auto b = random_frames(6, 16, 16, 31);

    std::vector<double> solo_a = score_video(model, a);
    std::vector<double> solo_b = score_video(model, b);

    Session sa(model), sb(model);
    for (std::size_t t = 0; t < 6; ++t) {
        CHECK(sa.push_frame(a[t]) == solo_a[t]);
        CHECK(sb.push_frame(b[t]) == solo_b[t]);
    }
}

TEST_CASE("frames of any resolution are resized on the way in") {
    Model model(tiny_model_config(2, 1));
    std::mt19937_64 rng(33);
    model.init(rng);
    Session s(model);
    Tensor big = Tensor::uniform({32, 24, 3}, 0.0, 1.0, rng);
    double score = s.push_frame(big);
    CHECK(score > 0.0);
    CHECK(score < 1.0);

    CHECK_THROWS(s.push_frame(Tensor({16, 16})));  // wrong rank
    Tensor nan_frame = Tensor::full({16, 16, 3}, 0.5);
    nan_frame[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(s.push_frame(nan_frame));
}

TEST_CASE("state snapshot restore resumes exactly") {
    Model model(tiny_model_config(2, 2));
    std::mt19937_64 rng(37);
    model.init(rng);
    auto frames = random_frames(6, 16, 16, 41);

    Session s(model);
    std::vector<double> full;
    for (const auto& f : frames) full.push_back(s.push_frame(f));

    // replay the first half, snapshot, resume in a new session. The ring
    // must be rebuilt too, so re-push the last NF-1 frames before resuming.
    Session t(model);
    for (std::size_t i = 0; i < 3; ++i) t.push_frame(frames[i]);
    json snap = state_to_json(t.state());
    Session u(model);
    u.push_frame(frames[2]);  // refill the 2-frame ring: only frame 2 matters
    u.restore_state(state_from_json(snap));
    CHECK(u.push_frame(frames[3]) == doctest::Approx(full[3]).epsilon(1e-12));

    // mismatched state is rejected
    Model other(tiny_model_config(2, 1));
    Session v(other);
    CHECK_THROWS(v.restore_state(state_from_json(snap)));
}
