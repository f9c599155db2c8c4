#include <doctest.h>

#include "gradcheck.hpp"
#include "svad/stmm.hpp"

using namespace svad;
using testutil::max_rel_error;
using testutil::numeric_grad;

namespace {

StmmConfig tiny_cfg(std::size_t nf = 4, std::size_t h = 16, std::size_t w = 16) {
    StmmConfig c;
    c.nf = nf;
    c.in_h = h;
    c.in_w = w;
    c.embed_dim = 8;
    c.stage_depths = {2};
    c.stage_heads = {2};
    c.window = {2, 2, 2};
    c.mlp_ratio = 2.0;
    return c;
}

Tensor random_clip(const StmmConfig& c, std::mt19937_64& rng) {
    return Tensor::randn({c.nf, c.in_h, c.in_w, 3}, rng);
}

}  // namespace

TEST_CASE("patch_embed token count law across shapes") {
    // token count = ceil(NF/2) * H/4 * W/4, including the full-scale shape
    struct Case { std::size_t nf, h, w, t, gh, gw; };
    std::vector<Case> cases = {
        {4, 320, 240, 2, 80, 60},  // full-scale input
        {2, 8, 8, 1, 2, 2},
        {4, 32, 32, 2, 8, 8},
        {6, 16, 24, 3, 4, 6},
        {2, 64, 16, 1, 16, 4},
        {8, 16, 16, 4, 4, 4},
        {2, 16, 64, 1, 4, 16},
        {4, 24, 24, 2, 6, 6},
        {10, 8, 8, 5, 2, 2},
        {2, 48, 32, 1, 12, 8},
        {4, 16, 48, 2, 4, 12},
    };
    std::mt19937_64 rng(1);
    for (const auto& cs : cases) {
        CAPTURE(cs.nf);
        CAPTURE(cs.h);
        CAPTURE(cs.w);
        StmmConfig cfg = tiny_cfg(cs.nf, cs.h, cs.w);
        ParamStore ps;
        Stmm stmm(ps, cfg);
        stmm.init(ps, rng);
        Ctx c(ps);
        Var clip = c.tape.input(random_clip(cfg, rng), false);
        TokenGrid g = stmm.patch_embed(c, clip);
        CHECK(g.t == cs.t);
        CHECK(g.h == cs.gh);
        CHECK(g.w == cs.gw);
        CHECK(g.tokens() == (cs.nf / 2) * (cs.h / 4) * (cs.w / 4));
        CHECK(c.tape.val(g.x).shape == std::vector<std::size_t>{g.tokens(), cfg.embed_dim});
    }
}

TEST_CASE("patch_embed rejects non-divisible spatial dims") {
    StmmConfig cfg = tiny_cfg(2, 10, 16);
    ParamStore ps;
    CHECK_THROWS(Stmm(ps, cfg));
}

TEST_CASE("odd NF is front-replicate padded") {
    std::mt19937_64 rng(2);
    StmmConfig cfg = tiny_cfg(3, 8, 8);
    Tensor clip = Tensor::randn({3, 8, 8, 3}, rng);
    Tensor padded = Stmm::pad_clip(clip);
    CHECK(padded.shape == std::vector<std::size_t>{4, 8, 8, 3});
    std::size_t frame = 8 * 8 * 3;
    for (std::size_t i = 0; i < frame; ++i) {
        CHECK(padded[i] == clip[i]);          // replicated earliest frame
        CHECK(padded[frame + i] == clip[i]);  // original frame 0
    }
    // NF=3 at 8x8 -> grid [2, 2, 2]
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);
    Ctx c(ps);
    TokenGrid g = stmm.forward(c, clip);
    CHECK(g.t == 2);
    CHECK(g.h == 2);
    CHECK(g.w == 2);
}

TEST_CASE("single window, no shift equals full self-attention") {
    // A constant token grid must stay constant per channel: identical
    // keys/queries give uniform attention weights.
    std::mt19937_64 rng(3);
    StmmConfig cfg = tiny_cfg(2, 8, 8);
    cfg.window = {1, 2, 2};
    cfg.stage_depths = {1};
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);
    Tensor clip = Tensor::full({2, 8, 8, 3}, 0.37);
    Ctx c(ps);
    TokenGrid g = stmm.forward(c, clip);
    const Tensor& out = c.tape.val(g.x);
    for (std::size_t r = 1; r < g.tokens(); ++r)
        for (std::size_t j = 0; j < g.c; ++j)
            CHECK(out[r * g.c + j] == doctest::Approx(out[j]).epsilon(1e-12));
}

TEST_CASE("unshifted windows are local: disjoint-window perturbations do not leak") {
    std::mt19937_64 rng(4);
    // one block, no shift, windows of 8 tokens over a 1x4x4 grid
    StmmConfig cfg = tiny_cfg(2, 16, 16);
    cfg.window = {1, 2, 2};
    cfg.stage_depths = {1};
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);

    Tensor base = random_clip(cfg, rng);
    Tensor poked = base;
    // perturb pixels feeding only the last window (bottom-right 8x8 block)
    for (std::size_t h = 8; h < 16; ++h)
        for (std::size_t w = 8; w < 16; ++w)
            for (std::size_t f = 0; f < 2; ++f)
                for (std::size_t ch = 0; ch < 3; ++ch)
                    poked[((f * 16 + h) * 16 + w) * 3 + ch] += 2.0;

    Ctx c1(ps), c2(ps);
    // depth 1 => only the unshifted block runs
    TokenGrid g1 = stmm.forward(c1, base);
    TokenGrid g2 = stmm.forward(c2, poked);
    const Tensor& o1 = c1.tape.val(g1.x);
    const Tensor& o2 = c2.tape.val(g2.x);
    // tokens in the top-left window (grid coords h<2, w<2) must be identical
    for (std::size_t th = 0; th < 2; ++th)
        for (std::size_t tw = 0; tw < 2; ++tw)
            for (std::size_t j = 0; j < g1.c; ++j) {
                std::size_t row = th * 4 + tw;
                CHECK(o1[row * g1.c + j] == o2[row * g2.c + j]);
            }
    // and the perturbed window must actually differ
    double diff = 0.0;
    for (std::size_t j = 0; j < g1.c; ++j)
        diff += std::abs(o1[(3 * 4 + 3) * g1.c + j] - o2[(3 * 4 + 3) * g2.c + j]);
    CHECK(diff > 1e-6);
}

TEST_CASE("shifted windows connect neighboring windows") {
    std::mt19937_64 rng(5);
    StmmConfig cfg = tiny_cfg(2, 16, 16);
    cfg.window = {1, 2, 2};
    cfg.stage_depths = {2};  // second block shifts
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);
    Tensor base = random_clip(cfg, rng);
    Tensor poked = base;
    poked[((0 * 16 + 15) * 16 + 15) * 3] += 2.0;  // bottom-right pixel
    Ctx c1(ps), c2(ps);
    const Tensor& o1 = c1.tape.val(stmm.forward(c1, base).x);
    const Tensor& o2 = c2.tape.val(stmm.forward(c2, poked).x);
    // token (1,1) sits in a shifted window fed by all four unshifted windows
    std::size_t row = 1 * 4 + 1;
    double diff = 0.0;
    for (std::size_t j = 0; j < 8; ++j)
        diff += std::abs(o1[row * 8 + j] - o2[row * 8 + j]);
    CHECK(diff > 1e-9);
}

TEST_CASE("permutation equivariance inside one window without positional terms") {
    std::mt19937_64 rng(6);
    // whole grid is one window; rel-pos bias disabled
    StmmConfig cfg = tiny_cfg(2, 8, 8);
    cfg.window = {1, 2, 2};
    cfg.stage_depths = {1};
    cfg.rel_pos_bias = false;
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);

    // permute the 2x2 spatial tokens by feeding permuted pixel blocks: swap
    // the two 4x4 pixel patches on the top row of an 8x8 image
    Tensor clip = random_clip(cfg, rng);
    Tensor permuted = clip;
    for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t h = 0; h < 4; ++h)
            for (std::size_t w = 0; w < 4; ++w)
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    std::size_t a = ((f * 8 + h) * 8 + w) * 3 + ch;
                    std::size_t b = ((f * 8 + h) * 8 + w + 4) * 3 + ch;
                    std::swap(permuted[a], permuted[b]);
                }
    Ctx c1(ps), c2(ps);
    TokenGrid g1 = stmm.forward(c1, clip);
    TokenGrid g2 = stmm.forward(c2, permuted);
    const Tensor& o1 = c1.tape.val(g1.x);
    const Tensor& o2 = c2.tape.val(g2.x);
    // token rows 0 and 1 swap, rows 2 and 3 stay
    for (std::size_t j = 0; j < g1.c; ++j) {
        CHECK(o1[0 * g1.c + j] == doctest::Approx(o2[1 * g1.c + j]).epsilon(1e-12));
        CHECK(o1[1 * g1.c + j] == doctest::Approx(o2[0 * g1.c + j]).epsilon(1e-12));
        CHECK(o1[2 * g1.c + j] == doctest::Approx(o2[2 * g1.c + j]).epsilon(1e-12));
        CHECK(o1[3 * g1.c + j] == doctest::Approx(o2[3 * g1.c + j]).epsilon(1e-12));
    }
}

TEST_CASE("forward is deterministic and shape-correct with merging") {
    std::mt19937_64 rng(8);
    StmmConfig cfg = tiny_cfg(4, 32, 32);
    cfg.embed_dim = 8;
    cfg.stage_depths = {1, 1};
    cfg.stage_heads = {2, 2};
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);
    CHECK(cfg.feature_dim() == 16);
    CHECK(stmm.feature_dim() == 16);
    Tensor clip = random_clip(cfg, rng);
    Ctx c1(ps), c2(ps);
    TokenGrid g1 = stmm.forward(c1, clip);
    TokenGrid g2 = stmm.forward(c2, clip);
    CHECK(g1.t == 2);
    CHECK(g1.h == 4);
    CHECK(g1.w == 4);
    CHECK(g1.c == 16);
    CHECK(c1.tape.val(g1.x).data == c2.tape.val(g2.x).data);  // bitwise
}

TEST_CASE("toy config shape example: [4,32,32,3] -> map [2,8,8,C]") {
    std::mt19937_64 rng(9);
    StmmConfig cfg = tiny_cfg(4, 32, 32);
    cfg.embed_dim = 32;
    cfg.stage_depths = {2};
    cfg.stage_heads = {4};
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);
    Ctx c(ps);
    TokenGrid g = stmm.forward(c, random_clip(cfg, rng));
    CHECK(g.t == 2);
    CHECK(g.h == 8);
    CHECK(g.w == 8);
    CHECK(g.c == 32);
}

TEST_CASE("zeroed final norm gain forces a constant output map") {
    std::mt19937_64 rng(10);
    StmmConfig cfg = tiny_cfg(2, 8, 8);
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);
    Tensor* gamma = ps.find("stmm.final_norm.gamma");
    REQUIRE(gamma != nullptr);
    for (double& v : gamma->data) v = 0.0;
    Tensor* beta = ps.find("stmm.final_norm.beta");
    for (std::size_t j = 0; j < beta->size(); ++j) (*beta)[j] = 0.1 * double(j);
    Ctx c(ps);
    TokenGrid g = stmm.forward(c, random_clip(cfg, rng));
    const Tensor& out = c.tape.val(g.x);
    for (std::size_t r = 0; r < g.tokens(); ++r)
        for (std::size_t j = 0; j < g.c; ++j)
            CHECK(out[r * g.c + j] == doctest::Approx(0.1 * double(j)));
}

TEST_CASE("reduce: constant map, identity case, and brute-force mean oracle") {
    std::mt19937_64 rng(12);
    ParamStore ps;
    StmmConfig cfg = tiny_cfg();
    Stmm stmm(ps, cfg);

    Ctx c(ps);
    // constant map of 2.5
    Var m1 = c.tape.input(Tensor::full({18, 8}, 2.5), false);
    TokenGrid g1{m1, 2, 3, 3, 8};
    const Tensor& r1 = c.tape.val(stmm.reduce(c, g1));
    for (double v : r1.data) CHECK(v == doctest::Approx(2.5));

    // [1,1,1,D] map passes through unchanged
    Tensor single = Tensor::randn({1, 8}, rng);
    Var m2 = c.tape.input(single, false);
    TokenGrid g2{m2, 1, 1, 1, 8};
    const Tensor& r2 = c.tape.val(stmm.reduce(c, g2));
    for (std::size_t j = 0; j < 8; ++j) CHECK(r2[j] == single[j]);

    // random [2,3,3,8] map against a scalar-loop mean
    Tensor map = Tensor::randn({18, 8}, rng);
    Var m3 = c.tape.input(map, false);
    TokenGrid g3{m3, 2, 3, 3, 8};
    const Tensor& r3 = c.tape.val(stmm.reduce(c, g3));
    for (std::size_t j = 0; j < 8; ++j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < 18; ++r) acc += map[r * 8 + j];
        CHECK(std::abs(r3[j] - acc / 18.0) < 1e-6);
    }
}

TEST_CASE("backbone+reducer gradients match finite differences") {
    std::mt19937_64 rng(14);
    StmmConfig cfg = tiny_cfg(2, 8, 8);
    cfg.embed_dim = 4;
    cfg.stage_heads = {2};
    cfg.stage_depths = {2};
    ParamStore ps;
    Stmm stmm(ps, cfg);
    stmm.init(ps, rng);
    Tensor clip = random_clip(cfg, rng);
    Tensor probe = Tensor::randn({cfg.embed_dim}, rng);  // random projection to scalar

    auto loss_of = [&](Ctx& c, Var clip_var) {
        TokenGrid g = stmm.forward_grid(c, clip_var);
        Var feat = stmm.reduce(c, g);
        Var p = c.tape.input(probe, false);
        return c.tape.sum_all(c.tape.mul(feat, p));
    };
    auto eval = [&]() {
        Ctx c(ps, true);
        Var clip_var = c.tape.input(clip, false);
        return c.tape.val(loss_of(c, clip_var))[0];
    };

    Ctx c(ps, true);
    Var clip_var = c.tape.input(clip, true);
    Var loss = loss_of(c, clip_var);
    c.tape.backward(loss);

    // input gradient
    {
        auto eval_in = [&]() {
            Ctx c2(ps, false);
            c2.with_grad = false;
            Var cv = c2.tape.input(clip, false);
            return c2.tape.val(loss_of(c2, cv))[0];
        };
        Tensor numeric = numeric_grad(clip, eval_in, 1e-5);
        CHECK(max_rel_error(c.tape.grad(clip_var), numeric, 1e-4) <= 1e-3);
    }
    // every parameter gradient
    for (std::size_t id = 0; id < ps.count(); ++id) {
        Tensor analytic = c.param_grad(id);
        Tensor numeric = numeric_grad(ps.value(id), eval, 1e-5);
        CAPTURE(ps.name(id));
        CHECK(max_rel_error(analytic, numeric, 1e-4) <= 1e-3);
    }
}
