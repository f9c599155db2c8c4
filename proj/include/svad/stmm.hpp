#pragma once

#include "svad/config.hpp"
#include "svad/nn.hpp"

namespace svad {

// Token grid on the tape: x is [t*h*w, c] row-major over (t, h, w).
struct TokenGrid {
    Var x;
    std::size_t t = 0, h = 0, w = 0, c = 0;
    std::size_t tokens() const { return t * h * w; }
};

namespace detail {

struct WindowPlan {
    std::array<std::size_t, 3> win{};    // effective window dims
    std::array<std::size_t, 3> shift{};  // cyclic shift (0 when unshifted)
    std::array<std::size_t, 3> padded{};
    std::size_t ws = 0, n_windows = 0;
    std::shared_ptr<std::vector<std::size_t>> gather;    // slot -> token row (or kZeroRow)
    std::shared_ptr<std::vector<std::size_t>> scatter;   // token row -> slot
    std::shared_ptr<Tensor> mask;                        // [nW, ws, ws], or null
};

inline WindowPlan plan_windows(std::size_t t, std::size_t h, std::size_t w,
                               const std::array<std::size_t, 3>& cfg_win, bool shifted) {
    WindowPlan p;
    std::array<std::size_t, 3> dims{t, h, w};
    for (int d = 0; d < 3; ++d) {
        p.win[d] = std::min(cfg_win[d], dims[d]);
        p.shift[d] = (shifted && dims[d] > p.win[d]) ? p.win[d] / 2 : 0;
        p.padded[d] = (dims[d] + p.win[d] - 1) / p.win[d] * p.win[d];
    }
    p.ws = p.win[0] * p.win[1] * p.win[2];
    std::array<std::size_t, 3> counts;
    for (int d = 0; d < 3; ++d) counts[d] = p.padded[d] / p.win[d];
    p.n_windows = counts[0] * counts[1] * counts[2];

    // Region ids reproduce the three-segment split used for shifted masks.
    auto region = [&](int d, std::size_t coord) -> std::size_t {
        if (p.shift[d] == 0) return 0;
        if (coord + p.win[d] < p.padded[d]) return 0;
        if (coord + p.shift[d] < p.padded[d]) return 1;
        return 2;
    };

    std::size_t slots = p.n_windows * p.ws;
    p.gather = std::make_shared<std::vector<std::size_t>>(slots);
    p.scatter = std::make_shared<std::vector<std::size_t>>(t * h * w, kZeroRow);
    std::vector<std::size_t> slot_region(slots);
    std::vector<bool> slot_valid(slots);
    std::size_t slot = 0;
    for (std::size_t wt = 0; wt < counts[0]; ++wt)
        for (std::size_t wh = 0; wh < counts[1]; ++wh)
            for (std::size_t ww = 0; ww < counts[2]; ++ww)
                for (std::size_t lt = 0; lt < p.win[0]; ++lt)
                    for (std::size_t lh = 0; lh < p.win[1]; ++lh)
                        for (std::size_t lw = 0; lw < p.win[2]; ++lw, ++slot) {
                            std::array<std::size_t, 3> pc{wt * p.win[0] + lt,
                                                          wh * p.win[1] + lh,
                                                          ww * p.win[2] + lw};
                            std::array<std::size_t, 3> src;
                            for (int d = 0; d < 3; ++d)
                                src[d] = (pc[d] + p.shift[d]) % p.padded[d];
                            // region ids live in post-roll coordinates
                            slot_region[slot] = (region(0, pc[0]) * 3 + region(1, pc[1])) * 3 +
                                                region(2, pc[2]);
                            bool valid = src[0] < t && src[1] < h && src[2] < w;
                            slot_valid[slot] = valid;
                            if (valid) {
                                std::size_t row = (src[0] * h + src[1]) * w + src[2];
                                (*p.gather)[slot] = row;
                                (*p.scatter)[row] = slot;
                            } else {
                                (*p.gather)[slot] = kZeroRow;
                            }
                        }

    bool any_pad = Tensor::numel({p.padded[0], p.padded[1], p.padded[2]}) != t * h * w;
    bool any_shift = p.shift[0] || p.shift[1] || p.shift[2];
    if (any_pad || any_shift) {
        p.mask = std::make_shared<Tensor>(
            std::vector<std::size_t>{p.n_windows, p.ws, p.ws});
        for (std::size_t wi = 0; wi < p.n_windows; ++wi)
            for (std::size_t i = 0; i < p.ws; ++i)
                for (std::size_t j = 0; j < p.ws; ++j) {
                    std::size_t si = wi * p.ws + i, sj = wi * p.ws + j;
                    bool blocked = !slot_valid[sj] || slot_region[si] != slot_region[sj];
                    (*p.mask)[(wi * p.ws + i) * p.ws + j] = blocked ? -1e9 : 0.0;
                }
    }
    return p;
}

// Relative position bias lookup table index for one window shape.
inline std::shared_ptr<std::vector<std::size_t>> relpos_index(
    const std::array<std::size_t, 3>& win) {
    std::size_t ws = win[0] * win[1] * win[2];
    auto idx = std::make_shared<std::vector<std::size_t>>(ws * ws);
    auto coord = [&](std::size_t s) {
        std::array<std::size_t, 3> c;
        c[2] = s % win[2];
        c[1] = (s / win[2]) % win[1];
        c[0] = s / (win[1] * win[2]);
        return c;
    };
    std::size_t span1 = 2 * win[1] - 1, span2 = 2 * win[2] - 1;
    for (std::size_t a = 0; a < ws; ++a) {
        auto ca = coord(a);
        for (std::size_t b = 0; b < ws; ++b) {
            auto cb = coord(b);
            std::size_t rt = ca[0] - cb[0] + win[0] - 1;
            std::size_t rh = ca[1] - cb[1] + win[1] - 1;
            std::size_t rw = ca[2] - cb[2] + win[2] - 1;
            (*idx)[a * ws + b] = (rt * span1 + rh) * span2 + rw;
        }
    }
    return idx;
}

}  // namespace detail

// One transformer block: windowed (or shifted-window) attention + MLP,
// both with pre-norm residuals.
struct SwinBlock {
    LayerNorm norm1, norm2;
    Linear q, k, v, proj, mlp_in, mlp_out;
    std::size_t relpos_table = 0;
    bool has_relpos = false;
    std::size_t heads = 0, channels = 0;
    bool shifted = false;
    detail::WindowPlan plan;
    std::shared_ptr<std::vector<std::size_t>> rel_idx;

    SwinBlock() = default;
    SwinBlock(ParamStore& ps, const std::string& prefix, std::size_t ch, std::size_t nh,
              std::size_t mlp_hidden, bool shift, const detail::WindowPlan& wp,
              bool rel_pos)
        : norm1(ps, prefix + ".norm1", ch),
          norm2(ps, prefix + ".norm2", ch),
          q(ps, prefix + ".q", ch, ch),
          k(ps, prefix + ".k", ch, ch),
          v(ps, prefix + ".v", ch, ch),
          proj(ps, prefix + ".proj", ch, ch),
          mlp_in(ps, prefix + ".mlp_in", ch, mlp_hidden),
          mlp_out(ps, prefix + ".mlp_out", mlp_hidden, ch),
          heads(nh),
          channels(ch),
          shifted(shift),
          plan(wp) {
        if (rel_pos) {
            std::size_t rows =
                (2 * wp.win[0] - 1) * (2 * wp.win[1] - 1) * (2 * wp.win[2] - 1);
            relpos_table = ps.add(prefix + ".relpos", {rows, nh});
            has_relpos = true;
            rel_idx = detail::relpos_index(wp.win);
        }
    }

    void init(ParamStore& ps, std::mt19937_64& rng) const {
        norm1.init(ps);
        norm2.init(ps);
        q.init(ps, rng);
        k.init(ps, rng);
        v.init(ps, rng);
        proj.init(ps, rng);
        mlp_in.init(ps, rng);
        mlp_out.init(ps, rng);
        if (has_relpos) {
            // small random bias, as in the backbone family
            Tensor& tb = ps.value(relpos_table);
            std::normal_distribution<double> dist(0.0, 0.02);
            for (double& vv : tb.data) vv = dist(rng);
        }
    }

    Var attention(Ctx& c, Var x_norm) const {
        Tape& t = c.tape;
        std::size_t hd = channels / heads;
        Var tw = t.gather_rows(x_norm, plan.gather);  // [nW*ws, C]
        auto split = [&](Var lin_out) {
            Var r = t.reshape(lin_out, {plan.n_windows, plan.ws, heads, hd});
            r = t.permute(r, {0, 2, 1, 3});
            return t.reshape(r, {plan.n_windows * heads, plan.ws, hd});
        };
        Var qh = split(q.forward(c, tw));
        Var kh = split(k.forward(c, tw));
        Var vh = split(v.forward(c, tw));
        Var attn = t.scale(t.bmm_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(hd)));
        if (has_relpos) attn = t.add_relpos_bias(attn, c.p(relpos_table), rel_idx, heads);
        if (plan.mask) attn = t.add_window_mask(attn, plan.mask, heads);
        attn = t.softmax_lastdim(attn);
        Var out = t.bmm(attn, vh);  // [nW*heads, ws, hd]
        out = t.reshape(out, {plan.n_windows, heads, plan.ws, hd});
        out = t.permute(out, {0, 2, 1, 3});
        out = t.reshape(out, {plan.n_windows * plan.ws, channels});
        out = proj.forward(c, out);
        return t.gather_rows(out, plan.scatter);  // back to token order
    }

    Var forward(Ctx& c, Var x) const {
        Tape& t = c.tape;
        x = t.add(x, attention(c, norm1.forward(c, x)));
        Var m = mlp_out.forward(c, t.gelu(mlp_in.forward(c, norm2.forward(c, x))));
        return t.add(x, m);
    }
};

// Spatial 2x2 patch merging: [t,h,w,C] -> [t,ceil(h/2),ceil(w/2),2C].
struct PatchMerge {
    LayerNorm norm;
    Linear reduction;
    std::size_t in_t = 0, in_h = 0, in_w = 0, in_c = 0;

    PatchMerge() = default;
    PatchMerge(ParamStore& ps, const std::string& prefix, std::size_t t, std::size_t h,
               std::size_t w, std::size_t ch)
        : norm(ps, prefix + ".norm", 4 * ch),
          reduction(ps, prefix + ".reduction", 4 * ch, 2 * ch),
          in_t(t), in_h(h), in_w(w), in_c(ch) {}

    void init(ParamStore& ps, std::mt19937_64& rng) const {
        norm.init(ps);
        reduction.init(ps, rng);
    }

    TokenGrid forward(Ctx& c, const TokenGrid& g) const {
        std::size_t oh = (in_h + 1) / 2, ow = (in_w + 1) / 2;
        auto idx = std::make_shared<std::vector<std::size_t>>(in_t * oh * ow * 4);
        std::size_t s = 0;
        for (std::size_t ti = 0; ti < in_t; ++ti)
            for (std::size_t hi = 0; hi < oh; ++hi)
                for (std::size_t wi = 0; wi < ow; ++wi)
                    for (std::size_t dh = 0; dh < 2; ++dh)
                        for (std::size_t dw = 0; dw < 2; ++dw, ++s) {
                            std::size_t sh = 2 * hi + dh, sw = 2 * wi + dw;
                            (*idx)[s] = (sh < in_h && sw < in_w)
                                            ? (ti * in_h + sh) * in_w + sw
                                            : kZeroRow;
                        }
        Tape& t = c.tape;
        Var x = t.gather_rows(g.x, idx);                       // [N*4, C]
        x = t.reshape(x, {in_t * oh * ow, 4 * in_c});
        x = reduction.forward(c, norm.forward(c, x));
        return TokenGrid{x, in_t, oh, ow, 2 * in_c};
    }
};

struct Stage {
    std::vector<SwinBlock> blocks;
    bool has_merge = false;
    PatchMerge merge;
};

// Short-term backbone: 3D patch embedding, shifted-window stages, final
// norm; reduce() collapses the map to one feature vector.
class Stmm {
public:
    StmmConfig cfg;

    explicit Stmm(ParamStore& ps, const StmmConfig& config, const std::string& prefix = "stmm")
        : cfg(config) {
        cfg.validate();
        grid_t_ = (cfg.nf + 1) / 2;
        grid_h_ = cfg.in_h / 4;
        grid_w_ = cfg.in_w / 4;
        patch_proj_ = Linear(ps, prefix + ".patch_proj", 2 * 4 * 4 * 3, cfg.embed_dim);
        embed_norm_ = LayerNorm(ps, prefix + ".embed_norm", cfg.embed_dim);

        std::size_t t = grid_t_, h = grid_h_, w = grid_w_, ch = cfg.embed_dim;
        for (std::size_t s = 0; s < cfg.stage_depths.size(); ++s) {
            Stage stage;
            if (s > 0) {
                stage.has_merge = true;
                stage.merge = PatchMerge(ps, prefix + ".stage" + std::to_string(s) + ".merge",
                                         t, h, w, ch);
                h = (h + 1) / 2;
                w = (w + 1) / 2;
                ch *= 2;
            }
            std::size_t mlp_hidden =
                std::max<std::size_t>(1, static_cast<std::size_t>(cfg.mlp_ratio * ch));
            for (std::size_t b = 0; b < cfg.stage_depths[s]; ++b) {
                bool shift = (b % 2 == 1);
                auto wp = detail::plan_windows(t, h, w, cfg.window, shift);
                stage.blocks.emplace_back(ps,
                                          prefix + ".stage" + std::to_string(s) + ".block" +
                                              std::to_string(b),
                                          ch, cfg.stage_heads[s], mlp_hidden, shift, wp,
                                          cfg.rel_pos_bias);
            }
            stages_.push_back(std::move(stage));
        }
        final_norm_ = LayerNorm(ps, prefix + ".final_norm", ch);
        out_t_ = t;
        out_h_ = h;
        out_w_ = w;
        out_c_ = ch;
    }

    void init(ParamStore& ps, std::mt19937_64& rng) const {
        patch_proj_.init(ps, rng);
        embed_norm_.init(ps);
        for (const auto& st : stages_) {
            if (st.has_merge) st.merge.init(ps, rng);
            for (const auto& b : st.blocks) b.init(ps, rng);
        }
        final_norm_.init(ps);
    }

    // Front-replicates the earliest frame so the temporal patch size of 2
    // always divides the clip; the most recent frames are untouched.
    static Tensor pad_clip(const Tensor& clip) {
        check(clip.rank() == 4 && clip.shape[3] == 3, "clip must be [NF,H,W,3]");
        if (clip.shape[0] % 2 == 0) return clip;
        std::size_t frame = clip.shape[1] * clip.shape[2] * 3;
        Tensor out({clip.shape[0] + 1, clip.shape[1], clip.shape[2], 3});
        std::copy_n(clip.data.begin(), frame, out.data.begin());
        std::copy(clip.data.begin(), clip.data.end(), out.data.begin() + frame);
        return out;
    }

    void validate_clip(const Tensor& clip) const {
        check(clip.rank() == 4, "clip must be [NF,H,W,3]");
        check(clip.shape[1] == cfg.in_h && clip.shape[2] == cfg.in_w && clip.shape[3] == 3,
              "clip dims " + clip.shape_str() + " do not match config");
        check(clip.shape[1] % 4 == 0 && clip.shape[2] % 4 == 0,
              "H and W must be divisible by 4");
        check(clip.all_finite(), "clip contains non-finite values");
    }

    // clip_var must already be even-length [T,H,W,3] on the tape.
    TokenGrid patch_embed(Ctx& c, Var clip_var) const {
        const Tensor& clip = c.tape.val(clip_var);
        std::size_t tf = clip.shape[0], h = clip.shape[1], w = clip.shape[2];
        check(tf % 2 == 0, "patch_embed: temporal length must be even");
        std::size_t tp = tf / 2, hp = h / 4, wp = w / 4;
        auto idx = std::make_shared<std::vector<std::size_t>>(tp * hp * wp * 32);
        std::size_t s = 0;
        for (std::size_t pt = 0; pt < tp; ++pt)
            for (std::size_t ph = 0; ph < hp; ++ph)
                for (std::size_t pw = 0; pw < wp; ++pw)
                    for (std::size_t dt = 0; dt < 2; ++dt)
                        for (std::size_t dh = 0; dh < 4; ++dh)
                            for (std::size_t dw = 0; dw < 4; ++dw, ++s)
                                (*idx)[s] = ((2 * pt + dt) * h + 4 * ph + dh) * w +
                                            4 * pw + dw;
        Tape& t = c.tape;
        Var px = t.reshape(clip_var, {tf * h * w, 3});
        Var x = t.gather_rows(px, idx);               // [Np*32, 3]
        x = t.reshape(x, {tp * hp * wp, 96});
        x = embed_norm_.forward(c, patch_proj_.forward(c, x));
        return TokenGrid{x, tp, hp, wp, cfg.embed_dim};
    }

    TokenGrid forward_grid(Ctx& c, Var clip_var) const {
        TokenGrid g = patch_embed(c, clip_var);
        check(g.t == grid_t_ && g.h == grid_h_ && g.w == grid_w_,
              "clip temporal length does not match configured nf");
        for (const auto& st : stages_) {
            if (st.has_merge) g = st.merge.forward(c, g);
            for (const auto& b : st.blocks) g.x = b.forward(c, g.x);
        }
        g.x = final_norm_.forward(c, g.x);
        return g;
    }

    // Preprocessed clip -> feature map grid. Handles odd-NF padding.
    TokenGrid forward(Ctx& c, const Tensor& clip) const {
        validate_clip(clip);
        check(clip.shape[0] == cfg.nf, "clip frame count does not match config nf");
        Tensor padded = pad_clip(clip);
        Var v = c.tape.input(std::move(padded), false);
        return forward_grid(c, v);
    }

    // Adaptive-average-pool reducer: global mean over (t,h,w).
    Var reduce(Ctx& c, const TokenGrid& g) const { return c.tape.mean_rows(g.x); }

    std::size_t out_t() const { return out_t_; }
    std::size_t out_h() const { return out_h_; }
    std::size_t out_w() const { return out_w_; }
    std::size_t feature_dim() const { return out_c_; }

private:
    Linear patch_proj_;
    LayerNorm embed_norm_;
    std::vector<Stage> stages_;
    LayerNorm final_norm_;
    std::size_t grid_t_ = 0, grid_h_ = 0, grid_w_ = 0;
    std::size_t out_t_ = 0, out_h_ = 0, out_w_ = 0, out_c_ = 0;
};

}  // namespace svad
