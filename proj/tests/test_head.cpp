#include <doctest.h>

#include "gradcheck.hpp"
#include "svad/head.hpp"

using namespace svad;
using testutil::max_rel_error;
using testutil::numeric_grad;

namespace {

HeadConfig small_cfg(std::size_t cells = 2) {
    HeadConfig c;
    c.input_dim = 6;
    c.lstm_cells = cells;
    c.lstm_width = 5;
    c.dropout_rate = 0.3;
    return c;
}

}  // namespace

TEST_CASE("init_state shapes") {
    HeadConfig big;
    big.input_dim = 1024;
    big.lstm_cells = 3;
    big.lstm_width = 1024;
    RecurrentState s = RecurrentState::zeros(8, big);
    CHECK(s.layers.size() == 3);
    for (auto& [h, c] : s.layers) {
        CHECK(h.shape == std::vector<std::size_t>{8, 1024});
        CHECK(c.shape == std::vector<std::size_t>{8, 1024});
        for (double v : h.data) CHECK(v == 0.0);
        for (double v : c.data) CHECK(v == 0.0);
    }

    HeadConfig none = small_cfg(0);
    CHECK(RecurrentState::zeros(4, none).layers.empty());

    HeadConfig one;
    one.input_dim = 4;
    one.lstm_cells = 1;
    one.lstm_width = 4;
    RecurrentState s1 = RecurrentState::zeros(1, one);
    CHECK(s1.layers.size() == 1);
    CHECK(s1.layers[0].first.shape == std::vector<std::size_t>{1, 4});
}

TEST_CASE("zero cells: logits depend only on the current features") {
    std::mt19937_64 rng(41);
    HeadConfig cfg = small_cfg(0);
    ParamStore ps;
    LtmmHead head(ps, cfg);
    head.init(ps, rng);
    Tensor x = Tensor::randn({1, 6}, rng);
    RecurrentState empty;
    auto [l1, s1] = head.step(ps, x, empty);
    // simulate a different "history" by stepping on other inputs first
    Tensor other = Tensor::randn({1, 6}, rng);
    auto [lo, so] = head.step(ps, other, empty);
    auto [l2, s2] = head.step(ps, x, so);
    CHECK(l1.data == l2.data);
    CHECK(s1.layers.empty());
}

TEST_CASE("zero input, zero state, zero biases: LSTM emits zero, logits equal final bias") {
    std::mt19937_64 rng(43);
    HeadConfig cfg = small_cfg(1);
    ParamStore ps;
    LtmmHead head(ps, cfg);
    head.init(ps, rng);
    // zero every projection weight feeding the cell, keep biases at zero
    for (const char* name : {"head.in_proj.weight", "head.lstm0.w_ih", "head.lstm0.w_hh"})
        for (double& v : ps.find(name)->data) v = 0.0;
    Tensor* out_b = ps.find("head.out_proj.bias");
    (*out_b)[0] = 1.25;
    (*out_b)[1] = -0.5;
    Tensor x = Tensor({1, 6});
    auto [logits, st] = head.step(ps, x, RecurrentState::zeros(1, cfg));
    // i=f=o=sigmoid(0)=0.5, g=tanh(0)=0 -> c'=0, h'=0.5*tanh(0)=0
    for (double v : st.layers[0].first.data) CHECK(v == 0.0);
    CHECK(logits[0] == doctest::Approx(1.25));
    CHECK(logits[1] == doctest::Approx(-0.5));
}

TEST_CASE("hidden state stays tanh-bounded over 50 identical steps") {
    std::mt19937_64 rng(47);
    HeadConfig cfg = small_cfg(3);
    ParamStore ps;
    LtmmHead head(ps, cfg);
    head.init(ps, rng);
    Tensor x = Tensor::randn({2, 6}, rng);
    RecurrentState st = RecurrentState::zeros(2, cfg);
    for (int step = 0; step < 50; ++step) {
        auto [logits, next] = head.step(ps, x, st);
        st = next;
        for (const auto& [h, c] : st.layers)
            for (double v : h.data) CHECK(std::abs(v) <= 1.0);
    }
}

TEST_CASE("one-step contract: replaying from a saved state is reproducible") {
    std::mt19937_64 rng(53);
    HeadConfig cfg = small_cfg(2);
    ParamStore ps;
    LtmmHead head(ps, cfg);
    head.init(ps, rng);
    Tensor x = Tensor::randn({1, 6}, rng);
    RecurrentState st = RecurrentState::zeros(1, cfg);
    auto [l1, s1] = head.step(ps, x, st);
    auto [l2, s2] = head.step(ps, x, st);
    CHECK(l1.data == l2.data);
    for (std::size_t i = 0; i < s1.layers.size(); ++i) {
        CHECK(s1.layers[i].first.data == s2.layers[i].first.data);
        CHECK(s1.layers[i].second.data == s2.layers[i].second.data);
    }
}

TEST_CASE("score: symmetry, saturation, closed-form oracle, complement") {
    Tensor z({1, 2});
    CHECK(score_from_logits(z)[0] == doctest::Approx(0.5));

    Tensor sat({1, 2});
    sat[0] = -20.0;
    sat[1] = 20.0;
    CHECK(score_from_logits(sat)[0] >= 0.9999);

    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> dist(-30.0, 30.0);
    for (int i = 0; i < 200; ++i) {
        Tensor l({1, 2});
        l[0] = dist(rng);
        l[1] = dist(rng);
        double s = score_from_logits(l)[0];
        double oracle = 1.0 / (1.0 + std::exp(l[0] - l[1]));
        CHECK(std::abs(s - oracle) <= 1e-9);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        // normal-class probability is the complement
        Tensor swapped({1, 2});
        swapped[0] = l[1];
        swapped[1] = l[0];
        CHECK(s + score_from_logits(swapped)[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("score is monotone in the logit gap") {
    double prev = -1.0;
    for (double gap = -10.0; gap <= 10.0; gap += 0.5) {
        Tensor l({1, 2});
        l[0] = -gap / 2;
        l[1] = gap / 2;
        double s = score_from_logits(l)[0];
        CHECK(s > prev);
        prev = s;
    }
}

TEST_CASE("statefulness separation with lstm cells present") {
    std::mt19937_64 rng(61);
    HeadConfig cfg = small_cfg(2);
    ParamStore ps;
    LtmmHead head(ps, cfg);
    head.init(ps, rng);
    Tensor shared = Tensor::randn({1, 6}, rng);
    Tensor hist_a = Tensor::randn({1, 6}, rng);
    Tensor hist_b = Tensor::randn({1, 6}, rng);
    auto run = [&](const Tensor& hist) {
        RecurrentState st = RecurrentState::zeros(1, cfg);
        for (int i = 0; i < 5; ++i) st = head.step(ps, hist, st).second;
        auto [logits, st2] = head.step(ps, shared, st);
        return score_from_logits(logits)[0];
    };
    CHECK(std::abs(run(hist_a) - run(hist_b)) > 1e-6);
}

TEST_CASE("state snapshot round-trips through json") {
    std::mt19937_64 rng(67);
    HeadConfig cfg = small_cfg(3);
    RecurrentState st = RecurrentState::zeros(2, cfg);
    for (auto& [h, c] : st.layers) {
        h = Tensor::randn(h.shape, rng);
        c = Tensor::randn(c.shape, rng);
    }
    RecurrentState back = state_from_json(state_to_json(st));
    REQUIRE(back.layers.size() == st.layers.size());
    for (std::size_t i = 0; i < st.layers.size(); ++i) {
        CHECK(back.layers[i].first.data == st.layers[i].first.data);
        CHECK(back.layers[i].second.data == st.layers[i].second.data);
    }
    CHECK_THROWS(state_from_json(json{{"format", "bogus"}}));
}

TEST_CASE("state/config mismatch is rejected") {
    std::mt19937_64 rng(71);
    HeadConfig cfg = small_cfg(2);
    ParamStore ps;
    LtmmHead head(ps, cfg);
    head.init(ps, rng);
    HeadConfig other = small_cfg(1);
    Tensor x({1, 6});
    CHECK_THROWS(head.step(ps, x, RecurrentState::zeros(1, other)));
}

TEST_CASE("5-step unrolled head gradients match finite differences") {
    std::mt19937_64 rng(73);
    HeadConfig cfg = small_cfg(2);
    cfg.dropout_rate = 0.0;
    ParamStore ps;
    LtmmHead head(ps, cfg);
    head.init(ps, rng);
    // nudge biases off the zero stationary point
    for (const char* name : {"head.lstm0.bias", "head.lstm1.bias"})
        for (double& v : ps.find(name)->data) v = 0.05;

    std::vector<Tensor> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(Tensor::randn({1, 6}, rng));
    auto labels = std::make_shared<std::vector<int>>(std::vector<int>{1});

    auto run = [&](bool grad) {
        auto c = std::make_unique<Ctx>(ps, grad);
        c->train = false;
        StateVars sv;
        for (std::size_t i = 0; i < cfg.lstm_cells; ++i)
            sv.layers.emplace_back(
                c->tape.input(Tensor({1, cfg.lstm_width}), false),
                c->tape.input(Tensor({1, cfg.lstm_width}), false));
        Var loss{};
        for (int i = 0; i < 5; ++i) {
            Var x = c->tape.input(xs[i], false);
            Var logits = head.forward(*c, x, sv);
            Var l = c->tape.weighted_ce(logits, labels, 0.3, 0.7);
            loss = (i == 0) ? l : c->tape.add(loss, l);
        }
        return std::pair{std::move(c), loss};
    };

    auto eval = [&]() {
        auto [c, loss] = run(true);
        return c->tape.val(loss)[0];
    };
    auto [c, loss] = run(true);
    c->tape.backward(loss);
    for (std::size_t id = 0; id < ps.count(); ++id) {
        Tensor analytic = c->param_grad(id);
        Tensor numeric = numeric_grad(ps.value(id), eval, 1e-5);
        CAPTURE(ps.name(id));
        CHECK(max_rel_error(analytic, numeric, 1e-4) <= 1e-3);
    }
}
