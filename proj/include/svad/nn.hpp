#pragma once

#include <memory>
#include <string>
#include <unordered_map>

#include "svad/tape.hpp"

namespace svad {

// Named persistent parameters. Modules register tensors here at
// construction; forward passes mirror them onto a tape as leaf nodes.
class ParamStore {
public:
    std::size_t add(const std::string& name, std::vector<std::size_t> shape) {
        check(index_.find(name) == index_.end(), "duplicate parameter: " + name);
        index_[name] = names_.size();
        names_.push_back(name);
        values_.emplace_back(std::move(shape));
        return names_.size() - 1;
    }

    std::size_t count() const { return names_.size(); }
    const std::string& name(std::size_t id) const { return names_[id]; }
    Tensor& value(std::size_t id) { return values_[id]; }
    const Tensor& value(std::size_t id) const { return values_[id]; }

    Tensor* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &values_[it->second];
    }

    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Per-forward context: one tape, leaf vars for touched parameters,
// train-mode flag and the rng that drives dropout.
struct Ctx {
    Tape tape;
    ParamStore* params = nullptr;
    bool train = false;      // enables dropout
    bool with_grad = false;  // parameters become differentiable leaves
    std::mt19937_64* rng = nullptr;

    explicit Ctx(ParamStore& ps, bool train_mode = false, std::mt19937_64* r = nullptr)
        : params(&ps), train(train_mode), with_grad(train_mode), rng(r),
          leaves_(ps.count(), Var{}) {}

    Var p(std::size_t id) {
        if (id >= leaves_.size()) leaves_.resize(params->count(), Var{});
        if (!leaves_[id].valid()) leaves_[id] = tape.input(params->value(id), with_grad);
        return leaves_[id];
    }

    // Gradient of a parameter after backward(); zero tensor if untouched.
    Tensor param_grad(std::size_t id) {
        if (id < leaves_.size() && leaves_[id].valid() && tape.has_grad(leaves_[id]))
            return tape.grad(leaves_[id]);
        return Tensor(params->value(id).shape);
    }

private:
    std::vector<Var> leaves_;
};

// ---- initialization ----

inline void init_uniform_fanin(Tensor& w, std::size_t fan_in, std::mt19937_64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.data) v = dist(rng);
}

// Semi-orthogonal [m,n]: orthonormal columns when m >= n, orthonormal rows
// otherwise. Modified Gram-Schmidt on a Gaussian draw.
inline void init_semi_orthogonal(Tensor& w, std::mt19937_64& rng) {
    check(w.rank() == 2, "init_semi_orthogonal: expects matrix");
    std::size_t m = w.shape[0], n = w.shape[1];
    bool transpose = m < n;
    std::size_t rows = transpose ? n : m, cols = transpose ? m : n;
    std::vector<std::vector<double>> q(cols, std::vector<double>(rows));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& col : q)
        for (double& v : col) v = dist(rng);
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t p = 0; p < j; ++p) {
            double dot = 0.0;
            for (std::size_t i = 0; i < rows; ++i) dot += q[j][i] * q[p][i];
            for (std::size_t i = 0; i < rows; ++i) q[j][i] -= dot * q[p][i];
        }
        double norm = 0.0;
        for (double v : q[j]) norm += v * v;
        norm = std::sqrt(norm);
        check(norm > 1e-12, "init_semi_orthogonal: degenerate draw");
        for (double& v : q[j]) v /= norm;
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            w[i * n + j] = transpose ? q[i][j] : q[j][i];
}

// ---- layers ----

struct Linear {
    std::size_t w = 0, b = 0;
    std::size_t in_dim = 0, out_dim = 0;

    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out)
        : in_dim(in), out_dim(out) {
        w = ps.add(prefix + ".weight", {in, out});
        b = ps.add(prefix + ".bias", {out});
    }

    void init(ParamStore& ps, std::mt19937_64& rng) const {
        init_uniform_fanin(ps.value(w), in_dim, rng);
        for (double& v : ps.value(b).data) v = 0.0;
    }

    Var forward(Ctx& c, Var x) const {
        return c.tape.add_bias(c.tape.matmul(x, c.p(w)), c.p(b));
    }
};

struct LayerNorm {
    std::size_t gamma = 0, beta = 0;
    std::size_t dim = 0;

    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& prefix, std::size_t d) : dim(d) {
        gamma = ps.add(prefix + ".gamma", {d});
        beta = ps.add(prefix + ".beta", {d});
    }

    void init(ParamStore& ps) const {
        for (double& v : ps.value(gamma).data) v = 1.0;
        for (double& v : ps.value(beta).data) v = 0.0;
    }

    Var forward(Ctx& c, Var x) const {
        return c.tape.layernorm(x, c.p(gamma), c.p(beta));
    }
};

// One LSTM cell; gate order i, f, g, o in the fused weight matrices.
struct LstmCell {
    std::size_t w_ih = 0, w_hh = 0, b = 0;
    std::size_t in_dim = 0, hidden = 0;

    LstmCell() = default;
    LstmCell(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t h)
        : in_dim(in), hidden(h) {
        w_ih = ps.add(prefix + ".w_ih", {in, 4 * h});
        w_hh = ps.add(prefix + ".w_hh", {h, 4 * h});
        b = ps.add(prefix + ".bias", {4 * h});
    }

    void init(ParamStore& ps, std::mt19937_64& rng) const {
        init_semi_orthogonal(ps.value(w_ih), rng);
        init_semi_orthogonal(ps.value(w_hh), rng);
        for (double& v : ps.value(b).data) v = 0.0;
    }

    // x [B,in], h/c [B,hidden] -> (h', c')
    std::pair<Var, Var> step(Ctx& c, Var x, Var h, Var cell) const {
        Tape& t = c.tape;
        Var gates = t.add_bias(t.add(t.matmul(x, c.p(w_ih)), t.matmul(h, c.p(w_hh))),
                               c.p(b));
        Var i = t.sigmoid(t.slice_cols(gates, 0, hidden));
        Var f = t.sigmoid(t.slice_cols(gates, hidden, hidden));
        Var g = t.tanh_(t.slice_cols(gates, 2 * hidden, hidden));
        Var o = t.sigmoid(t.slice_cols(gates, 3 * hidden, hidden));
        Var c_new = t.add(t.mul(f, cell), t.mul(i, g));
        Var h_new = t.mul(o, t.tanh_(c_new));
        return {h_new, c_new};
    }
};

}  // namespace svad
