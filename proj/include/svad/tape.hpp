#pragma once

#include <algorithm>
#include <functional>
#include <limits>

#include "svad/tensor.hpp"

namespace svad {

// Reverse-mode autodiff over a flat tape. Nodes are appended in
// topological order during the forward pass; backward() walks them in
// reverse. Gradients are allocated lazily so inference carries no
// grad-buffer cost.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

constexpr std::size_t kZeroRow = std::numeric_limits<std::size_t>::max();

class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched during backward
        bool requires_grad = false;
        std::function<void(Tape&)> backward;
    };

    std::vector<Node> nodes;

    void clear() { nodes.clear(); }
    std::size_t size() const { return nodes.size(); }

    const Tensor& val(Var v) const { return nodes[v.idx].value; }
    Tensor& val_mut(Var v) { return nodes[v.idx].value; }

    Tensor& grad(Var v) {
        Node& n = nodes[v.idx];
        if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
        return n.grad;
    }
    bool has_grad(Var v) const { return !nodes[v.idx].grad.data.empty(); }

    Var input(Tensor t, bool requires_grad = true) {
        Node n;
        n.value = std::move(t);
        n.requires_grad = requires_grad;
        nodes.push_back(std::move(n));
        return Var{static_cast<int>(nodes.size()) - 1};
    }

    void backward(Var loss) {
        check(val(loss).size() == 1, "backward: loss must be scalar");
        grad(loss).data[0] = 1.0;
        for (int i = loss.idx; i >= 0; --i) {
            Node& n = nodes[i];
            if (n.backward && !n.grad.data.empty()) n.backward(*this);
        }
    }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        check(val(a).same_shape(val(b)), "add: shape mismatch");
        Tensor out = val(a);
        const Tensor& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
        return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, const Tensor& g) {
            if (t.nodes[a.idx].requires_grad) {
                Tensor& ga = t.grad(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (t.nodes[b.idx].requires_grad) {
                Tensor& gb = t.grad(b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }

    Var mul(Var a, Var b) {
        check(val(a).same_shape(val(b)), "mul: shape mismatch");
        Tensor out = val(a);
        const Tensor& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
        return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, const Tensor& g) {
            const Tensor& av = t.val(a);
            const Tensor& bv2 = t.val(b);
            if (t.nodes[a.idx].requires_grad) {
                Tensor& ga = t.grad(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
            }
            if (t.nodes[b.idx].requires_grad) {
                Tensor& gb = t.grad(b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        });
    }

    Var scale(Var a, double c) {
        Tensor out = val(a);
        for (double& v : out.data) v *= c;
        return unary(std::move(out), a, [a, c](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
        });
    }

    Var tanh_(Var a) {
        Tensor out = val(a);
        for (double& v : out.data) v = std::tanh(v);
        Var r = unary_pending(std::move(out), a);
        set_backward(r, [a, r](Tape& t, const Tensor& g) {
            const Tensor& y = t.val(r);
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        });
        return r;
    }

    Var sigmoid(Var a) {
        Tensor out = val(a);
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        Var r = unary_pending(std::move(out), a);
        set_backward(r, [a, r](Tape& t, const Tensor& g) {
            const Tensor& y = t.val(r);
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        });
        return r;
    }

    Var gelu(Var a) {
        Tensor out = val(a);
        for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
        return unary(std::move(out), a, [a](Tape& t, const Tensor& g) {
            const Tensor& x = t.val(a);
            Tensor& ga = t.grad(a);
            const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
            const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
            for (std::size_t i = 0; i < g.size(); ++i) {
                double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
                double pdf = inv_sqrt2pi * std::exp(-0.5 * x[i] * x[i]);
                ga[i] += g[i] * (cdf + x[i] * pdf);
            }
        });
    }

    // Inverted dropout; caller supplies the rng so runs stay seeded.
    Var dropout(Var a, double rate, std::mt19937_64& rng) {
        check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
        Tensor out = val(a);
        auto mask = std::make_shared<std::vector<double>>(out.size());
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        double keep = 1.0 - rate;
        for (std::size_t i = 0; i < out.size(); ++i) {
            (*mask)[i] = (dist(rng) < keep) ? 1.0 / keep : 0.0;
            out[i] *= (*mask)[i];
        }
        return unary(std::move(out), a, [a, mask](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
        });
    }

    // ---- shape ----

    Var reshape(Var a, std::vector<std::size_t> new_shape) {
        check(Tensor::numel(new_shape) == val(a).size(), "reshape: numel mismatch");
        Tensor out = val(a);
        out.shape = std::move(new_shape);
        return unary(std::move(out), a, [a](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }

    Var permute(Var a, std::vector<std::size_t> perm) {
        const Tensor& x = val(a);
        check(perm.size() == x.rank(), "permute: rank mismatch");
        std::vector<std::size_t> out_shape(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.shape[perm[i]];
        auto idx = std::make_shared<std::vector<std::size_t>>(x.size());
        // idx maps output flat position -> input flat position
        std::vector<std::size_t> in_strides = strides(x.shape);
        std::vector<std::size_t> coord(perm.size(), 0);
        Tensor out(out_shape);
        for (std::size_t o = 0; o < out.size(); ++o) {
            std::size_t src = 0;
            for (std::size_t d = 0; d < perm.size(); ++d) src += coord[d] * in_strides[perm[d]];
            (*idx)[o] = src;
            out[o] = x[src];
            for (std::size_t d = perm.size(); d-- > 0;) {
                if (++coord[d] < out_shape[d]) break;
                coord[d] = 0;
            }
        }
        return unary(std::move(out), a, [a, idx](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            for (std::size_t o = 0; o < g.size(); ++o) ga[(*idx)[o]] += g[o];
        });
    }

    // Gathers rows of a [N, D] matrix. kZeroRow entries produce zero rows
    // (used for padding); their gradient is dropped.
    Var gather_rows(Var a, std::shared_ptr<const std::vector<std::size_t>> idx) {
        const Tensor& x = val(a);
        check(x.rank() == 2, "gather_rows: expects [N,D]");
        std::size_t d = x.shape[1];
        Tensor out({idx->size(), d});
        for (std::size_t r = 0; r < idx->size(); ++r) {
            std::size_t src = (*idx)[r];
            if (src == kZeroRow) continue;
            std::copy_n(&x.data[src * d], d, &out.data[r * d]);
        }
        return unary(std::move(out), a, [a, idx, d](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            for (std::size_t r = 0; r < idx->size(); ++r) {
                std::size_t src = (*idx)[r];
                if (src == kZeroRow) continue;
                for (std::size_t j = 0; j < d; ++j) ga[src * d + j] += g[r * d + j];
            }
        });
    }

    Var slice_cols(Var a, std::size_t start, std::size_t len) {
        const Tensor& x = val(a);
        check(x.rank() == 2 && start + len <= x.shape[1], "slice_cols: out of range");
        std::size_t n = x.shape[0], d = x.shape[1];
        Tensor out({n, len});
        for (std::size_t r = 0; r < n; ++r)
            std::copy_n(&x.data[r * d + start], len, &out.data[r * len]);
        return unary(std::move(out), a, [a, start, len, d](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            std::size_t n = g.shape[0];
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < len; ++j)
                    ga[r * d + start + j] += g[r * len + j];
        });
    }

    // ---- linear algebra ----

    // x: [.., K] treated as [N, K]; w: [K, M]; out keeps leading dims, last = M.
    Var matmul(Var a, Var b) {
        const Tensor& x = val(a);
        const Tensor& w = val(b);
        check(w.rank() == 2 && x.shape.back() == w.shape[0], "matmul: inner dim mismatch");
        std::size_t k = w.shape[0], m = w.shape[1];
        std::size_t n = x.size() / k;
        std::vector<std::size_t> out_shape(x.shape.begin(), x.shape.end() - 1);
        out_shape.push_back(m);
        Tensor out(out_shape);
        gemm(&x.data[0], &w.data[0], &out.data[0], n, k, m);
        return unary_or_binary(std::move(out), a, b, [a, b, n, k, m](Tape& t, const Tensor& g) {
            const Tensor& x2 = t.val(a);
            const Tensor& w2 = t.val(b);
            if (t.nodes[a.idx].requires_grad) {
                // dx = g · wᵀ
                Tensor& ga = t.grad(a);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        double gv = g[i * m + j];
                        if (gv == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p)
                            ga[i * k + p] += gv * w2[p * m + j];
                    }
            }
            if (t.nodes[b.idx].requires_grad) {
                // dw = xᵀ · g
                Tensor& gb = t.grad(b);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double xv = x2[i * k + p];
                        if (xv == 0.0) continue;
                        for (std::size_t j = 0; j < m; ++j)
                            gb[p * m + j] += xv * g[i * m + j];
                    }
            }
        });
    }

    Var add_bias(Var a, Var b) {
        const Tensor& x = val(a);
        const Tensor& bias = val(b);
        check(bias.rank() == 1 && x.shape.back() == bias.shape[0], "add_bias: dim mismatch");
        std::size_t d = bias.shape[0];
        std::size_t n = x.size() / d;
        Tensor out = x;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bias[j];
        return unary_or_binary(std::move(out), a, b, [a, b, n, d](Tape& t, const Tensor& g) {
            if (t.nodes[a.idx].requires_grad) {
                Tensor& ga = t.grad(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (t.nodes[b.idx].requires_grad) {
                Tensor& gb = t.grad(b);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
            }
        });
    }

    // Batched a [G,N,K] · b [G,K,M] -> [G,N,M].
    Var bmm(Var a, Var b) {
        const Tensor& x = val(a);
        const Tensor& y = val(b);
        check(x.rank() == 3 && y.rank() == 3 && x.shape[0] == y.shape[0] &&
                  x.shape[2] == y.shape[1],
              "bmm: shape mismatch");
        std::size_t gN = x.shape[0], n = x.shape[1], k = x.shape[2], m = y.shape[2];
        Tensor out({gN, n, m});
        for (std::size_t bi = 0; bi < gN; ++bi)
            gemm(&x.data[bi * n * k], &y.data[bi * k * m], &out.data[bi * n * m], n, k, m);
        return unary_or_binary(std::move(out), a, b,
                               [a, b, gN, n, k, m](Tape& t, const Tensor& g) {
            const Tensor& x2 = t.val(a);
            const Tensor& y2 = t.val(b);
            if (t.nodes[a.idx].requires_grad) {
                Tensor& ga = t.grad(a);
                for (std::size_t bi = 0; bi < gN; ++bi)
                    gemm_nt(&g.data[bi * n * m], &y2.data[bi * k * m],
                            &ga.data[bi * n * k], n, m, k);
            }
            if (t.nodes[b.idx].requires_grad) {
                Tensor& gb = t.grad(b);
                for (std::size_t bi = 0; bi < gN; ++bi)
                    gemm_tn(&x2.data[bi * n * k], &g.data[bi * n * m],
                            &gb.data[bi * k * m], n, k, m);
            }
        });
    }

    // Batched a [G,N,K] · bᵀ where b is [G,M,K] -> [G,N,M]. Used for q·kᵀ.
    Var bmm_nt(Var a, Var b) {
        const Tensor& x = val(a);
        const Tensor& y = val(b);
        check(x.rank() == 3 && y.rank() == 3 && x.shape[0] == y.shape[0] &&
                  x.shape[2] == y.shape[2],
              "bmm_nt: shape mismatch");
        std::size_t gN = x.shape[0], n = x.shape[1], k = x.shape[2], m = y.shape[1];
        Tensor out({gN, n, m});
        for (std::size_t bi = 0; bi < gN; ++bi)
            gemm_nt(&x.data[bi * n * k], &y.data[bi * m * k], &out.data[bi * n * m], n, k, m);
        return unary_or_binary(std::move(out), a, b,
                               [a, b, gN, n, k, m](Tape& t, const Tensor& g) {
            const Tensor& x2 = t.val(a);
            const Tensor& y2 = t.val(b);
            if (t.nodes[a.idx].requires_grad) {
                Tensor& ga = t.grad(a);
                for (std::size_t bi = 0; bi < gN; ++bi)
                    gemm(&g.data[bi * n * m], &y2.data[bi * m * k],
                         &ga.data[bi * n * k], n, m, k);
            }
            if (t.nodes[b.idx].requires_grad) {
                Tensor& gb = t.grad(b);
                for (std::size_t bi = 0; bi < gN; ++bi)
                    gemm_tn(&g.data[bi * n * m], &x2.data[bi * n * k],
                            &gb.data[bi * m * k], n, m, k);
            }
        });
    }

    // ---- normalization / softmax / reductions ----

    Var layernorm(Var a, Var gamma, Var beta, double eps = 1e-5) {
        const Tensor& x = val(a);
        std::size_t d = val(gamma).shape[0];
        check(x.shape.back() == d && val(beta).shape[0] == d, "layernorm: dim mismatch");
        std::size_t n = x.size() / d;
        auto xhat = std::make_shared<Tensor>(x.shape);
        auto inv_std = std::make_shared<std::vector<double>>(n);
        Tensor out(x.shape);
        const Tensor& gm = val(gamma);
        const Tensor& bt = val(beta);
        for (std::size_t r = 0; r < n; ++r) {
            const double* row = &x.data[r * d];
            double mean = 0.0;
            for (std::size_t j = 0; j < d; ++j) mean += row[j];
            mean /= static_cast<double>(d);
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= static_cast<double>(d);
            double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[r] = is;
            for (std::size_t j = 0; j < d; ++j) {
                double xh = (row[j] - mean) * is;
                (*xhat)[r * d + j] = xh;
                out[r * d + j] = xh * gm[j] + bt[j];
            }
        }
        Var r = push(std::move(out),
                     nodes[a.idx].requires_grad || nodes[gamma.idx].requires_grad ||
                         nodes[beta.idx].requires_grad);
        set_backward(r, [a, gamma, beta, xhat, inv_std, n, d](Tape& t, const Tensor& g) {
            const Tensor& gm2 = t.val(gamma);
            if (t.nodes[gamma.idx].requires_grad) {
                Tensor& gg = t.grad(gamma);
                for (std::size_t r2 = 0; r2 < n; ++r2)
                    for (std::size_t j = 0; j < d; ++j)
                        gg[j] += g[r2 * d + j] * (*xhat)[r2 * d + j];
            }
            if (t.nodes[beta.idx].requires_grad) {
                Tensor& gb = t.grad(beta);
                for (std::size_t r2 = 0; r2 < n; ++r2)
                    for (std::size_t j = 0; j < d; ++j) gb[j] += g[r2 * d + j];
            }
            if (t.nodes[a.idx].requires_grad) {
                Tensor& ga = t.grad(a);
                for (std::size_t r2 = 0; r2 < n; ++r2) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        double gy = g[r2 * d + j] * gm2[j];
                        m1 += gy;
                        m2 += gy * (*xhat)[r2 * d + j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        double gy = g[r2 * d + j] * gm2[j];
                        ga[r2 * d + j] +=
                            (gy - m1 - (*xhat)[r2 * d + j] * m2) * (*inv_std)[r2];
                    }
                }
            }
        });
        return r;
    }

    Var softmax_lastdim(Var a) {
        const Tensor& x = val(a);
        std::size_t d = x.shape.back();
        std::size_t n = x.size() / d;
        Tensor out(x.shape);
        for (std::size_t r = 0; r < n; ++r) {
            const double* row = &x.data[r * d];
            double mx = row[0];
            for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                out[r * d + j] = std::exp(row[j] - mx);
                sum += out[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= sum;
        }
        Var r = unary_pending(std::move(out), a);
        set_backward(r, [a, r, n, d](Tape& t, const Tensor& g) {
            const Tensor& y = t.val(r);
            Tensor& ga = t.grad(a);
            for (std::size_t r2 = 0; r2 < n; ++r2) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += g[r2 * d + j] * y[r2 * d + j];
                for (std::size_t j = 0; j < d; ++j)
                    ga[r2 * d + j] += y[r2 * d + j] * (g[r2 * d + j] - dot);
            }
        });
        return r;
    }

    // Mean over rows of [N, D] -> [D].
    Var mean_rows(Var a) {
        const Tensor& x = val(a);
        check(x.rank() == 2, "mean_rows: expects [N,D]");
        std::size_t n = x.shape[0], d = x.shape[1];
        Tensor out({d});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) out[j] += x[r * d + j];
        for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
        return unary(std::move(out), a, [a, n, d](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            double inv = 1.0 / static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += g[j] * inv;
        });
    }

    Var sum_all(Var a) {
        const Tensor& x = val(a);
        Tensor out({1});
        for (double v : x.data) out[0] += v;
        return unary(std::move(out), a, [a](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            for (double& v : ga.data) v += g[0];
        });
    }

    // ---- attention helpers ----

    // attn [W*H, S, S] += mask[w, i, j] where w = batch / heads. Mask is constant.
    Var add_window_mask(Var a, std::shared_ptr<const Tensor> mask, std::size_t heads) {
        const Tensor& x = val(a);
        check(x.rank() == 3 && mask->rank() == 3 && x.shape[0] == mask->shape[0] * heads &&
                  x.shape[1] == mask->shape[1] && x.shape[2] == mask->shape[2],
              "add_window_mask: shape mismatch");
        std::size_t s2 = x.shape[1] * x.shape[2];
        Tensor out = x;
        for (std::size_t b = 0; b < x.shape[0]; ++b) {
            const double* m = &mask->data[(b / heads) * s2];
            for (std::size_t i = 0; i < s2; ++i) out[b * s2 + i] += m[i];
        }
        return unary(std::move(out), a, [a](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }

    // attn [W*H, S, S] += table[idx[i*S+j], b % heads]. Relative position bias.
    Var add_relpos_bias(Var a, Var table,
                        std::shared_ptr<const std::vector<std::size_t>> idx,
                        std::size_t heads) {
        const Tensor& x = val(a);
        const Tensor& tb = val(table);
        std::size_t s2 = x.shape[1] * x.shape[2];
        check(x.rank() == 3 && tb.rank() == 2 && tb.shape[1] == heads && idx->size() == s2,
              "add_relpos_bias: shape mismatch");
        Tensor out = x;
        for (std::size_t b = 0; b < x.shape[0]; ++b) {
            std::size_t h = b % heads;
            for (std::size_t i = 0; i < s2; ++i)
                out[b * s2 + i] += tb[(*idx)[i] * heads + h];
        }
        return unary_or_binary(std::move(out), a, table,
                               [a, table, idx, heads, s2](Tape& t, const Tensor& g) {
            if (t.nodes[a.idx].requires_grad) {
                Tensor& ga = t.grad(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (t.nodes[table.idx].requires_grad) {
                Tensor& gt = t.grad(table);
                std::size_t bn = g.shape[0];
                for (std::size_t b = 0; b < bn; ++b) {
                    std::size_t h = b % heads;
                    for (std::size_t i = 0; i < s2; ++i)
                        gt[(*idx)[i] * heads + h] += g[b * s2 + i];
                }
            }
        });
    }

    // ---- losses ----

    // Mean over rows of w[label] * (-log softmax(logits)[label]). 2-class.
    Var weighted_ce(Var logits, std::shared_ptr<const std::vector<int>> labels,
                    double w_normal, double w_anomaly) {
        const Tensor& x = val(logits);
        check(x.rank() == 2 && x.shape[1] == 2 && labels->size() == x.shape[0],
              "weighted_ce: expects [N,2] logits");
        std::size_t n = x.shape[0];
        auto probs = std::make_shared<Tensor>(x.shape);
        Tensor out({1});
        for (std::size_t r = 0; r < n; ++r) {
            double a0 = x[r * 2], a1 = x[r * 2 + 1];
            double mx = std::max(a0, a1);
            double e0 = std::exp(a0 - mx), e1 = std::exp(a1 - mx);
            double z = e0 + e1;
            (*probs)[r * 2] = e0 / z;
            (*probs)[r * 2 + 1] = e1 / z;
            int y = (*labels)[r];
            double w = (y == 0) ? w_normal : w_anomaly;
            out[0] += -w * std::log((*probs)[r * 2 + y]);
        }
        out[0] /= static_cast<double>(n);
        return unary(std::move(out), logits,
                     [logits, labels, probs, n, w_normal, w_anomaly](Tape& t,
                                                                     const Tensor& g) {
            Tensor& gl = t.grad(logits);
            double scale = g[0] / static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r) {
                int y = (*labels)[r];
                double w = (y == 0) ? w_normal : w_anomaly;
                for (int c = 0; c < 2; ++c) {
                    double onehot = (c == y) ? 1.0 : 0.0;
                    gl[r * 2 + c] += scale * w * ((*probs)[r * 2 + c] - onehot);
                }
            }
        });
    }

private:
    static std::vector<std::size_t> strides(const std::vector<std::size_t>& shape) {
        std::vector<std::size_t> s(shape.size(), 1);
        for (std::size_t i = shape.size() - 1; i-- > 0;) s[i] = s[i + 1] * shape[i + 1];
        return s;
    }

    // C[n,m] += A[n,k] · B[k,m]  (C zero-initialized by caller for forward)
    static void gemm(const double* a, const double* b, double* c, std::size_t n,
                     std::size_t k, std::size_t m) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double av = a[i * k + p];
                if (av == 0.0) continue;
                const double* brow = &b[p * m];
                double* crow = &c[i * m];
                for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
            }
    }
    // C[n,m] += A[n,k] · B[m,k]ᵀ
    static void gemm_nt(const double* a, const double* b, double* c, std::size_t n,
                        std::size_t k, std::size_t m) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
                c[i * m + j] += acc;
            }
    }
    // C[k,m] += A[n,k]ᵀ · B[n,m]
    static void gemm_tn(const double* a, const double* b, double* c, std::size_t n,
                        std::size_t k, std::size_t m) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double av = a[i * k + p];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < m; ++j) c[p * m + j] += av * b[i * m + j];
            }
    }

    Var push(Tensor value, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        nodes.push_back(std::move(n));
        return Var{static_cast<int>(nodes.size()) - 1};
    }

    void set_backward(Var r, std::function<void(Tape&, const Tensor&)> fn) {
        if (!nodes[r.idx].requires_grad) return;
        nodes[r.idx].backward = [r, fn = std::move(fn)](Tape& t) {
            fn(t, t.nodes[r.idx].grad);
        };
    }

    Var unary_pending(Tensor out, Var a) { return push(std::move(out), nodes[a.idx].requires_grad); }

    Var unary(Tensor out, Var a, std::function<void(Tape&, const Tensor&)> fn) {
        Var r = push(std::move(out), nodes[a.idx].requires_grad);
        set_backward(r, std::move(fn));
        return r;
    }

    Var unary_or_binary(Tensor out, Var a, Var b,
                        std::function<void(Tape&, const Tensor&)> fn) {
        Var r = push(std::move(out),
                     nodes[a.idx].requires_grad || nodes[b.idx].requires_grad);
        set_backward(r, std::move(fn));
        return r;
    }
};

}  // namespace svad
