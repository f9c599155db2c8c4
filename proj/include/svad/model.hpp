#pragma once

#include <cstring>

#include "svad/head.hpp"
#include "svad/stmm.hpp"

namespace svad {

// Full model: backbone + head sharing one parameter store.
class Model {
public:
    ModelConfig cfg;
    ParamStore params;

    explicit Model(const ModelConfig& config)
        : cfg(config), backbone_(make_backbone(config)), head_(make_head(config)) {}

    const Stmm& backbone() const { return *backbone_; }
    const LtmmHead& head() const { return *head_; }

    void init(std::mt19937_64& rng) {
        backbone_->init(params, rng);
        head_->init(params, rng);
    }

    // One frame step without gradients: preprocessed clip + state -> (score, state).
    std::pair<double, RecurrentState> score_clip(const Tensor& clip,
                                                 const RecurrentState& state) {
        Ctx c(params, false);
        TokenGrid g = backbone_->forward(c, clip);
        Var feat = c.tape.reshape(backbone_->reduce(c, g), {1, cfg.head.input_dim});
        StateVars sv = head_->state_to_vars(c, state);
        Var logits = head_->forward(c, feat, sv);
        double s = score_from_logits(c.tape.val(logits))[0];
        return {s, head_->vars_to_state(c, sv)};
    }

private:
    std::unique_ptr<Stmm> backbone_;
    std::unique_ptr<LtmmHead> head_;

    std::unique_ptr<Stmm> make_backbone(const ModelConfig& config) {
        config.validate();
        return std::make_unique<Stmm>(params, config.stmm);
    }
    std::unique_ptr<LtmmHead> make_head(const ModelConfig& config) {
        return std::make_unique<LtmmHead>(params, config.head);
    }
};

// ---- checkpoint format ----
//
// Binary layout: magic "SVADCKPT", u32 version, u64 config-json length,
// config json bytes, u64 tensor count, then per tensor: u64 name length,
// name, u64 rank, u64 dims..., raw little-endian doubles. Optionally one
// trailing "optimizer" section with the same tensor framing.

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    check(in.good(), "checkpoint: truncated file");
    return v;
}

inline void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, t.rank());
    for (std::size_t d : t.shape) write_u64(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

inline std::pair<std::string, Tensor> read_tensor(std::istream& in) {
    std::string name(read_u64(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<std::size_t> shape(read_u64(in));
    for (std::size_t& d : shape) d = read_u64(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    check(in.good(), "checkpoint: truncated tensor data");
    return {std::move(name), std::move(t)};
}

}  // namespace detail

constexpr char kCkptMagic[8] = {'S', 'V', 'A', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

inline void save_checkpoint(Model& model, const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>* optimizer =
                                nullptr) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot open checkpoint for write: " + path);
    out.write(kCkptMagic, 8);
    out.write(reinterpret_cast<const char*>(&kCkptVersion), sizeof(kCkptVersion));
    std::string cfg_json = json(model.cfg).dump();
    detail::write_u64(out, cfg_json.size());
    out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
    detail::write_u64(out, model.params.count());
    for (std::size_t i = 0; i < model.params.count(); ++i)
        detail::write_tensor(out, model.params.name(i), model.params.value(i));
    detail::write_u64(out, optimizer ? optimizer->size() : 0);
    if (optimizer)
        for (const auto& [name, t] : *optimizer) detail::write_tensor(out, name, t);
    check(out.good(), "checkpoint write failed: " + path);
}

struct Checkpoint {
    std::unique_ptr<Model> model;
    std::vector<std::pair<std::string, Tensor>> optimizer;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    check(in.good() && std::memcmp(magic, kCkptMagic, 8) == 0,
          "not a checkpoint file: " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    check(version == kCkptVersion,
          "unsupported checkpoint version " + std::to_string(version));
    std::string cfg_json(detail::read_u64(in), '\0');
    in.read(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
    ModelConfig cfg = json::parse(cfg_json).get<ModelConfig>();
    Checkpoint ck;
    ck.model = std::make_unique<Model>(cfg);
    std::uint64_t n = detail::read_u64(in);
    check(n == ck.model->params.count(), "checkpoint parameter count mismatch");
    for (std::uint64_t i = 0; i < n; ++i) {
        auto [name, t] = detail::read_tensor(in);
        Tensor* dst = ck.model->params.find(name);
        check(dst != nullptr, "checkpoint has unknown parameter: " + name);
        check(dst->shape == t.shape, "checkpoint shape mismatch for " + name);
        *dst = std::move(t);
    }
    std::uint64_t n_opt = detail::read_u64(in);
    for (std::uint64_t i = 0; i < n_opt; ++i) ck.optimizer.push_back(detail::read_tensor(in));
    return ck;
}

}  // namespace svad
