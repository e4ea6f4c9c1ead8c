#include <cmath>
#include <random>

#include "lmcal/error.hpp"
#include "lmcal/rng.hpp"
#include "lmcal/tuning.hpp"

namespace lmcal {

namespace {

Tensor normal(std::vector<std::size_t> shape, double stddev, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

void require_unattached(const ParameterStore& params) {
    require(!params.attachments().any(), "a parameter-efficient attachment is already present");
}

bool is_classifier(std::string_view name) { return name.starts_with("cls."); }

} // namespace

void freeze_base(ParameterStore& params) {
    for (const auto& name : params.names()) params.set_trainable(name, is_classifier(name));
}

ParameterStore attach_adapter(ParameterStore params, std::size_t bottleneck_dim, std::uint64_t seed) {
    require_unattached(params);
    const auto& c = params.config();
    require(bottleneck_dim >= 1 && bottleneck_dim < c.d_model, "adapter bottleneck must lie in [1, d_model)");
    freeze_base(params);
    for (std::size_t l = 0; l < c.num_layers; ++l)
        for (const char* site : {"adapter_attn", "adapter_ffn"}) {
            const std::string base = layer_name(l, site);
            params.add(base + ".down", normal({c.d_model, bottleneck_dim}, 0.02, derive_seed(seed, base + ".down")));
            params.add(base + ".down_bias", Tensor({bottleneck_dim}));
            params.add(base + ".up", Tensor({bottleneck_dim, c.d_model}));
            params.add(base + ".up_bias", Tensor({c.d_model}));
        }
    params.attachments().adapter_dim = bottleneck_dim;
    return params;
}

ParameterStore attach_lora(ParameterStore params, std::size_t rank, double scaling_alpha, std::uint64_t seed) {
    require_unattached(params);
    const auto& c = params.config();
    require(rank >= 1, "LoRA rank must be >= 1");
    require(rank <= c.d_model, "LoRA rank exceeds min(d_in, d_out)");
    require(scaling_alpha > 0.0, "LoRA alpha must be positive");
    freeze_base(params);
    // A uniform in ±1/sqrt(d); B = 0 so the update starts at zero.
    const double bound = 1.0 / std::sqrt(static_cast<double>(c.d_model));
    for (std::size_t l = 0; l < c.num_layers; ++l)
        for (const char* which : {"lora_q", "lora_v"}) {
            const std::string base = layer_name(l, which);
            Tensor a({c.d_model, rank});
            Rng rng(derive_seed(seed, base + ".a"));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (auto& v : a.data) v = dist(rng);
            params.add(base + ".a", std::move(a));
            params.add(base + ".b", Tensor({rank, c.d_model}));
        }
    params.attachments().lora_rank = rank;
    params.attachments().lora_alpha = scaling_alpha;
    return params;
}

ParameterStore attach_prefix(ParameterStore params, std::size_t prefix_len, std::uint64_t seed) {
    require_unattached(params);
    const auto& c = params.config();
    require(prefix_len + c.max_len <= c.attention_capacity(), "prefix_len + max_len exceeds attention capacity");
    freeze_base(params);
    if (prefix_len > 0)
        for (std::size_t l = 0; l < c.num_layers; ++l)
            for (const char* kind : {"prefix.key", "prefix.value"}) {
                const std::string name = layer_name(l, kind);
                params.add(name, normal({prefix_len, c.d_model}, 0.02, derive_seed(seed, name)));
            }
    params.attachments().prefix = true;
    params.attachments().prefix_len = prefix_len;
    return params;
}

ParameterStore merge_lora(const ParameterStore& params) {
    const auto& att = params.attachments();
    require(att.lora_rank > 0, "no LoRA attachment to merge");
    ParameterStore out = params;
    const auto& c = params.config();
    const std::size_t d = c.d_model, r = att.lora_rank;
    const double s = att.lora_scale();
    for (std::size_t l = 0; l < c.num_layers; ++l)
        for (char which : {'q', 'v'}) {
            const std::string base = layer_name(l, std::string("lora_") + which);
            const Tensor& a = params.at(base + ".a");
            const Tensor& b = params.at(base + ".b");
            Tensor& w = out.at(layer_name(l, std::string("attn.w") + which));
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < r; ++k) acc += a.data[i * r + k] * b.data[k * d + j];
                    w.data[i * d + j] += s * acc;
                }
            out.erase(base + ".a");
            out.erase(base + ".b");
        }
    out.attachments().lora_rank = 0;
    out.attachments().lora_alpha = 0.0;
    return out;
}

// ---------------------------------------------------------------- Mixout

bool mixout_target(std::string_view name) {
    if (!name.starts_with("layer")) return false;
    for (std::string_view suffix : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo", ".ffn.w1", ".ffn.w2"})
        if (name.ends_with(suffix)) return true;
    return false;
}

MixoutDraw mixout_apply(const ParameterStore& params, const ParameterStore& snapshot, double p, std::uint64_t seed,
                        bool compensate) {
    require(p >= 0.0 && p < 1.0, "p_mixout must lie in [0, 1)");
    MixoutDraw draw{params, {}, p, compensate};
    if (p == 0.0) return draw;
    for (const auto& [name, entry] : params.arrays()) {
        if (!mixout_target(name) || !entry.trainable) continue;
        const Tensor& w0 = snapshot.at(name);
        require(w0.shape == entry.value.shape, "snapshot shape mismatch for " + name);
        Tensor& eff = draw.effective.at(name);
        auto& mask = draw.masks[name];
        mask.resize(eff.size());
        Rng rng(derive_seed(seed, "mixout:" + name));
        for (std::size_t i = 0; i < eff.size(); ++i) {
            mask[i] = bernoulli(rng, p) ? 1 : 0;
            const double w = entry.value.data[i], base = w0.data[i];
            const double mixed = mask[i] ? base : w;
            eff.data[i] = compensate ? (mixed - p * base) / (1.0 - p) : mixed;
        }
    }
    return draw;
}

void mixout_backward(const MixoutDraw& draw, Gradients& grads) {
    if (draw.p == 0.0) return;
    const double keep_scale = draw.compensate ? 1.0 / (1.0 - draw.p) : 1.0;
    for (auto& [name, g] : grads.all()) {
        auto it = draw.masks.find(name);
        if (it == draw.masks.end()) continue;
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= it->second[i] ? 0.0 : keep_scale;
    }
}

} // namespace lmcal
