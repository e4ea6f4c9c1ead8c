#include <cmath>

#include "lmcal/error.hpp"
#include "lmcal/tuning.hpp"

namespace lmcal {

double scheduled_lr(double base_lr, std::size_t step, std::size_t total_steps, bool use_scheduler) {
    if (!use_scheduler || total_steps == 0) return base_lr;
    if (step >= total_steps) return 0.0;
    return base_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps);
}

bool pwd_anchored(std::string_view name) { return !name.starts_with("cls."); }

Tensor pwd_anchor_gradient(const Tensor& w, const Tensor& w0, double lambda) {
    require(w.shape == w0.shape, "anchor shape mismatch");
    Tensor g(w.shape);
    for (std::size_t i = 0; i < w.size(); ++i) g.data[i] = lambda * (w.data[i] - w0.data[i]);
    return g;
}

namespace {

// Matrices and embeddings decay; biases and layer-norm vectors do not.
bool decays(const Tensor& t) { return t.shape.size() >= 2; }

} // namespace

void optimizer_step(OptimizerState& state, ParameterStore& params, const Gradients& grads, const MethodConfig& config) {
    const bool pwd = config.method == Method::Pwd;
    require(!pwd || params.has_snapshot(), "pre-trained weight decay requires a pre-trained snapshot");
    const double lr = scheduled_lr(config.lr, state.step, state.total_steps, config.use_scheduler);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, t);

    for (const auto& [name, grad] : grads.all()) {
        if (!params.trainable(name)) continue;
        Tensor& w = params.at(name);
        require<DataError>(grad.shape == w.shape, "gradient shape mismatch for " + name);
        const bool anchored = pwd && pwd_anchored(name) && params.snapshot().contains(name);
        const Tensor* w0 = anchored ? &params.snapshot().at(name) : nullptr;

        auto [mit, m_new] = state.first_moment.try_emplace(name, Tensor(w.shape));
        auto [vit, v_new] = state.second_moment.try_emplace(name, Tensor(w.shape));
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        const bool decay = !anchored && decays(w) && config.weight_decay > 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            double g = grad.data[i];
            if (anchored) g += config.lambda_pwd * (w.data[i] - w0->data[i]);
            m.data[i] = kAdamBeta1 * m.data[i] + (1.0 - kAdamBeta1) * g;
            v.data[i] = kAdamBeta2 * v.data[i] + (1.0 - kAdamBeta2) * g * g;
            const double update = (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + kAdamEps);
            if (decay) w.data[i] -= lr * config.weight_decay * w.data[i];
            w.data[i] -= lr * update;
        }
    }
}

} // namespace lmcal
