#pragma once

// Shared fixtures for the unit tests and the acceptance binary: a tiny
// encoder, deterministic batches and a central-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lmcal/corpus.hpp"
#include "lmcal/encoder.hpp"
#include "lmcal/objectives.hpp"
#include "lmcal/rng.hpp"

namespace lmcal::testing {

inline SyntheticTaskSpec tiny_spec() {
    SyntheticTaskSpec s = default_task_spec(3);
    s.min_len = 5;
    s.max_len = 8;
    return s;
}

inline EncoderConfig tiny_config(std::size_t layers = 1, std::size_t d = 16) {
    EncoderConfig c;
    c.num_layers = layers;
    c.num_heads = 2;
    c.d_model = d;
    c.d_ff = 2 * d;
    c.max_len = 12;
    c.vocab_size = build_vocabulary(tiny_spec()).size();
    c.num_classes = 3;
    return c;
}

/// Initialized parameters with every array perturbed, so that no gradient
/// vanishes by symmetry (unit gains, zero biases).
inline ParameterStore noisy_params(const EncoderConfig& c, std::uint64_t seed, double scale = 0.1) {
    ParameterStore p = init_params(c, seed);
    Rng rng(derive_seed(seed, "noise"));
    std::normal_distribution<double> n(0.0, scale);
    for (const auto& name : p.names())
        for (auto& v : p.at(name).data) v += n(rng);
    return p;
}

inline void perturb_all(ParameterStore& p, std::uint64_t seed, double scale) {
    Rng rng(derive_seed(seed, "perturb"));
    std::normal_distribution<double> n(0.0, scale);
    for (const auto& name : p.names())
        for (auto& v : p.at(name).data) v += n(rng);
}

inline std::vector<LabeledExample> tiny_examples(std::size_t n, std::uint64_t seed, Domain d = Domain::InDomain) {
    const auto spec = tiny_spec();
    return generate_labeled(spec, build_vocabulary(spec), n, d, seed);
}

inline std::vector<TokenSequence> tiny_corpus(std::size_t n, std::uint64_t seed, Domain d = Domain::Pretrain) {
    const auto spec = tiny_spec();
    return generate_corpus(spec, build_vocabulary(spec), n, d, seed);
}

inline std::vector<TokenSequence> sequences(const std::vector<LabeledExample>& xs) {
    std::vector<TokenSequence> out;
    for (const auto& x : xs) out.push_back(x.sequence);
    return out;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
    double max_abs_grad = 0.0;
};

/// Compares analytic gradients with central differences on every element of
/// every trainable array. The relative error is |a - n| / max(|a|, |n|, floor)
/// with floor = 1e-6 * max(1, |loss|): central differences carry rounding
/// noise proportional to |loss| / h, which dominates for exactly-zero
/// gradients (e.g. attention key biases).
inline GradCheck check_gradients(ParameterStore params, const std::function<double(const ParameterStore&)>& loss,
                                 const Gradients& analytic, double h = 1e-5) {
    GradCheck out;
    const double floor = 1e-6 * std::max(1.0, std::abs(loss(params)));
    for (const auto& name : params.names()) {
        if (!params.trainable(name)) continue;
        const Tensor* g = analytic.find(name);
        Tensor& w = params.at(name);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w.data[i];
            w.data[i] = orig + h;
            const double up = loss(params);
            w.data[i] = orig - h;
            const double down = loss(params);
            w.data[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = g ? g->data[i] : 0.0;
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            const double rel = std::abs(a - numeric) / denom;
            out.max_abs_grad = std::max(out.max_abs_grad, std::abs(a));
            ++out.checked;
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return out;
}

} // namespace lmcal::testing
