#include "lmcal/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "lmcal/error.hpp"
#include "lmcal/rng.hpp"

namespace lmcal {

void SamplerConfig::validate() const {
    require(iterations >= 1, "sampler iterations must be >= 1");
    require(length >= 1, "sampler length must be >= 1");
    require(tau > 0.0, "tau must be positive");
    require(max_retries >= 1, "max_retries must be >= 1");
    require(proposal_temperature > 0.0, "proposal_temperature must be positive");
}

std::size_t mask_schedule(std::size_t n, std::size_t iterations, std::size_t t) {
    require(iterations >= 1, "iterations must be >= 1");
    require(t < iterations, "iteration index out of range");
    return n * (iterations - 1 - t) / iterations;
}

SamplingFailure::SamplingFailure(std::size_t iteration, std::size_t attempts)
    : std::runtime_error("sampling failed at iteration " + std::to_string(iteration) + " after " +
                         std::to_string(attempts) + " rejected proposals"),
      iteration_(iteration), attempts_(attempts) {}

namespace {

TokenBatch single_row(std::span<const TokenId> body) {
    TokenSequence seq;
    seq.ids.reserve(body.size() + 2);
    seq.ids.push_back(special::kCls);
    seq.ids.insert(seq.ids.end(), body.begin(), body.end());
    seq.ids.push_back(special::kSep);
    const TokenSequence one[] = {std::move(seq)};
    return pad_batch(one);
}

} // namespace

Matrix EncoderSamplerModel::mlm_probs(std::span<const TokenId> body) const {
    const HiddenStates hidden = encode(params_, single_row(body));
    std::vector<Position> positions;
    for (std::size_t i = 0; i < body.size(); ++i) positions.push_back({0, i + 1});
    Matrix probs = mlm_logits(params_, hidden, positions);
    for (std::size_t r = 0; r < probs.rows; ++r) softmax(probs.row(r), probs.row(r));
    return probs;
}

std::vector<double> EncoderSamplerModel::class_probs(std::span<const TokenId> body) const {
    const HiddenStates hidden = encode(params_, single_row(body));
    return softmax(cls_logits(params_, hidden).row(0));
}

namespace {

// Draws a non-special token from p^(1/temperature), computed in log space so
// that small temperatures converge to the argmax.
TokenId propose(std::span<const double> probs, double temperature, Rng& rng) {
    const std::size_t v = probs.size();
    std::vector<double> logits(v, -std::numeric_limits<double>::infinity());
    bool any = false;
    for (std::size_t k = special::kCount; k < v; ++k)
        if (probs[k] > 0.0) {
            logits[k] = std::log(probs[k]) / temperature;
            any = true;
        }
    if (!any) {
        std::uniform_int_distribution<std::size_t> uni(special::kCount, v - 1);
        return static_cast<TokenId>(uni(rng));
    }
    const std::vector<double> dist = softmax(logits);
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last = special::kCount;
    for (std::size_t k = special::kCount; k < v; ++k) {
        if (dist[k] <= 0.0) continue;
        last = k;
        acc += dist[k];
        if (u < acc) return static_cast<TokenId>(k);
    }
    return static_cast<TokenId>(last);
}

} // namespace

SampleResult mask_predict_sample(const SamplerModel& model, const SamplerConfig& config, std::uint64_t seed) {
    config.validate();
    require(config.target_label >= 0 && static_cast<std::size_t>(config.target_label) < model.num_classes(),
            "target label out of range");
    require(model.vocab_size() > special::kCount, "vocabulary has no ordinary tokens");
    const std::size_t n = config.length;
    const std::size_t target = static_cast<std::size_t>(config.target_label);

    std::vector<TokenId> x(n, special::kMask);
    std::vector<double> score(n, 0.0);
    SampleResult result;
    Rng rng(derive_seed(seed, "sampler"));

    for (std::size_t t = 0; t < config.iterations; ++t) {
        std::vector<std::size_t> masked;
        for (std::size_t i = 0; i < n; ++i)
            if (x[i] == special::kMask) masked.push_back(i);
        const Matrix probs = model.mlm_probs(x);

        std::vector<TokenId> proposal;
        std::size_t attempts = 0;
        bool accepted = false;
        while (attempts < config.max_retries) {
            ++attempts;
            proposal = x;
            for (std::size_t i : masked) proposal[i] = propose(probs.row(i), config.proposal_temperature, rng);
            const double conf = model.class_probs(proposal)[target];
            const double ratio = std::min(1.0, conf / config.tau);
            if (uniform01(rng) < ratio) {
                accepted = true;
                break;
            }
        }
        if (!accepted) throw SamplingFailure(t, attempts);
        for (std::size_t i : masked) score[i] = probs(i, static_cast<std::size_t>(proposal[i]));
        x = std::move(proposal);
        result.attempts.push_back(attempts);

        // Re-mask the lowest-scoring positions (ties broken by position).
        const std::size_t remask = mask_schedule(n, config.iterations, t);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
        for (std::size_t k = 0; k < remask; ++k) x[order[k]] = special::kMask;
        result.masked_after.push_back(remask);
    }

    result.confidence = model.class_probs(x)[target];
    result.sequence.ids.push_back(special::kCls);
    result.sequence.ids.insert(result.sequence.ids.end(), x.begin(), x.end());
    result.sequence.ids.push_back(special::kSep);
    result.sequence.domain = Domain::InDomain;
    return result;
}

} // namespace lmcal
