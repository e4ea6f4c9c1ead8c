#pragma once

// Label-conditioned generation: iterative mask-predict decoding where each
// proposal is accepted with probability min(1, p(y* | x̂) / τ).

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "lmcal/corpus.hpp"
#include "lmcal/encoder.hpp"

namespace lmcal {

struct SamplerConfig {
    std::size_t iterations = 10; // T
    std::size_t length = 8;      // N
    double tau = 1.0;
    std::size_t max_retries = 100;
    /// Proposals are drawn from p_mlm^(1/temperature); small values approach argmax.
    double proposal_temperature = 1.0;
    int target_label = 0;

    void validate() const;
    bool operator==(const SamplerConfig&) const = default;
};

/// Number of positions re-masked after iteration t: floor(N (T-1-t) / T).
std::size_t mask_schedule(std::size_t n, std::size_t iterations, std::size_t t);

/// Read-only model view used by the sampler.
class SamplerModel {
public:
    virtual ~SamplerModel() = default;
    virtual std::size_t vocab_size() const = 0;
    virtual std::size_t num_classes() const = 0;
    /// Rows of vocabulary probabilities for body positions [0, N) of `body`.
    virtual Matrix mlm_probs(std::span<const TokenId> body) const = 0;
    virtual std::vector<double> class_probs(std::span<const TokenId> body) const = 0;
};

class EncoderSamplerModel final : public SamplerModel {
public:
    explicit EncoderSamplerModel(const ParameterStore& params) : params_(params) {}
    std::size_t vocab_size() const override { return params_.config().vocab_size; }
    std::size_t num_classes() const override { return params_.config().num_classes; }
    Matrix mlm_probs(std::span<const TokenId> body) const override;
    std::vector<double> class_probs(std::span<const TokenId> body) const override;

private:
    const ParameterStore& params_;
};

class SamplingFailure : public std::runtime_error {
public:
    SamplingFailure(std::size_t iteration, std::size_t attempts);
    std::size_t iteration() const { return iteration_; }
    std::size_t attempts() const { return attempts_; }

private:
    std::size_t iteration_;
    std::size_t attempts_;
};

struct SampleResult {
    TokenSequence sequence;            // CLS body SEP
    std::vector<std::size_t> attempts; // proposals drawn per iteration (accepted one included)
    std::vector<std::size_t> masked_after; // MASK count left after each iteration
    double confidence = 0.0;           // p(y* | output)
};

SampleResult mask_predict_sample(const SamplerModel& model, const SamplerConfig& config, std::uint64_t seed);

} // namespace lmcal
