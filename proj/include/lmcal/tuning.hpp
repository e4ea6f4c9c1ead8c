#pragma once

// Fine-tuning methods: full fine-tuning, joint MLM learning (JL-D / JL-P),
// parameter-efficient attachments, Mixout, pre-trained weight decay, and the
// AdamW training loops for pre-training and fine-tuning.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmcal/corpus.hpp"
#include "lmcal/encoder.hpp"
#include "lmcal/objectives.hpp"

namespace lmcal {

enum class Method { FullFt, JlD, JlP, Adapter, Lora, Prefix, Mixout, Pwd };

std::string_view method_name(Method m);
/// "FULL_FT", "JL_D", "JL_P", "ADAPTER", "LORA", "PREFIX", "MIXOUT", "PWD".
Method parse_method(std::string_view name);
bool is_joint(Method m);
bool is_peft(Method m);

struct MethodConfig {
    Method method = Method::FullFt;
    double alpha_mlm = 0.0;
    double beta_l2 = 0.0;
    double p_mask = 0.15;
    double sigma_ls = 0.0;
    double lambda_pwd = 0.0;
    double p_mixout = 0.0;
    bool use_kd = false;
    bool rep_penalty_squared = false;
    bool mixout_compensate = true;
    std::size_t adapter_dim = 8;
    std::size_t lora_rank = 4;
    double lora_alpha = 8.0;
    std::size_t prefix_len = 6;
    double lr = 1e-3;
    double weight_decay = 0.1;
    bool use_scheduler = true;
    std::size_t batch_size = 32;
    std::size_t epochs = 3;
    std::uint64_t seed = 0;
    std::size_t mlm_batch_size = 32;
    std::size_t mlm_max_len = 32;

    /// Rejects settings that belong to a different method (e.g. p_mixout with LORA).
    void validate() const;
    bool operator==(const MethodConfig&) const = default;
};

// ------------------------------------------------------------------ PEFT

/// Bottleneck adapters after each attention and feed-forward sub-layer;
/// zero-initialized up-projection; base arrays frozen.
ParameterStore attach_adapter(ParameterStore params, std::size_t bottleneck_dim, std::uint64_t seed);
/// Low-rank updates W + (alpha/rank)·A·B on query and value projections; B = 0 at init.
ParameterStore attach_lora(ParameterStore params, std::size_t rank, double scaling_alpha, std::uint64_t seed);
/// `prefix_len` learned key/value vectors per layer prepended inside attention.
ParameterStore attach_prefix(ParameterStore params, std::size_t prefix_len, std::uint64_t seed);
/// Folds LoRA updates into the base projections and drops the LoRA arrays.
ParameterStore merge_lora(const ParameterStore& params);
/// Freezes every encoder and MLM-head array; the classifier stays trainable.
void freeze_base(ParameterStore& params);

// ---------------------------------------------------------------- Mixout

bool mixout_target(std::string_view name);

struct MixoutDraw {
    ParameterStore effective;
    std::map<std::string, std::vector<std::uint8_t>, std::less<>> masks; // 1 = replaced by w0
    double p = 0.0;
    bool compensate = true;
};

/// Per-element m ~ Bernoulli(p) on encoder weight matrices;
/// effective = (m⊙w0 + (1-m)⊙w - p·w0)/(1-p) when compensated,
/// m⊙w0 + (1-m)⊙w otherwise.
MixoutDraw mixout_apply(const ParameterStore& params, const ParameterStore& snapshot, double p, std::uint64_t seed,
                        bool compensate = true);
/// Converts gradients w.r.t. the effective weights into gradients w.r.t. w.
void mixout_backward(const MixoutDraw& draw, Gradients& grads);

// ------------------------------------------------------------- Optimizer

struct OptimizerState {
    std::map<std::string, Tensor, std::less<>> first_moment;
    std::map<std::string, Tensor, std::less<>> second_moment;
    std::size_t step = 0;
    std::size_t total_steps = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Linear decay from base_lr at step 0 to 0 at step total (constant when disabled).
double scheduled_lr(double base_lr, std::size_t step, std::size_t total_steps, bool use_scheduler = true);

/// Arrays pulled toward w0 under PWD: encoder and MLM head, not the new classifier.
bool pwd_anchored(std::string_view name);
/// Gradient of (λ/2)‖w − w0‖², i.e. λ·(w − w0).
Tensor pwd_anchor_gradient(const Tensor& w, const Tensor& w0, double lambda);

/// One decoupled-weight-decay Adam update of every trainable array that has a
/// gradient. Under PWD the anchored arrays get λ(w − w0) added to their
/// gradient instead of decay toward zero.
void optimizer_step(OptimizerState& state, ParameterStore& params, const Gradients& grads, const MethodConfig& config);

// -------------------------------------------------------------- Training

struct StepRecord {
    std::size_t step = 0;
    double lr = 0.0;
    LossValue loss;
};

struct EpochRecord {
    std::size_t epoch = 0;
    Domain split = Domain::InDomain;
    std::size_t n = 0;
    std::optional<double> accuracy;
    double mean_confidence = 0.0;
    std::optional<double> ece;
};

struct TrainingLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    /// Number of MLM sequences consumed per source domain.
    std::map<Domain, std::size_t> mlm_sources;

    /// One JSON object per line: step records, then epoch records.
    std::string to_jsonl() const;
};

struct EvalSplits {
    std::vector<LabeledExample> in_domain;
    std::vector<LabeledExample> out_of_domain;
    std::vector<TokenSequence> outlier;
};

struct TrainResult {
    ParameterStore params;
    TrainingLog log;
};

/// Fine-tunes `params` (which must carry the pre-trained snapshot).
/// Epoch records cover epoch 0 (before training) through config.epochs.
TrainResult train(const MethodConfig& config, std::span<const LabeledExample> task_train,
                  std::span<const TokenSequence> pretrain_corpus, ParameterStore params,
                  const EvalSplits* eval = nullptr, std::size_t num_bins = 10);

struct PretrainConfig {
    double p_mask = 0.15;
    double lr = 1e-3;
    double weight_decay = 0.01;
    std::size_t batch_size = 32;
    std::size_t epochs = 4;
    bool use_scheduler = true;
    std::uint64_t seed = 0;
    bool operator==(const PretrainConfig&) const = default;
};

/// MLM pre-training with 80-10-10 corruption; returns params with the
/// pre-trained snapshot taken at the end.
TrainResult pretrain(const PretrainConfig& config, std::span<const TokenSequence> corpus, ParameterStore params);

} // namespace lmcal
