#pragma once

// Loss functions with fused analytic gradients. Every loss returns its
// value; when `grads` is non-null it also accumulates weight * d(loss)/dθ.

#include <map>
#include <span>
#include <string>

#include "lmcal/corpus.hpp"
#include "lmcal/encoder.hpp"

namespace lmcal {

struct LossValue {
    double total = 0.0;
    /// Unweighted components: "mlm", "cls", "kd", "rep_norm".
    std::map<std::string, double> components;

    double component(const std::string& name) const {
        auto it = components.find(name);
        return it == components.end() ? 0.0 : it->second;
    }
};

struct SmoothingConfig {
    /// Mass moved from the ground-truth class to the other K-1 classes.
    double sigma = 0.0;
};

/// (1 - σ) on `label`, σ/(K-1) on every other class.
std::vector<double> smoothed_targets(int label, std::size_t num_classes, SmoothingConfig smoothing);

/// Flat mean over all masked positions of -log p_mlm(target | corrupted input).
LossValue loss_mlm(const ParameterStore& params, const MaskedBatch& batch, Gradients* grads = nullptr,
                   double weight = 1.0);

/// Mean cross-entropy against label-smoothed targets.
LossValue loss_cls(const ParameterStore& params, std::span<const LabeledExample> examples, SmoothingConfig smoothing,
                   Gradients* grads = nullptr, double weight = 1.0);

/// Mean over masked positions of KL(teacher || student); the teacher is
/// evaluated without gradients. `teacher` null means no snapshot: error.
LossValue loss_kd_mlm(const ParameterStore& student, const ParameterStore* teacher, const MaskedBatch& batch,
                      Gradients* grads = nullptr, double weight = 1.0);

/// Mean Euclidean norm (or squared norm) of the pooled representations.
double rep_norm_penalty(const HiddenStates& hidden, bool squared = false);
/// Adds weight * d(penalty)/d(values) into d_values. Zero vectors get zero gradient.
void rep_norm_penalty_backward(const HiddenStates& hidden, bool squared, double weight, Tensor& d_values);

struct JointWeights {
    double alpha_mlm = 0.0;
    double beta_l2 = 0.0;
    SmoothingConfig smoothing;
    bool use_kd = false;
    bool rep_penalty_squared = false;
};

/// total = L_cls + α·(KD if use_kd else L_mlm) + β·penalty(f(x_cls)).
/// `mlm_batch` may be null only when α = 0.
LossValue loss_joint(const ParameterStore& params, const ParameterStore* teacher,
                     std::span<const LabeledExample> cls_batch, const MaskedBatch* mlm_batch,
                     const JointWeights& weights, Gradients* grads = nullptr);

TokenBatch batch_of(std::span<const LabeledExample> examples);

} // namespace lmcal
