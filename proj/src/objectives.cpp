#include "lmcal/objectives.hpp"

#include <cmath>

#include "lmcal/error.hpp"

namespace lmcal {

std::vector<double> smoothed_targets(int label, std::size_t num_classes, SmoothingConfig smoothing) {
    require(smoothing.sigma >= 0.0 && smoothing.sigma < 1.0, "label smoothing sigma must lie in [0, 1)");
    require(num_classes >= 2, "need at least two classes");
    require<DataError>(label >= 0 && static_cast<std::size_t>(label) < num_classes, "label out of range");
    std::vector<double> t(num_classes, smoothing.sigma / static_cast<double>(num_classes - 1));
    t[static_cast<std::size_t>(label)] = 1.0 - smoothing.sigma;
    return t;
}

TokenBatch batch_of(std::span<const LabeledExample> examples) {
    std::vector<TokenSequence> seqs;
    seqs.reserve(examples.size());
    for (const auto& e : examples) seqs.push_back(e.sequence);
    return pad_batch(seqs);
}

namespace {

void require_masks(const MaskedBatch& batch) {
    require<DataError>(batch.num_masked() > 0, "masked batch has no masked positions");
    for (const auto& p : batch.positions) require<DataError>(!p.empty(), "every row needs at least one masked position");
}

std::vector<TokenId> flat_targets(const MaskedBatch& batch) {
    std::vector<TokenId> out;
    for (const auto& t : batch.targets) out.insert(out.end(), t.begin(), t.end());
    return out;
}

void backprop_hidden(const ParameterStore& params, const ForwardTape& tape, const Tensor& d_values, Gradients& grads) {
    encode_backward(params, tape, d_values, grads);
}

} // namespace

LossValue loss_mlm(const ParameterStore& params, const MaskedBatch& batch, Gradients* grads, double weight) {
    require_masks(batch);
    ForwardTape tape;
    const HiddenStates hs = encode(params, batch.corrupted, grads ? &tape : nullptr);
    const auto positions = flatten_positions(batch);
    const auto targets = flat_targets(batch);
    Matrix logits = mlm_logits(params, hs, positions);
    const double m = static_cast<double>(positions.size());
    double total = 0.0;
    Matrix d_logits(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double lse = logsumexp(logits.row(i));
        total += lse - logits(i, static_cast<std::size_t>(targets[i]));
        if (grads) {
            for (std::size_t j = 0; j < logits.cols; ++j) d_logits(i, j) = std::exp(logits(i, j) - lse) * weight / m;
            d_logits(i, static_cast<std::size_t>(targets[i])) -= weight / m;
        }
    }
    const double loss = total / m;
    if (grads) {
        Tensor d_values(hs.values.shape);
        mlm_logits_backward(params, hs, positions, d_logits, *grads, d_values);
        backprop_hidden(params, tape, d_values, *grads);
    }
    return {loss, {{"mlm", loss}}};
}

namespace {

// Classification forward/backward sharing one encoder pass with the
// representation penalty.
LossValue cls_and_penalty(const ParameterStore& params, std::span<const LabeledExample> examples,
                          SmoothingConfig smoothing, double beta, bool squared, bool report_penalty,
                          Gradients* grads, double weight) {
    require(smoothing.sigma >= 0.0 && smoothing.sigma < 1.0, "label smoothing sigma must lie in [0, 1)");
    require<DataError>(!examples.empty(), "empty classification batch");
    const std::size_t K = params.config().num_classes;
    ForwardTape tape;
    const HiddenStates hs = encode(params, batch_of(examples), grads ? &tape : nullptr);
    Matrix logits = cls_logits(params, hs);
    const double B = static_cast<double>(examples.size());
    double total = 0.0;
    Matrix d_logits(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto t = smoothed_targets(examples[i].label, K, smoothing);
        const double lse = logsumexp(logits.row(i));
        for (std::size_t c = 0; c < K; ++c) {
            total += t[c] * (lse - logits(i, c));
            if (grads) d_logits(i, c) = (std::exp(logits(i, c) - lse) - t[c]) * weight / B;
        }
    }
    LossValue out;
    out.components["cls"] = total / B;
    out.total = out.components["cls"];
    const bool with_penalty = beta > 0.0;
    if (report_penalty) out.components["rep_norm"] = rep_norm_penalty(hs, squared);
    if (grads) {
        Tensor d_values(hs.values.shape);
        cls_logits_backward(params, hs, d_logits, *grads, d_values);
        if (with_penalty) rep_norm_penalty_backward(hs, squared, beta * weight, d_values);
        backprop_hidden(params, tape, d_values, *grads);
    }
    return out;
}

} // namespace

LossValue loss_cls(const ParameterStore& params, std::span<const LabeledExample> examples, SmoothingConfig smoothing,
                   Gradients* grads, double weight) {
    return cls_and_penalty(params, examples, smoothing, 0.0, false, false, grads, weight);
}

LossValue loss_kd_mlm(const ParameterStore& student, const ParameterStore* teacher, const MaskedBatch& batch,
                      Gradients* grads, double weight) {
    require(teacher != nullptr, "knowledge distillation requires a pre-trained snapshot");
    require_masks(batch);
    const auto positions = flatten_positions(batch);
    const Matrix t_logits = mlm_logits(*teacher, encode(*teacher, batch.corrupted), positions);
    ForwardTape tape;
    const HiddenStates hs = encode(student, batch.corrupted, grads ? &tape : nullptr);
    const Matrix s_logits = mlm_logits(student, hs, positions);
    const double m = static_cast<double>(positions.size());
    double total = 0.0;
    Matrix d_logits(s_logits.rows, s_logits.cols);
    for (std::size_t i = 0; i < s_logits.rows; ++i) {
        const double t_lse = logsumexp(t_logits.row(i));
        const double s_lse = logsumexp(s_logits.row(i));
        double kl = 0.0;
        for (std::size_t j = 0; j < s_logits.cols; ++j) {
            const double log_p = t_logits(i, j) - t_lse;
            const double log_q = s_logits(i, j) - s_lse;
            const double p = std::exp(log_p);
            if (p > 0.0) kl += p * (log_p - log_q);
            if (grads) d_logits(i, j) = (std::exp(log_q) - p) * weight / m;
        }
        total += kl;
    }
    const double loss = total / m;
    if (grads) {
        Tensor d_values(hs.values.shape);
        mlm_logits_backward(student, hs, positions, d_logits, *grads, d_values);
        backprop_hidden(student, tape, d_values, *grads);
    }
    return {loss, {{"kd", loss}}};
}

double rep_norm_penalty(const HiddenStates& hidden, bool squared) {
    require<DataError>(hidden.batch > 0, "empty batch");
    double total = 0.0;
    for (std::size_t b = 0; b < hidden.batch; ++b) {
        const double* v = hidden.pooled.ptr() + b * hidden.width;
        double sq = 0.0;
        for (std::size_t i = 0; i < hidden.width; ++i) sq += v[i] * v[i];
        total += squared ? sq : std::sqrt(sq);
    }
    return total / static_cast<double>(hidden.batch);
}

void rep_norm_penalty_backward(const HiddenStates& hidden, bool squared, double weight, Tensor& d_values) {
    const double scale = weight / static_cast<double>(hidden.batch);
    for (std::size_t b = 0; b < hidden.batch; ++b) {
        const double* v = hidden.pooled.ptr() + b * hidden.width;
        double* g = d_values.ptr() + b * hidden.length * hidden.width;
        double sq = 0.0;
        for (std::size_t i = 0; i < hidden.width; ++i) sq += v[i] * v[i];
        if (squared) {
            for (std::size_t i = 0; i < hidden.width; ++i) g[i] += 2.0 * scale * v[i];
        } else if (sq > 0.0) {
            const double inv = scale / std::sqrt(sq);
            for (std::size_t i = 0; i < hidden.width; ++i) g[i] += inv * v[i];
        }
    }
}

LossValue loss_joint(const ParameterStore& params, const ParameterStore* teacher,
                     std::span<const LabeledExample> cls_batch, const MaskedBatch* mlm_batch,
                     const JointWeights& w, Gradients* grads) {
    require(w.alpha_mlm >= 0.0 && w.beta_l2 >= 0.0, "joint loss weights must be nonnegative");
    require(w.alpha_mlm == 0.0 || mlm_batch != nullptr, "alpha_mlm > 0 requires an MLM batch");
    require(!w.use_kd || teacher != nullptr, "knowledge distillation requires a pre-trained snapshot");

    LossValue out = cls_and_penalty(params, cls_batch, w.smoothing, w.beta_l2, w.rep_penalty_squared, true, grads, 1.0);
    double total = out.components["cls"];
    if (mlm_batch) {
        Gradients* g = w.alpha_mlm > 0.0 ? grads : nullptr;
        if (w.use_kd) {
            out.components["kd"] = loss_kd_mlm(params, teacher, *mlm_batch, g, w.alpha_mlm).total;
            total += w.alpha_mlm * out.components["kd"];
        } else {
            out.components["mlm"] = loss_mlm(params, *mlm_batch, g, w.alpha_mlm).total;
            total += w.alpha_mlm * out.components["mlm"];
        }
    }
    if (w.beta_l2 > 0.0) total += w.beta_l2 * out.components["rep_norm"];
    out.total = total;
    return out;
}

} // namespace lmcal
