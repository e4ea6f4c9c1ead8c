#pragma once

// Tiny pre-layer-norm transformer encoder with masked-LM head and
// classification head, implemented with explicit forward/backward passes.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmcal/corpus.hpp"
#include "lmcal/tensor.hpp"

namespace lmcal {

struct EncoderConfig {
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t d_model = 64;
    std::size_t d_ff = 128;
    std::size_t max_len = 32;
    std::size_t vocab_size = 0;
    std::size_t num_classes = 3;

    void validate() const;
    std::size_t head_dim() const { return d_model / num_heads; }
    /// Key/value slots available to attention (sequence plus prefix).
    std::size_t attention_capacity() const { return 2 * max_len; }
    bool operator==(const EncoderConfig&) const = default;
};

/// Parameter-efficient attachments present in a store. Zero sizes mean absent.
struct Attachments {
    std::size_t adapter_dim = 0;
    std::size_t lora_rank = 0;
    double lora_alpha = 0.0;
    bool prefix = false;
    std::size_t prefix_len = 0;

    double lora_scale() const { return lora_rank ? lora_alpha / static_cast<double>(lora_rank) : 0.0; }
    bool any() const { return adapter_dim || lora_rank || prefix; }
    bool operator==(const Attachments&) const = default;
};

/// Named arrays of the encoder, MLM head ("mlm.*"), classifier ("cls.*") and
/// any attachments, plus an optional immutable pre-trained snapshot.
class ParameterStore {
public:
    struct Entry {
        Tensor value;
        bool trainable = true;
        bool operator==(const Entry&) const = default;
    };
    using Map = std::map<std::string, Entry, std::less<>>;

    ParameterStore() = default;
    explicit ParameterStore(EncoderConfig config) : config_(config) {}

    const EncoderConfig& config() const { return config_; }
    const Attachments& attachments() const { return attachments_; }
    Attachments& attachments() { return attachments_; }

    void add(std::string name, Tensor value, bool trainable = true);
    void erase(std::string_view name);
    bool contains(std::string_view name) const { return arrays_.find(name) != arrays_.end(); }
    const Tensor& at(std::string_view name) const;
    Tensor& at(std::string_view name);
    bool trainable(std::string_view name) const;
    void set_trainable(std::string_view name, bool trainable);
    const Map& arrays() const { return arrays_; }
    std::vector<std::string> names() const;

    std::size_t parameter_count() const;
    std::size_t trainable_count() const;

    bool has_snapshot() const { return snapshot_ != nullptr; }
    /// Throws ConfigError when no snapshot was taken.
    const ParameterStore& snapshot() const;
    std::shared_ptr<const ParameterStore> snapshot_ptr() const { return snapshot_; }

    /// Compares config, attachments and array values (ignores the snapshot).
    bool same_values(const ParameterStore& other) const;

private:
    friend ParameterStore snapshot_pretrained(ParameterStore params);
    EncoderConfig config_;
    Attachments attachments_;
    Map arrays_;
    std::shared_ptr<const ParameterStore> snapshot_;
};

/// Gradient accumulators keyed like the parameters they belong to.
class Gradients {
public:
    /// Slot for `name`, created zeroed on first use; nullptr when frozen.
    Tensor* slot(const ParameterStore& params, std::string_view name);
    const Tensor* find(std::string_view name) const;
    const std::map<std::string, Tensor, std::less<>>& all() const { return grads_; }
    std::map<std::string, Tensor, std::less<>>& all() { return grads_; }
    void scale(double factor);

private:
    std::map<std::string, Tensor, std::less<>> grads_;
};

struct HiddenStates {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::size_t width = 0;
    Tensor values; // [batch, length, width]
    Tensor pooled; // [batch, width], CLS row of `values`

    const double* at(std::size_t b, std::size_t t) const { return values.ptr() + (b * length + t) * width; }
};

struct Position {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const Position&) const = default;
};

std::vector<Position> flatten_positions(const MaskedBatch& batch);

struct ForwardCache; // defined in encoder.cpp

/// Owns the intermediate activations of one forward pass.
class ForwardTape {
public:
    ForwardTape();
    ~ForwardTape();
    ForwardTape(ForwardTape&&) noexcept;
    ForwardTape& operator=(ForwardTape&&) noexcept;
    ForwardCache& cache() { return *cache_; }
    const ForwardCache& cache() const { return *cache_; }

private:
    std::unique_ptr<ForwardCache> cache_;
};

/// Scaled-normal N(0, 0.02) weights, zero biases, unit layer-norm gains.
ParameterStore init_params(const EncoderConfig& config, std::uint64_t seed);
/// Closed-form count of init_params' arrays for `config`.
std::size_t expected_parameter_count(const EncoderConfig& config);
/// Re-draws the classification head (fresh task head for fine-tuning).
void reset_classifier(ParameterStore& params, std::uint64_t seed);

HiddenStates encode(const ParameterStore& params, const TokenBatch& batch, ForwardTape* tape = nullptr);
/// Accumulates parameter gradients given d(loss)/d(values).
void encode_backward(const ParameterStore& params, const ForwardTape& tape, const Tensor& d_values, Gradients& grads);

Matrix mlm_logits(const ParameterStore& params, const HiddenStates& hidden, std::span<const Position> positions);
void mlm_logits_backward(const ParameterStore& params, const HiddenStates& hidden, std::span<const Position> positions,
                         const Matrix& d_logits, Gradients& grads, Tensor& d_values);

Matrix cls_logits(const ParameterStore& params, const HiddenStates& hidden);
void cls_logits_backward(const ParameterStore& params, const HiddenStates& hidden, const Matrix& d_logits,
                         Gradients& grads, Tensor& d_values);

/// Stores an immutable deep copy of the current arrays; throws if one exists.
ParameterStore snapshot_pretrained(ParameterStore params);

/// Pooled representations for many sequences, encoded in chunks.
Tensor pooled_representations(const ParameterStore& params, std::span<const TokenSequence> seqs,
                              std::size_t chunk = 64);

/// Tab-separated rows: domain tag followed by the pooled vector.
void dump_representations(const ParameterStore& params, std::span<const TokenSequence> batch,
                          const std::filesystem::path& path);

// Checkpoint container (little-endian):
//   "LMCALCK1" | u64 header_len | header JSON | float32 payload
// The header lists config, attachments and arrays (name, shape, trainable)
// in payload order. Values are rounded to float32 on save.
void save_checkpoint(const ParameterStore& params, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& metadata = {});
ParameterStore load_checkpoint(const std::filesystem::path& path,
                               std::map<std::string, std::string>* metadata = nullptr);
/// Rounds every array to float32 precision in place (checkpoint-exact values).
void round_to_float32(ParameterStore& params);

std::string layer_name(std::size_t layer, std::string_view suffix);

} // namespace lmcal
