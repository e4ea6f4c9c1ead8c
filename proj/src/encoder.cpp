#include "lmcal/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "lmcal/error.hpp"
#include "lmcal/kernels.hpp"
#include "lmcal/rng.hpp"

namespace lmcal {

// ------------------------------------------------------------ softmax utils

void softmax(std::span<const double> logits, std::span<double> out) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (auto& v : out) v /= total;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    softmax(logits, out);
    return out;
}

double logsumexp(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double v : logits) total += std::exp(v - mx);
    return mx + std::log(total);
}

// ----------------------------------------------------------- configuration

void EncoderConfig::validate() const {
    require(num_layers >= 1, "num_layers must be >= 1");
    require(num_heads >= 1 && d_model >= 1, "num_heads and d_model must be positive");
    require(d_model % num_heads == 0, "d_model must be divisible by num_heads");
    require(d_ff >= 1, "d_ff must be positive");
    require(max_len >= 2, "max_len must be >= 2");
    require(vocab_size > static_cast<std::size_t>(special::kCount), "vocab_size must exceed the special tokens");
    require(num_classes >= 2, "num_classes must be >= 2");
}

std::string layer_name(std::size_t layer, std::string_view suffix) {
    return "layer" + std::to_string(layer) + "." + std::string(suffix);
}

// ---------------------------------------------------------- ParameterStore

void ParameterStore::add(std::string name, Tensor value, bool trainable) {
    require(!contains(name), "parameter already exists: " + name);
    arrays_.emplace(std::move(name), Entry{std::move(value), trainable});
}

void ParameterStore::erase(std::string_view name) {
    auto it = arrays_.find(name);
    if (it != arrays_.end()) arrays_.erase(it);
}

const Tensor& ParameterStore::at(std::string_view name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ConfigError("unknown parameter: " + std::string(name));
    return it->second.value;
}

Tensor& ParameterStore::at(std::string_view name) {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ConfigError("unknown parameter: " + std::string(name));
    return it->second.value;
}

bool ParameterStore::trainable(std::string_view name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ConfigError("unknown parameter: " + std::string(name));
    return it->second.trainable;
}

void ParameterStore::set_trainable(std::string_view name, bool trainable) {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ConfigError("unknown parameter: " + std::string(name));
    it->second.trainable = trainable;
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(arrays_.size());
    for (const auto& [name, _] : arrays_) out.push_back(name);
    return out;
}

std::size_t ParameterStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : arrays_) n += e.value.size();
    return n;
}

std::size_t ParameterStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : arrays_)
        if (e.trainable) n += e.value.size();
    return n;
}

const ParameterStore& ParameterStore::snapshot() const {
    require(snapshot_ != nullptr, "no pre-trained snapshot has been taken");
    return *snapshot_;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
    if (!(config_ == other.config_) || !(attachments_ == other.attachments_)) return false;
    if (arrays_.size() != other.arrays_.size()) return false;
    for (auto a = arrays_.begin(), b = other.arrays_.begin(); a != arrays_.end(); ++a, ++b)
        if (a->first != b->first || !(a->second.value == b->second.value)) return false;
    return true;
}

ParameterStore snapshot_pretrained(ParameterStore params) {
    require(!params.has_snapshot(), "pre-trained snapshot already exists");
    ParameterStore frozen = params;
    frozen.snapshot_.reset();
    params.snapshot_ = std::make_shared<const ParameterStore>(std::move(frozen));
    return params;
}

Tensor* Gradients::slot(const ParameterStore& params, std::string_view name) {
    if (!params.trainable(name)) return nullptr;
    auto it = grads_.find(name);
    if (it == grads_.end()) it = grads_.emplace(std::string(name), Tensor(params.at(name).shape)).first;
    return &it->second;
}

const Tensor* Gradients::find(std::string_view name) const {
    auto it = grads_.find(name);
    return it == grads_.end() ? nullptr : &it->second;
}

void Gradients::scale(double factor) {
    for (auto& [_, g] : grads_)
        for (auto& v : g.data) v *= factor;
}

// ------------------------------------------------------------ initialization

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-5;

Tensor normal_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    std::normal_distribution<double> dist(0.0, kInitStd);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

} // namespace

ParameterStore init_params(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    ParameterStore p(config);
    const std::size_t d = config.d_model, ff = config.d_ff, v = config.vocab_size;
    auto weight = [&](const std::string& name, std::vector<std::size_t> shape) {
        p.add(name, normal_tensor(std::move(shape), derive_seed(seed, "init:" + name)));
    };
    auto fill = [&](const std::string& name, std::size_t n, double value) { p.add(name, Tensor({n}, value)); };

    weight("embed.token", {v, d});
    weight("embed.position", {config.max_len, d});
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        fill(layer_name(l, "ln1.gamma"), d, 1.0);
        fill(layer_name(l, "ln1.beta"), d, 0.0);
        for (const char* w : {"q", "k", "v", "o"}) {
            weight(layer_name(l, std::string("attn.w") + w), {d, d});
            fill(layer_name(l, std::string("attn.b") + w), d, 0.0);
        }
        fill(layer_name(l, "ln2.gamma"), d, 1.0);
        fill(layer_name(l, "ln2.beta"), d, 0.0);
        weight(layer_name(l, "ffn.w1"), {d, ff});
        fill(layer_name(l, "ffn.b1"), ff, 0.0);
        weight(layer_name(l, "ffn.w2"), {ff, d});
        fill(layer_name(l, "ffn.b2"), d, 0.0);
    }
    fill("final_ln.gamma", d, 1.0);
    fill("final_ln.beta", d, 0.0);
    weight("mlm.weight", {d, v});
    fill("mlm.bias", v, 0.0);
    weight("cls.weight", {d, config.num_classes});
    fill("cls.bias", config.num_classes, 0.0);
    return p;
}

std::size_t expected_parameter_count(const EncoderConfig& c) {
    const std::size_t d = c.d_model, ff = c.d_ff, v = c.vocab_size, k = c.num_classes;
    const std::size_t per_layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * ff + ff) + (ff * d + d);
    return v * d + c.max_len * d + c.num_layers * per_layer + 2 * d + (d * v + v) + (d * k + k);
}

void reset_classifier(ParameterStore& params, std::uint64_t seed) {
    const auto& c = params.config();
    params.at("cls.weight") = normal_tensor({c.d_model, c.num_classes}, derive_seed(seed, "init:cls.weight"));
    params.at("cls.bias") = Tensor({c.num_classes}, 0.0);
}

// -------------------------------------------------------------- primitives

namespace {

struct LayerNormCache {
    std::vector<double> xhat;
    std::vector<double> rstd;
};

void layer_norm(const Tensor& x, std::size_t rows, std::size_t d, const Tensor& gamma, const Tensor& beta, Tensor& y,
                LayerNormCache& cache) {
    y = Tensor({rows, d});
    cache.xhat.resize(rows * d);
    cache.rstd.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.ptr() + r * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += xr[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.rstd[r] = rstd;
        double* xh = cache.xhat.data() + r * d;
        double* yr = y.ptr() + r * d;
        for (std::size_t i = 0; i < d; ++i) {
            xh[i] = (xr[i] - mean) * rstd;
            yr[i] = gamma.data[i] * xh[i] + beta.data[i];
        }
    }
}

// dx += LN backward of dy.
void layer_norm_backward(const Tensor& dy, std::size_t rows, std::size_t d, const Tensor& gamma,
                         const LayerNormCache& cache, Tensor* dgamma, Tensor* dbeta, Tensor& dx) {
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* dyr = dy.ptr() + r * d;
        const double* xh = cache.xhat.data() + r * d;
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            dxhat[i] = dyr[i] * gamma.data[i];
            mean_dxhat += dxhat[i];
            mean_dxhat_xhat += dxhat[i] * xh[i];
            if (dgamma) dgamma->data[i] += dyr[i] * xh[i];
            if (dbeta) dbeta->data[i] += dyr[i];
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        double* dxr = dx.ptr() + r * d;
        const double rstd = cache.rstd[r];
        for (std::size_t i = 0; i < d; ++i) dxr[i] += rstd * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
    }
}

// y = x W + b
void linear(const Tensor& x, std::size_t rows, const Tensor& w, const Tensor* b, Tensor& y) {
    const std::size_t in = w.shape[0], out = w.shape[1];
    y = Tensor({rows, out});
    kernels::gemm_nn(rows, out, in, x.ptr(), in, w.ptr(), out, y.ptr(), out);
    if (b)
        for (std::size_t r = 0; r < rows; ++r) {
            double* yr = y.ptr() + r * out;
            for (std::size_t j = 0; j < out; ++j) yr[j] += b->data[j];
        }
}

// Accumulates dW, db and (if dx) dx for y = x W + b.
void linear_backward(const Tensor& x, std::size_t rows, const Tensor& w, const Tensor& dy, Tensor* dw, Tensor* db,
                     Tensor* dx) {
    const std::size_t in = w.shape[0], out = w.shape[1];
    if (dw) kernels::gemm_tn(rows, out, in, x.ptr(), in, dy.ptr(), out, dw->ptr(), out, true);
    if (db)
        for (std::size_t r = 0; r < rows; ++r) {
            const double* dyr = dy.ptr() + r * out;
            for (std::size_t j = 0; j < out; ++j) db->data[j] += dyr[j];
        }
    if (dx) kernels::gemm_nt(rows, in, out, dy.ptr(), out, w.ptr(), out, dx->ptr(), in, true);
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }
inline double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Tensor apply_gelu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = gelu(v);
    return y;
}

void add_inplace(Tensor& y, const Tensor& x) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
}

std::size_t width_of(const Tensor& t) { return t.shape.size() >= 2 ? t.shape[1] : t.size(); }

// Bottleneck adapter: out = y + gelu(y Wd + bd) Wu + bu.
struct AdapterCache {
    Tensor input;
    Tensor pre; // y Wd + bd
    Tensor act; // gelu(pre)
};

void adapter_forward(const ParameterStore& p, const std::string& prefix, Tensor& y, std::size_t rows,
                     AdapterCache& cache) {
    cache.input = y;
    linear(y, rows, p.at(prefix + ".down"), &p.at(prefix + ".down_bias"), cache.pre);
    cache.act = apply_gelu(cache.pre);
    Tensor up;
    linear(cache.act, rows, p.at(prefix + ".up"), &p.at(prefix + ".up_bias"), up);
    add_inplace(y, up);
}

// d_y is the gradient w.r.t. the adapter output; returns gradient w.r.t. its input.
Tensor adapter_backward(const ParameterStore& p, const std::string& prefix, const AdapterCache& cache,
                        std::size_t rows, const Tensor& d_out, Gradients& grads) {
    Tensor d_in = d_out;
    Tensor d_act(cache.act.shape);
    linear_backward(cache.act, rows, p.at(prefix + ".up"), d_out, grads.slot(p, prefix + ".up"),
                    grads.slot(p, prefix + ".up_bias"), &d_act);
    for (std::size_t i = 0; i < d_act.data.size(); ++i) d_act.data[i] *= gelu_grad(cache.pre.data[i]);
    linear_backward(cache.input, rows, p.at(prefix + ".down"), d_act, grads.slot(p, prefix + ".down"),
                    grads.slot(p, prefix + ".down_bias"), &d_in);
    return d_in;
}

} // namespace

// ------------------------------------------------------------ forward cache

struct LayerCache {
    Tensor x_in;
    LayerNormCache ln1;
    Tensor a;
    Tensor q, k, v;
    Tensor lora_q, lora_v; // a · A (rank-r projections)
    Tensor probs;          // [B, H, L, P + L]
    Tensor context;
    AdapterCache adapter_attn;
    Tensor x_mid;
    LayerNormCache ln2;
    Tensor c;
    Tensor z;
    Tensor gz;
    AdapterCache adapter_ffn;
};

struct ForwardCache {
    TokenBatch batch;
    std::vector<LayerCache> layers;
    Tensor x_final;
    LayerNormCache final_ln;
};

ForwardTape::ForwardTape() : cache_(std::make_unique<ForwardCache>()) {}
ForwardTape::~ForwardTape() = default;
ForwardTape::ForwardTape(ForwardTape&&) noexcept = default;
ForwardTape& ForwardTape::operator=(ForwardTape&&) noexcept = default;

// ------------------------------------------------------------------ encode

namespace {

void check_batch(const ParameterStore& p, const TokenBatch& batch) {
    const auto& c = p.config();
    require<DataError>(batch.rows >= 1 && batch.cols >= 1, "empty token batch");
    require<DataError>(batch.ids.size() == batch.rows * batch.cols && batch.attention.size() == batch.ids.size(),
                       "token batch shape mismatch");
    require<DataError>(batch.cols <= c.max_len, "sequence longer than max_len");
    for (TokenId id : batch.ids)
        require<DataError>(id >= 0 && static_cast<std::size_t>(id) < c.vocab_size, "token id out of vocabulary range");
}

// Multi-head scaled dot-product attention with optional learned prefix.
void attention_forward(const ParameterStore& p, std::size_t layer, const TokenBatch& batch, LayerCache& lc) {
    const auto& cfg = p.config();
    const std::size_t B = batch.rows, L = batch.cols, d = cfg.d_model, H = cfg.num_heads, dh = cfg.head_dim();
    const std::size_t P = p.attachments().prefix ? p.attachments().prefix_len : 0;
    const std::size_t S = P + L;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor* pk = P ? &p.at(layer_name(layer, "prefix.key")) : nullptr;
    const Tensor* pv = P ? &p.at(layer_name(layer, "prefix.value")) : nullptr;

    lc.probs = Tensor({B, H, L, S});
    lc.context = Tensor({B * L, d});
    std::vector<double> scores(S);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t t = 0; t < L; ++t) {
                const double* q = lc.q.ptr() + (b * L + t) * d + h * dh;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < S; ++j) {
                    const double* key;
                    if (j < P) key = pk->ptr() + j * d + h * dh;
                    else if (batch.attends(b, j - P)) key = lc.k.ptr() + (b * L + (j - P)) * d + h * dh;
                    else continue;
                    scores[j] = kernels::dot(q, key, dh) * scale;
                    mx = std::max(mx, scores[j]);
                }
                double* prob = lc.probs.ptr() + ((b * H + h) * L + t) * S;
                double total = 0.0;
                for (std::size_t j = 0; j < S; ++j) {
                    if (j >= P && !batch.attends(b, j - P)) continue;
                    prob[j] = std::exp(scores[j] - mx);
                    total += prob[j];
                }
                double* out = lc.context.ptr() + (b * L + t) * d + h * dh;
                for (std::size_t j = 0; j < S; ++j) {
                    if (j >= P && !batch.attends(b, j - P)) continue;
                    prob[j] /= total;
                    const double* val =
                        j < P ? pv->ptr() + j * d + h * dh : lc.v.ptr() + (b * L + (j - P)) * d + h * dh;
                    kernels::axpy(prob[j], val, out, dh);
                }
            }
}

void attention_backward(const ParameterStore& p, std::size_t layer, const TokenBatch& batch, const LayerCache& lc,
                        const Tensor& d_context, Tensor& dq, Tensor& dk, Tensor& dv, Gradients& grads) {
    const auto& cfg = p.config();
    const std::size_t B = batch.rows, L = batch.cols, d = cfg.d_model, H = cfg.num_heads, dh = cfg.head_dim();
    const std::size_t P = p.attachments().prefix ? p.attachments().prefix_len : 0;
    const std::size_t S = P + L;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor* pk = P ? &p.at(layer_name(layer, "prefix.key")) : nullptr;
    const Tensor* pv = P ? &p.at(layer_name(layer, "prefix.value")) : nullptr;
    Tensor* dpk = P ? grads.slot(p, layer_name(layer, "prefix.key")) : nullptr;
    Tensor* dpv = P ? grads.slot(p, layer_name(layer, "prefix.value")) : nullptr;

    std::vector<double> dprob(S);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t t = 0; t < L; ++t) {
                const std::size_t n = b * L + t;
                const double* g = d_context.ptr() + n * d + h * dh;
                const double* prob = lc.probs.ptr() + ((b * H + h) * L + t) * S;
                double weighted = 0.0;
                for (std::size_t j = 0; j < S; ++j) {
                    if (j >= P && !batch.attends(b, j - P)) continue;
                    const std::size_t m = b * L + (j - P);
                    const double* val = j < P ? pv->ptr() + j * d + h * dh : lc.v.ptr() + m * d + h * dh;
                    dprob[j] = kernels::dot(g, val, dh);
                    weighted += prob[j] * dprob[j];
                    if (j < P) {
                        if (dpv) kernels::axpy(prob[j], g, dpv->ptr() + j * d + h * dh, dh);
                    } else {
                        kernels::axpy(prob[j], g, dv.ptr() + m * d + h * dh, dh);
                    }
                }
                const double* q = lc.q.ptr() + n * d + h * dh;
                double* dqn = dq.ptr() + n * d + h * dh;
                for (std::size_t j = 0; j < S; ++j) {
                    if (j >= P && !batch.attends(b, j - P)) continue;
                    const double ds = prob[j] * (dprob[j] - weighted) * scale;
                    const std::size_t m = b * L + (j - P);
                    const double* key = j < P ? pk->ptr() + j * d + h * dh : lc.k.ptr() + m * d + h * dh;
                    kernels::axpy(ds, key, dqn, dh);
                    if (j < P) {
                        if (dpk) kernels::axpy(ds, q, dpk->ptr() + j * d + h * dh, dh);
                    } else {
                        kernels::axpy(ds, q, dk.ptr() + m * d + h * dh, dh);
                    }
                }
            }
}

// Projection with optional LoRA path: y = a W + b + s (a A) B.
void projection_forward(const ParameterStore& p, std::size_t layer, char which, const Tensor& a, std::size_t rows,
                        Tensor& y, Tensor* lora_u) {
    const std::string w = std::string("attn.w") + which, bias = std::string("attn.b") + which;
    linear(a, rows, p.at(layer_name(layer, w)), &p.at(layer_name(layer, bias)), y);
    const auto& att = p.attachments();
    if (lora_u && att.lora_rank && (which == 'q' || which == 'v')) {
        const std::string base = layer_name(layer, std::string("lora_") + which);
        linear(a, rows, p.at(base + ".a"), nullptr, *lora_u);
        Tensor delta;
        linear(*lora_u, rows, p.at(base + ".b"), nullptr, delta);
        const double s = att.lora_scale();
        for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += s * delta.data[i];
    }
}

void projection_backward(const ParameterStore& p, std::size_t layer, char which, const Tensor& a, std::size_t rows,
                         const Tensor& dy, const Tensor* lora_u, Tensor& da, Gradients& grads) {
    const std::string w = layer_name(layer, std::string("attn.w") + which);
    const std::string bias = layer_name(layer, std::string("attn.b") + which);
    linear_backward(a, rows, p.at(w), dy, grads.slot(p, w), grads.slot(p, bias), &da);
    const auto& att = p.attachments();
    if (lora_u && att.lora_rank && (which == 'q' || which == 'v')) {
        const std::string base = layer_name(layer, std::string("lora_") + which);
        const double s = att.lora_scale();
        Tensor dys = dy;
        for (auto& v : dys.data) v *= s;
        Tensor du(lora_u->shape);
        linear_backward(*lora_u, rows, p.at(base + ".b"), dys, grads.slot(p, base + ".b"), nullptr, &du);
        linear_backward(a, rows, p.at(base + ".a"), du, grads.slot(p, base + ".a"), nullptr, &da);
    }
}

} // namespace

HiddenStates encode(const ParameterStore& p, const TokenBatch& batch, ForwardTape* tape) {
    check_batch(p, batch);
    const auto& cfg = p.config();
    const auto& att = p.attachments();
    const std::size_t B = batch.rows, L = batch.cols, d = cfg.d_model, N = B * L;
    require<DataError>(!att.prefix || att.prefix_len + L <= cfg.attention_capacity(),
                       "prefix length plus sequence length exceeds attention capacity");

    ForwardCache local;
    ForwardCache& fc = tape ? tape->cache() : local;
    fc.batch = batch;
    fc.layers.assign(cfg.num_layers, {});

    Tensor x({N, d});
    const Tensor& tok = p.at("embed.token");
    const Tensor& pos = p.at("embed.position");
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) {
            double* xr = x.ptr() + (b * L + t) * d;
            const double* te = tok.ptr() + static_cast<std::size_t>(batch.at(b, t)) * d;
            const double* pe = pos.ptr() + t * d;
            for (std::size_t i = 0; i < d; ++i) xr[i] = te[i] + pe[i];
        }

    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        LayerCache& lc = fc.layers[l];
        lc.x_in = x;
        layer_norm(x, N, d, p.at(layer_name(l, "ln1.gamma")), p.at(layer_name(l, "ln1.beta")), lc.a, lc.ln1);
        projection_forward(p, l, 'q', lc.a, N, lc.q, &lc.lora_q);
        projection_forward(p, l, 'k', lc.a, N, lc.k, nullptr);
        projection_forward(p, l, 'v', lc.a, N, lc.v, &lc.lora_v);
        attention_forward(p, l, batch, lc);
        Tensor attn;
        linear(lc.context, N, p.at(layer_name(l, "attn.wo")), &p.at(layer_name(l, "attn.bo")), attn);
        if (att.adapter_dim) adapter_forward(p, layer_name(l, "adapter_attn"), attn, N, lc.adapter_attn);
        add_inplace(x, attn);

        lc.x_mid = x;
        layer_norm(x, N, d, p.at(layer_name(l, "ln2.gamma")), p.at(layer_name(l, "ln2.beta")), lc.c, lc.ln2);
        linear(lc.c, N, p.at(layer_name(l, "ffn.w1")), &p.at(layer_name(l, "ffn.b1")), lc.z);
        lc.gz = apply_gelu(lc.z);
        Tensor f;
        linear(lc.gz, N, p.at(layer_name(l, "ffn.w2")), &p.at(layer_name(l, "ffn.b2")), f);
        if (att.adapter_dim) adapter_forward(p, layer_name(l, "adapter_ffn"), f, N, lc.adapter_ffn);
        add_inplace(x, f);
    }

    fc.x_final = x;
    HiddenStates hs;
    hs.batch = B;
    hs.length = L;
    hs.width = d;
    Tensor out;
    layer_norm(x, N, d, p.at("final_ln.gamma"), p.at("final_ln.beta"), out, fc.final_ln);
    out.shape = {B, L, d};
    hs.values = std::move(out);
    hs.pooled = Tensor({B, d});
    for (std::size_t b = 0; b < B; ++b) std::copy_n(hs.at(b, 0), d, hs.pooled.ptr() + b * d);
    return hs;
}

void encode_backward(const ParameterStore& p, const ForwardTape& tape, const Tensor& d_values, Gradients& grads) {
    const ForwardCache& fc = tape.cache();
    const auto& cfg = p.config();
    const auto& att = p.attachments();
    const TokenBatch& batch = fc.batch;
    const std::size_t B = batch.rows, L = batch.cols, d = cfg.d_model, N = B * L;
    require<DataError>(d_values.size() == N * d, "d_values shape mismatch");

    Tensor dy = d_values;
    dy.shape = {N, d};
    Tensor dx({N, d});
    layer_norm_backward(dy, N, d, p.at("final_ln.gamma"), fc.final_ln, grads.slot(p, "final_ln.gamma"),
                        grads.slot(p, "final_ln.beta"), dx);

    for (std::size_t li = cfg.num_layers; li-- > 0;) {
        const LayerCache& lc = fc.layers[li];
        // Feed-forward sub-layer: x = x_mid + ffn(ln2(x_mid)).
        Tensor df = dx;
        if (att.adapter_dim) df = adapter_backward(p, layer_name(li, "adapter_ffn"), lc.adapter_ffn, N, df, grads);
        Tensor dgz(lc.gz.shape);
        linear_backward(lc.gz, N, p.at(layer_name(li, "ffn.w2")), df, grads.slot(p, layer_name(li, "ffn.w2")),
                        grads.slot(p, layer_name(li, "ffn.b2")), &dgz);
        for (std::size_t i = 0; i < dgz.data.size(); ++i) dgz.data[i] *= gelu_grad(lc.z.data[i]);
        Tensor dc(lc.c.shape);
        linear_backward(lc.c, N, p.at(layer_name(li, "ffn.w1")), dgz, grads.slot(p, layer_name(li, "ffn.w1")),
                        grads.slot(p, layer_name(li, "ffn.b1")), &dc);
        layer_norm_backward(dc, N, d, p.at(layer_name(li, "ln2.gamma")), lc.ln2, grads.slot(p, layer_name(li, "ln2.gamma")),
                            grads.slot(p, layer_name(li, "ln2.beta")), dx);

        // Attention sub-layer: x_mid = x_in + attn(ln1(x_in)).
        Tensor dattn = dx;
        if (att.adapter_dim)
            dattn = adapter_backward(p, layer_name(li, "adapter_attn"), lc.adapter_attn, N, dattn, grads);
        Tensor dctx({N, d});
        linear_backward(lc.context, N, p.at(layer_name(li, "attn.wo")), dattn, grads.slot(p, layer_name(li, "attn.wo")),
                        grads.slot(p, layer_name(li, "attn.bo")), &dctx);
        Tensor dq({N, d}), dk({N, d}), dv({N, d});
        attention_backward(p, li, batch, lc, dctx, dq, dk, dv, grads);
        Tensor da({N, d});
        projection_backward(p, li, 'q', lc.a, N, dq, &lc.lora_q, da, grads);
        projection_backward(p, li, 'k', lc.a, N, dk, nullptr, da, grads);
        projection_backward(p, li, 'v', lc.a, N, dv, &lc.lora_v, da, grads);
        layer_norm_backward(da, N, d, p.at(layer_name(li, "ln1.gamma")), lc.ln1, grads.slot(p, layer_name(li, "ln1.gamma")),
                            grads.slot(p, layer_name(li, "ln1.beta")), dx);
    }

    Tensor* dtok = grads.slot(p, "embed.token");
    Tensor* dpos = grads.slot(p, "embed.position");
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t) {
            const double* g = dx.ptr() + (b * L + t) * d;
            if (dtok) kernels::axpy(1.0, g, dtok->ptr() + static_cast<std::size_t>(batch.at(b, t)) * d, d);
            if (dpos) kernels::axpy(1.0, g, dpos->ptr() + t * d, d);
        }
}

// ------------------------------------------------------------------- heads

std::vector<Position> flatten_positions(const MaskedBatch& batch) {
    std::vector<Position> out;
    out.reserve(batch.num_masked());
    for (std::size_t r = 0; r < batch.positions.size(); ++r)
        for (std::size_t c : batch.positions[r]) out.push_back({r, c});
    return out;
}

namespace {

Tensor gather_rows(const HiddenStates& h, std::span<const Position> positions) {
    Tensor g({positions.size(), h.width});
    for (std::size_t i = 0; i < positions.size(); ++i) {
        require<DataError>(positions[i].row < h.batch && positions[i].col < h.length, "position out of range");
        std::copy_n(h.at(positions[i].row, positions[i].col), h.width, g.ptr() + i * h.width);
    }
    return g;
}

Matrix to_matrix(Tensor t) {
    Matrix m;
    m.rows = t.shape[0];
    m.cols = width_of(t);
    m.data = std::move(t.data);
    return m;
}

Tensor to_tensor(const Matrix& m) {
    Tensor t({m.rows, m.cols});
    t.data = m.data;
    return t;
}

} // namespace

Matrix mlm_logits(const ParameterStore& p, const HiddenStates& hidden, std::span<const Position> positions) {
    Tensor rows = gather_rows(hidden, positions);
    Tensor out;
    linear(rows, positions.size(), p.at("mlm.weight"), &p.at("mlm.bias"), out);
    return to_matrix(std::move(out));
}

void mlm_logits_backward(const ParameterStore& p, const HiddenStates& hidden, std::span<const Position> positions,
                         const Matrix& d_logits, Gradients& grads, Tensor& d_values) {
    Tensor rows = gather_rows(hidden, positions);
    Tensor drows(rows.shape);
    linear_backward(rows, positions.size(), p.at("mlm.weight"), to_tensor(d_logits), grads.slot(p, "mlm.weight"),
                    grads.slot(p, "mlm.bias"), &drows);
    for (std::size_t i = 0; i < positions.size(); ++i)
        kernels::axpy(1.0, drows.ptr() + i * hidden.width,
                      d_values.ptr() + (positions[i].row * hidden.length + positions[i].col) * hidden.width,
                      hidden.width);
}

Matrix cls_logits(const ParameterStore& p, const HiddenStates& hidden) {
    require<DataError>(hidden.pooled.size() == hidden.batch * p.config().d_model, "hidden width mismatch");
    Tensor out;
    linear(hidden.pooled, hidden.batch, p.at("cls.weight"), &p.at("cls.bias"), out);
    return to_matrix(std::move(out));
}

void cls_logits_backward(const ParameterStore& p, const HiddenStates& hidden, const Matrix& d_logits,
                         Gradients& grads, Tensor& d_values) {
    Tensor dpooled(hidden.pooled.shape);
    linear_backward(hidden.pooled, hidden.batch, p.at("cls.weight"), to_tensor(d_logits), grads.slot(p, "cls.weight"),
                    grads.slot(p, "cls.bias"), &dpooled);
    for (std::size_t b = 0; b < hidden.batch; ++b)
        kernels::axpy(1.0, dpooled.ptr() + b * hidden.width, d_values.ptr() + b * hidden.length * hidden.width,
                      hidden.width);
}

// --------------------------------------------------------- representations

Tensor pooled_representations(const ParameterStore& params, std::span<const TokenSequence> seqs, std::size_t chunk) {
    const std::size_t d = params.config().d_model;
    Tensor out({seqs.size(), d});
    for (std::size_t begin = 0; begin < seqs.size(); begin += chunk) {
        const std::size_t n = std::min(chunk, seqs.size() - begin);
        const auto hs = encode(params, pad_batch(seqs.subspan(begin, n)));
        std::copy(hs.pooled.data.begin(), hs.pooled.data.end(), out.ptr() + begin * d);
    }
    return out;
}

void dump_representations(const ParameterStore& params, std::span<const TokenSequence> batch,
                          const std::filesystem::path& path) {
    require<DataError>(!batch.empty(), "dump_representations: empty batch");
    const Tensor pooled = pooled_representations(params, batch);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write representation dump: " + path.string());
    const std::size_t d = params.config().d_model;
    char buf[32];
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out << domain_name(batch[i].domain);
        for (std::size_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", pooled.data[i * d + j]);
            out << '\t' << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace lmcal
