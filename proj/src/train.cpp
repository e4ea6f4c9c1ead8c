#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "lmcal/calibration.hpp"
#include "lmcal/error.hpp"
#include "lmcal/rng.hpp"
#include "lmcal/tuning.hpp"

namespace lmcal {

namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::FullFt, "FULL_FT"}, {Method::JlD, "JL_D"},       {Method::JlP, "JL_P"},       {Method::Adapter, "ADAPTER"},
    {Method::Lora, "LORA"},      {Method::Prefix, "PREFIX"}, {Method::Mixout, "MIXOUT"}, {Method::Pwd, "PWD"},
};

} // namespace

std::string_view method_name(Method m) {
    for (const auto& [method, name] : kMethodNames)
        if (method == m) return name;
    throw ConfigError("unknown method");
}

Method parse_method(std::string_view name) {
    for (const auto& [method, text] : kMethodNames)
        if (text == name) return method;
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

bool is_joint(Method m) { return m == Method::JlD || m == Method::JlP; }
bool is_peft(Method m) { return m == Method::Adapter || m == Method::Lora || m == Method::Prefix; }

void MethodConfig::validate() const {
    require(alpha_mlm >= 0.0, "alpha_mlm must be >= 0");
    require(beta_l2 >= 0.0, "beta_l2 must be >= 0");
    require(p_mask > 0.0 && p_mask < 1.0, "p_mask must lie in (0, 1)");
    require(sigma_ls >= 0.0 && sigma_ls < 1.0, "sigma_ls must lie in [0, 1)");
    require(lambda_pwd >= 0.0, "lambda_pwd must be >= 0");
    require(p_mixout >= 0.0 && p_mixout < 1.0, "p_mixout must lie in [0, 1)");
    require(lr > 0.0, "lr must be positive");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    const std::string name(method_name(method));
    require(p_mixout == 0.0 || method == Method::Mixout, "p_mixout is set but method is " + name);
    require(lambda_pwd == 0.0 || method == Method::Pwd, "lambda_pwd is set but method is " + name);
    require(alpha_mlm == 0.0 || is_joint(method), "alpha_mlm is set but method is " + name);
    require(!use_kd || is_joint(method), "use_kd is set but method is " + name);
    if (is_joint(method)) {
        require(mlm_batch_size >= 1, "mlm_batch_size must be >= 1");
        require(mlm_max_len >= 3, "mlm_max_len must leave room for CLS, SEP and one token");
    }
    if (method == Method::Adapter) require(adapter_dim >= 1, "adapter_dim must be >= 1");
    if (method == Method::Lora) require(lora_rank >= 1, "lora_rank must be >= 1");
}

std::string TrainingLog::to_jsonl() const {
    std::string out;
    for (const auto& s : steps) {
        nlohmann::json j{{"type", "step"}, {"step", s.step}, {"lr", s.lr}, {"loss", s.loss.total}};
        j["components"] = s.loss.components;
        out += j.dump() + "\n";
    }
    for (const auto& e : epochs) {
        nlohmann::json j{{"type", "epoch"},
                         {"epoch", e.epoch},
                         {"split", domain_name(e.split)},
                         {"n", e.n},
                         {"mean_confidence", e.mean_confidence}};
        if (e.accuracy) j["accuracy"] = *e.accuracy;
        if (e.ece) j["ece"] = *e.ece;
        out += j.dump() + "\n";
    }
    return out;
}

namespace {

void evaluate_epoch(const ParameterStore& params, const EvalSplits& eval, std::size_t epoch, std::size_t num_bins,
                    TrainingLog& log) {
    CheckpointRecords records;
    if (!eval.in_domain.empty()) records[Domain::InDomain] = predict_labeled(params, eval.in_domain);
    if (!eval.out_of_domain.empty()) records[Domain::OutOfDomain] = predict_labeled(params, eval.out_of_domain);
    if (!eval.outlier.empty()) records[Domain::Outlier] = predict_unlabeled(params, eval.outlier);
    for (auto& rec : records[Domain::Outlier]) rec.domain = Domain::Outlier;
    if (records[Domain::Outlier].empty()) records.erase(Domain::Outlier);
    const CheckpointRecords one[] = {std::move(records)};
    for (const auto& row : track_confidence(one, num_bins))
        log.epochs.push_back({epoch, row.domain, row.n, row.accuracy, row.mean_confidence, row.ece});
}

ParameterStore with_attachments(const MethodConfig& c, ParameterStore params) {
    const std::uint64_t seed = derive_seed(c.seed, "peft");
    switch (c.method) {
    case Method::Adapter: return attach_adapter(std::move(params), c.adapter_dim, seed);
    case Method::Lora: return attach_lora(std::move(params), c.lora_rank, c.lora_alpha, seed);
    case Method::Prefix: return attach_prefix(std::move(params), c.prefix_len, seed);
    default: return params;
    }
}

} // namespace

TrainResult train(const MethodConfig& config, std::span<const LabeledExample> task_train,
                  std::span<const TokenSequence> pretrain_corpus, ParameterStore params, const EvalSplits* eval,
                  std::size_t num_bins) {
    config.validate();
    require(params.has_snapshot(), "fine-tuning requires a pre-trained snapshot");
    require<DataError>(!task_train.empty(), "empty training set");
    params = with_attachments(config, std::move(params));
    const ParameterStore& teacher = params.snapshot();

    std::vector<TokenSequence> mlm_pool;
    if (is_joint(config.method) && config.alpha_mlm > 0.0) {
        if (config.method == Method::JlD) {
            for (const auto& ex : task_train)
                if (ex.sequence.domain == Domain::InDomain) mlm_pool.push_back(ex.sequence);
            require<DataError>(!mlm_pool.empty(), "JL_D needs in-domain task text");
        } else {
            for (const auto& seq : pretrain_corpus)
                if (seq.domain == Domain::Pretrain) mlm_pool.push_back(seq);
            require<DataError>(!mlm_pool.empty(), "JL_P needs a PRETRAIN-domain corpus");
        }
    }

    JointWeights weights;
    weights.alpha_mlm = config.alpha_mlm;
    weights.beta_l2 = config.beta_l2;
    weights.smoothing.sigma = config.sigma_ls;
    weights.use_kd = config.use_kd;
    weights.rep_penalty_squared = config.rep_penalty_squared;

    TrainingLog log;
    if (eval) evaluate_epoch(params, *eval, 0, num_bins, log);

    const std::size_t n = task_train.size();
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    OptimizerState state;
    state.total_steps = steps_per_epoch * config.epochs;

    std::vector<std::size_t> order(n);
    std::vector<LabeledExample> batch;
    std::vector<TokenSequence> mlm_seqs;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t step = state.step;
            batch.clear();
            for (std::size_t i = start; i < std::min(n, start + config.batch_size); ++i)
                batch.push_back(task_train[order[i]]);

            MaskedBatch mlm_batch;
            const bool with_mlm = !mlm_pool.empty();
            if (with_mlm) {
                mlm_seqs.clear();
                Rng pick(derive_seed(config.seed, "mlm-batch", step));
                std::uniform_int_distribution<std::size_t> idx(0, mlm_pool.size() - 1);
                for (std::size_t i = 0; i < config.mlm_batch_size; ++i) {
                    mlm_seqs.push_back(mlm_pool[idx(pick)]);
                    ++log.mlm_sources[mlm_seqs.back().domain];
                }
                mlm_batch = corrupt_joint(mlm_seqs, config.p_mask, derive_seed(config.seed, "mlm-mask", step),
                                          config.mlm_max_len);
            }

            Gradients grads;
            LossValue loss;
            if (config.method == Method::Mixout && config.p_mixout > 0.0) {
                MixoutDraw draw = mixout_apply(params, teacher, config.p_mixout,
                                               derive_seed(config.seed, "mixout", step), config.mixout_compensate);
                loss = loss_joint(draw.effective, &teacher, batch, nullptr, weights, &grads);
                mixout_backward(draw, grads);
            } else {
                loss = loss_joint(params, &teacher, batch, with_mlm ? &mlm_batch : nullptr, weights, &grads);
            }
            const double lr = scheduled_lr(config.lr, step, state.total_steps, config.use_scheduler);
            optimizer_step(state, params, grads, config);
            log.steps.push_back({state.step, lr, std::move(loss)});
        }
        if (eval) evaluate_epoch(params, *eval, epoch, num_bins, log);
    }
    return {std::move(params), std::move(log)};
}

TrainResult pretrain(const PretrainConfig& config, std::span<const TokenSequence> corpus, ParameterStore params) {
    require(config.p_mask > 0.0 && config.p_mask < 1.0, "p_mask must lie in (0, 1)");
    require(config.batch_size >= 1, "batch_size must be >= 1");
    require<DataError>(!corpus.empty(), "pre-training corpus is empty");
    require(!params.has_snapshot(), "parameters already carry a pre-trained snapshot");

    MethodConfig opt;
    opt.lr = config.lr;
    opt.weight_decay = config.weight_decay;
    opt.use_scheduler = config.use_scheduler;

    const std::size_t n = corpus.size();
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    OptimizerState state;
    state.total_steps = steps_per_epoch * config.epochs;
    const std::size_t vocab = params.config().vocab_size;
    const std::size_t max_len = params.config().max_len;

    TrainingLog log;
    std::vector<std::size_t> order(n);
    std::vector<TokenSequence> batch;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(config.seed, "pretrain-shuffle", epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t step = state.step;
            batch.clear();
            for (std::size_t i = start; i < std::min(n, start + config.batch_size); ++i) batch.push_back(corpus[order[i]]);
            MaskedBatch masked =
                corrupt_pretrain(batch, vocab, config.p_mask, derive_seed(config.seed, "pretrain-mask", step), max_len);
            Gradients grads;
            LossValue loss = loss_mlm(params, masked, &grads);
            const double lr = scheduled_lr(config.lr, step, state.total_steps, config.use_scheduler);
            optimizer_step(state, params, grads, opt);
            log.steps.push_back({state.step, lr, std::move(loss)});
        }
    }
    round_to_float32(params);
    return {snapshot_pretrained(std::move(params)), std::move(log)};
}

} // namespace lmcal
