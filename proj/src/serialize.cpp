#include "lmcal/serialize.hpp"

#include <algorithm>

#include "lmcal/error.hpp"

namespace lmcal {

namespace detail {

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known, const char* what) {
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError(std::string("unknown key '") + key + "' in " + what);
}

} // namespace detail

namespace {

constexpr auto encoder_fields = [](EncoderConfig& c, auto&& f) {
    f("num_layers", c.num_layers);
    f("num_heads", c.num_heads);
    f("d_model", c.d_model);
    f("d_ff", c.d_ff);
    f("max_len", c.max_len);
    f("vocab_size", c.vocab_size);
    f("num_classes", c.num_classes);
};

constexpr auto attachment_fields = [](Attachments& a, auto&& f) {
    f("adapter_dim", a.adapter_dim);
    f("lora_rank", a.lora_rank);
    f("lora_alpha", a.lora_alpha);
    f("prefix", a.prefix);
    f("prefix_len", a.prefix_len);
};

constexpr auto task_fields = [](SyntheticTaskSpec& s, auto&& f) {
    f("class_keywords", s.class_keywords);
    f("id_keyword_count", s.id_keyword_count);
    f("id_fillers", s.id_fillers);
    f("od_fillers", s.od_fillers);
    f("outlier_fillers", s.outlier_fillers);
    f("id_templates", s.id_templates);
    f("od_templates", s.od_templates);
    f("outlier_templates", s.outlier_templates);
    f("domain_shift", s.domain_shift);
    f("min_len", s.min_len);
    f("max_len", s.max_len);
};

constexpr auto method_fields = [](MethodConfig& m, auto&& f) {
    f("method", m.method);
    f("alpha_mlm", m.alpha_mlm);
    f("beta_l2", m.beta_l2);
    f("p_mask", m.p_mask);
    f("sigma_ls", m.sigma_ls);
    f("lambda_pwd", m.lambda_pwd);
    f("p_mixout", m.p_mixout);
    f("use_kd", m.use_kd);
    f("rep_penalty_squared", m.rep_penalty_squared);
    f("mixout_compensate", m.mixout_compensate);
    f("adapter_dim", m.adapter_dim);
    f("lora_rank", m.lora_rank);
    f("lora_alpha", m.lora_alpha);
    f("prefix_len", m.prefix_len);
    f("lr", m.lr);
    f("weight_decay", m.weight_decay);
    f("use_scheduler", m.use_scheduler);
    f("batch_size", m.batch_size);
    f("epochs", m.epochs);
    f("seed", m.seed);
    f("mlm_batch_size", m.mlm_batch_size);
    f("mlm_max_len", m.mlm_max_len);
};

constexpr auto pretrain_fields = [](PretrainConfig& p, auto&& f) {
    f("p_mask", p.p_mask);
    f("lr", p.lr);
    f("weight_decay", p.weight_decay);
    f("batch_size", p.batch_size);
    f("epochs", p.epochs);
    f("use_scheduler", p.use_scheduler);
    // The seed is derived from the experiment seed and not stored.
};

constexpr auto sampler_fields = [](SamplerConfig& s, auto&& f) {
    f("iterations", s.iterations);
    f("length", s.length);
    f("tau", s.tau);
    f("max_retries", s.max_retries);
    f("proposal_temperature", s.proposal_temperature);
    f("target_label", s.target_label);
};

} // namespace

void to_json(nlohmann::json& j, Method m) { j = std::string(method_name(m)); }
void from_json(const nlohmann::json& j, Method& m) {
    if (!j.is_string()) throw ConfigError("method must be a string");
    m = parse_method(j.get<std::string>());
}

void to_json(nlohmann::json& j, const EncoderConfig& c) { detail::write_fields(j, c, encoder_fields); }
void from_json(const nlohmann::json& j, EncoderConfig& c) { detail::read_fields(j, c, encoder_fields, "encoder"); }
void to_json(nlohmann::json& j, const Attachments& a) { detail::write_fields(j, a, attachment_fields); }
void from_json(const nlohmann::json& j, Attachments& a) { detail::read_fields(j, a, attachment_fields, "attachments"); }
void to_json(nlohmann::json& j, const SyntheticTaskSpec& s) { detail::write_fields(j, s, task_fields); }
void from_json(const nlohmann::json& j, SyntheticTaskSpec& s) { detail::read_fields(j, s, task_fields, "task"); }
void to_json(nlohmann::json& j, const MethodConfig& m) { detail::write_fields(j, m, method_fields); }
void from_json(const nlohmann::json& j, MethodConfig& m) { detail::read_fields(j, m, method_fields, "method"); }
void to_json(nlohmann::json& j, const PretrainConfig& p) { detail::write_fields(j, p, pretrain_fields); }
void from_json(const nlohmann::json& j, PretrainConfig& p) { detail::read_fields(j, p, pretrain_fields, "pretrain"); }
void to_json(nlohmann::json& j, const SamplerConfig& s) { detail::write_fields(j, s, sampler_fields); }
void from_json(const nlohmann::json& j, SamplerConfig& s) { detail::read_fields(j, s, sampler_fields, "sampler"); }

} // namespace lmcal
