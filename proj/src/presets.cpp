#include <algorithm>

#include "lmcal/error.hpp"
#include "lmcal/experiment.hpp"
#include "lmcal/serialize.hpp"

namespace lmcal {

namespace {

// Learning rates are the large-model values multiplied by this factor: the toy
// encoder is trained from scratch on a tiny corpus and needs larger steps.
constexpr double kToyLrScale = 100.0;

struct TaskRow {
    const char* task;
    double adapter_lr, lora_lr, prefix_lr;
    double lambda_pwd;
    std::size_t mlm_batch_size, mlm_max_len;
    double jl_d[3], jl_p[3], jl_p_ls[4]; // alpha, p_mask, beta[, sigma]
    double jl_p_ls_lr;
    bool jl_p_scheduler;
};

constexpr TaskRow kTasks[] = {
    {"nli", 2e-4, 2e-4, 1e-4, 10.0, 32, 16, {0.3, 0.4, 1e-5}, {0.3, 0.4, 1e-5}, {0.5, 0.6, 1e-8, 0.03}, 1e-5, true},
    {"pd", 2e-4, 2e-4, 1e-4, 20.0, 32, 16, {1.0, 0.15, 1e-5}, {4.0, 0.15, 1e-7}, {4.0, 0.15, 1e-9, 0.01}, 1e-5, false},
    {"cr", 1e-4, 1e-4, 2e-4, 1.0, 8, 32, {1.0, 0.3, 1e-9}, {3.0, 0.3, 1e-9}, {3.0, 0.05, 1e-4, 0.05}, 5e-5, true},
};

MethodConfig base(Method m, double reference_lr) {
    MethodConfig c;
    c.method = m;
    c.lr = reference_lr * kToyLrScale;
    c.weight_decay = 0.1;
    c.batch_size = 32;
    c.epochs = 3;
    c.use_scheduler = true;
    return c;
}

std::vector<Preset> build() {
    std::vector<Preset> out;
    const std::string scale = "lr x" + std::to_string(static_cast<int>(kToyLrScale));
    for (const auto& t : kTasks) {
        const std::string task = t.task;
        auto add = [&](const char* name, std::string desc, MethodConfig c) {
            out.push_back({task + "." + name, std::move(desc), std::move(c)});
        };
        add("full_ft", "full fine-tuning, lr 1e-5; " + scale, base(Method::FullFt, 1e-5));

        MethodConfig adapter = base(Method::Adapter, t.adapter_lr);
        add("adapter", "adapter, bottleneck 8 for d_model 64; " + scale, adapter);
        MethodConfig lora = base(Method::Lora, t.lora_lr);
        add("lora", "LoRA on query/value, rank 4, alpha 8 (alpha/rank 2); " + scale, lora);
        MethodConfig prefix = base(Method::Prefix, t.prefix_lr);
        add("prefix", "prefix tuning, 6 prefix vectors per layer; " + scale, prefix);

        MethodConfig mixout = base(Method::Mixout, 1e-5);
        mixout.p_mixout = 0.9;
        add("mixout", "mixout p 0.9 for all tasks; " + scale, mixout);
        MethodConfig pwd = base(Method::Pwd, 1e-5);
        pwd.lambda_pwd = t.lambda_pwd;
        add("pwd", "weight decay toward the pre-trained weights; " + scale, pwd);

        auto joint = [&](Method m, const double* hp, bool ls, double lr, bool kd, bool sched) {
            MethodConfig c = base(m, lr);
            c.alpha_mlm = hp[0];
            c.p_mask = hp[1];
            c.beta_l2 = hp[2];
            c.sigma_ls = ls ? hp[3] : 0.0;
            c.use_kd = kd;
            c.use_scheduler = sched;
            c.mlm_batch_size = t.mlm_batch_size;
            c.mlm_max_len = t.mlm_max_len;
            return c;
        };
        add("jl_d", "joint MLM on task text, no distillation; " + scale, joint(Method::JlD, t.jl_d, false, 1e-5, false, true));
        add("jl_p",
            std::string("joint MLM on pre-training text with distillation") +
                (t.jl_p_scheduler ? "" : ", constant learning rate") + "; " + scale,
            joint(Method::JlP, t.jl_p, false, 1e-5, true, t.jl_p_scheduler));
        add("jl_p_ls", "joint MLM on pre-training text with distillation and label smoothing; " + scale,
            joint(Method::JlP, t.jl_p_ls, true, t.jl_p_ls_lr, true, true));
    }
    return out;
}

} // namespace

const std::vector<Preset>& presets() {
    static const std::vector<Preset> all = build();
    return all;
}

const Preset& find_preset(const std::string& name) {
    const auto& all = presets();
    auto it = std::find_if(all.begin(), all.end(), [&](const Preset& p) { return p.name == name; });
    if (it == all.end()) throw ConfigError("unknown preset '" + name + "'");
    return *it;
}

nlohmann::json preset_to_json(const Preset& preset) {
    return {{"name", preset.name}, {"description", preset.description}, {"method", preset.method}};
}

Preset preset_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, {"name", "description", "method"}, "preset");
    Preset p;
    p.name = j.at("name").get<std::string>();
    p.description = j.value("description", "");
    p.method = j.at("method").get<MethodConfig>();
    return p;
}

} // namespace lmcal
