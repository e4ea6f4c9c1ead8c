#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lmcal/error.hpp"
#include "lmcal/experiment.hpp"
#include "lmcal/serialize.hpp"

namespace fs = std::filesystem;
using namespace lmcal;

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
    return code;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

struct Common {
    std::string config;
    std::string out;
    std::string preset;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
    cmd->add_option("--config", c.config, "experiment configuration file (JSON)");
    cmd->add_option("--seed", c.seed, "seed override");
    auto* out = cmd->add_option("--out", c.out, "output directory");
    if (out_required) out->required();
    cmd->add_option("--preset", c.preset, "named fine-tuning preset");
}

ExperimentConfig load_or_default(const std::string& path) {
    return path.empty() ? default_experiment_config() : load_config(path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibration experiments for small masked language models"};
    app.require_subcommand(1);

    Common pre_opts;
    auto* pre = app.add_subcommand("pretrain", "generate corpora and pre-train the encoder with masked LM");
    add_common(pre, pre_opts, true);

    Common ft_opts;
    std::string ft_pretrained, ft_label;
    std::optional<std::size_t> ft_epochs;
    auto* ft = app.add_subcommand("finetune", "fine-tune a pre-trained checkpoint and evaluate every split");
    add_common(ft, ft_opts, true);
    ft->add_option("--pretrained", ft_pretrained, "pre-trained checkpoint (default OUT/checkpoints/pretrained.ckpt)");
    ft->add_option("--label", ft_label, "run label (default: preset or method name)");
    ft->add_option("--epochs", ft_epochs, "override the number of epochs");

    Common ev_opts;
    std::string ev_checkpoint, ev_splits = "id,od,outlier", ev_corpus;
    auto* ev = app.add_subcommand("evaluate", "write prediction dumps, calibration reports and representations");
    add_common(ev, ev_opts, true);
    ev->add_option("--checkpoint", ev_checkpoint, "checkpoint to evaluate")->required();
    ev->add_option("--splits", ev_splits, "comma-separated splits: id, od, outlier");
    ev->add_option("--corpus", ev_corpus, "corpus directory")->required();

    Common sa_opts;
    std::string sa_checkpoint, sa_vocab;
    std::size_t sa_count = 10;
    std::optional<int> sa_label;
    std::optional<std::size_t> sa_iterations, sa_length, sa_retries;
    std::optional<double> sa_tau, sa_temperature;
    auto* sa = app.add_subcommand("sample", "label-conditioned mask-predict sampling");
    add_common(sa, sa_opts, true);
    sa->add_option("--checkpoint", sa_checkpoint, "fine-tuned checkpoint")->required();
    sa->add_option("--vocab", sa_vocab, "vocabulary file")->required();
    sa->add_option("--num-samples", sa_count, "number of samples");
    sa->add_option("--label", sa_label, "target label");
    sa->add_option("--iterations", sa_iterations, "decoding iterations T");
    sa->add_option("--length", sa_length, "sequence length N");
    sa->add_option("--tau", sa_tau, "acceptance scaling constant");
    sa->add_option("--temperature", sa_temperature, "proposal temperature");
    sa->add_option("--max-retries", sa_retries, "proposals per iteration before failing");

    Common re_opts;
    auto* re = app.add_subcommand("report", "aggregate runs into a comparison table and sweep files");
    add_common(re, re_opts, true);

    std::string ps_out;
    auto* ps = app.add_subcommand("presets", "list presets or write them as JSON files");
    ps->add_option("--out", ps_out, "directory for <name>.json files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 64);
    }

    try {
        if (*pre) {
            ExperimentConfig c = load_or_default(pre_opts.config);
            if (pre_opts.seed) c.seed = *pre_opts.seed;
            if (!pre_opts.preset.empty()) c.method = find_preset(pre_opts.preset).method;
            const auto out = run_pretrain(c, pre_opts.out);
            std::cout << nlohmann::json{{"checkpoint", out.checkpoint.string()}, {"steps", out.log.steps.size()}}.dump()
                      << "\n";
        } else if (*ft) {
            const fs::path dir = ft_opts.out;
            ExperimentConfig c = ft_opts.config.empty() ? load_config(dir / "config.json") : load_config(ft_opts.config);
            std::string label = ft_label;
            if (!ft_opts.preset.empty()) {
                const std::uint64_t keep = c.method.seed;
                c.method = find_preset(ft_opts.preset).method;
                c.method.seed = keep;
                if (label.empty()) label = ft_opts.preset;
            }
            if (ft_opts.seed) c.method.seed = *ft_opts.seed;
            if (ft_epochs) c.method.epochs = *ft_epochs;
            if (label.empty()) label = lowercase(method_name(c.method.method));
            const fs::path pretrained =
                ft_pretrained.empty() ? dir / c.paths.checkpoints / "pretrained.ckpt" : fs::path(ft_pretrained);
            const auto out = run_finetune(c, pretrained, dir, label);
            std::cout << nlohmann::json{{"run_dir", out.run_dir.string()}, {"checkpoint", out.checkpoint.string()}}.dump()
                      << "\n";
        } else if (*ev) {
            std::vector<Split> splits;
            for (const auto& s : split_list(ev_splits)) splits.push_back(parse_split(s));
            require(!splits.empty(), "no splits requested");
            EvalConfig eval = ev_opts.config.empty() ? EvalConfig{} : load_config(ev_opts.config).eval;
            const auto out = run_evaluate(ev_checkpoint, splits, ev_corpus, ev_opts.out, eval);
            auto arr = nlohmann::json::array();
            for (const auto& e : out) arr.push_back({{"split", split_name(e.split)}, {"report", e.report.string()}});
            std::cout << arr.dump() << "\n";
        } else if (*sa) {
            SamplerConfig s = sa_opts.config.empty() ? SamplerConfig{} : load_config(sa_opts.config).sampler;
            if (sa_label) s.target_label = *sa_label;
            if (sa_iterations) s.iterations = *sa_iterations;
            if (sa_length) s.length = *sa_length;
            if (sa_tau) s.tau = *sa_tau;
            if (sa_temperature) s.proposal_temperature = *sa_temperature;
            if (sa_retries) s.max_retries = *sa_retries;
            const fs::path out = fs::path(sa_opts.out) / "samples.jsonl";
            const auto lines = run_sample(sa_checkpoint, s, sa_count, sa_opts.seed.value_or(0), sa_vocab, out);
            std::size_t ok = 0;
            for (const auto& l : lines) ok += l.ok ? 1 : 0;
            std::cout << nlohmann::json{{"samples", out.string()}, {"ok", ok}, {"failed", lines.size() - ok}}.dump()
                      << "\n";
        } else if (*re) {
            const auto out = run_report(re_opts.out);
            std::cout << out.table_text;
        } else if (*ps) {
            for (const auto& p : presets()) {
                if (ps_out.empty()) {
                    std::cout << p.name << "\t" << p.description << "\n";
                    continue;
                }
                fs::create_directories(ps_out);
                std::ofstream f(fs::path(ps_out) / (p.name + ".json"));
                f << preset_to_json(p).dump(2) << "\n";
                if (!f) throw IoError("cannot write preset " + p.name);
            }
        }
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const DataError& e) {
        return fail("data", e.what(), 3);
    } catch (const IoError& e) {
        return fail("io", e.what(), 4);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
    return 0;
}
