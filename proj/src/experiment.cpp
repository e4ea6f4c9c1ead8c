#include "lmcal/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lmcal/calibration.hpp"
#include "lmcal/error.hpp"
#include "lmcal/rng.hpp"
#include "lmcal/serialize.hpp"

namespace lmcal {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

namespace {

constexpr auto eval_fields = [](EvalConfig& c, auto&& f) {
    f("ece_bins", c.ece_bins);
    f("histogram_buckets", c.histogram_buckets);
    f("mlm_mask_levels", c.mlm_mask_levels);
};

constexpr auto data_fields = [](DataConfig& c, auto&& f) {
    f("pretrain_size", c.pretrain_size);
    f("mlm_eval_size", c.mlm_eval_size);
    f("train_size", c.train_size);
    f("test_size", c.test_size);
};

constexpr auto paths_fields = [](PathsConfig& c, auto&& f) {
    f("corpus", c.corpus);
    f("checkpoints", c.checkpoints);
    f("dumps", c.dumps);
    f("reports", c.reports);
};

constexpr auto experiment_fields = [](ExperimentConfig& c, auto&& f) {
    f("name", c.name);
    f("seed", c.seed);
    f("encoder", c.encoder);
    f("task", c.task);
    f("pretrain", c.pretrain);
    f("method", c.method);
    f("sampler", c.sampler);
    f("eval", c.eval);
    f("data", c.data);
    f("paths", c.paths);
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace

void to_json(nlohmann::json& j, const EvalConfig& c) { detail::write_fields(j, c, eval_fields); }
void from_json(const nlohmann::json& j, EvalConfig& c) { detail::read_fields(j, c, eval_fields, "eval"); }
void to_json(nlohmann::json& j, const DataConfig& c) { detail::write_fields(j, c, data_fields); }
void from_json(const nlohmann::json& j, DataConfig& c) { detail::read_fields(j, c, data_fields, "data"); }
void to_json(nlohmann::json& j, const PathsConfig& c) { detail::write_fields(j, c, paths_fields); }
void from_json(const nlohmann::json& j, PathsConfig& c) { detail::read_fields(j, c, paths_fields, "paths"); }
void to_json(nlohmann::json& j, const ExperimentConfig& c) { detail::write_fields(j, c, experiment_fields); }
void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    detail::read_fields(j, c, experiment_fields, "experiment");
}

void ExperimentConfig::validate() const {
    task.validate();
    resolved_encoder(*this).validate();
    require(task.max_len + 2 <= encoder.max_len, "task max_len + 2 exceeds encoder max_len");
    method.validate();
    sampler.validate();
    require(eval.ece_bins >= 1 && eval.histogram_buckets >= 1, "bin counts must be >= 1");
    for (double p : eval.mlm_mask_levels) require(p > 0.0 && p < 1.0, "mask levels must lie in (0, 1)");
    require(data.pretrain_size >= 1 && data.mlm_eval_size >= 1 && data.train_size >= 1 && data.test_size >= 1,
            "data sizes must be >= 1");
    require(pretrain.p_mask > 0.0 && pretrain.p_mask < 1.0, "pretrain p_mask must lie in (0, 1)");
}

std::string config_to_string(const ExperimentConfig& config) {
    nlohmann::json j = config;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    ExperimentConfig c = default_experiment_config();
    from_json(j, c);
    return c;
}

ExperimentConfig load_config(const fs::path& path) { return config_from_string(read_text(path)); }
void save_config(const ExperimentConfig& config, const fs::path& path) { write_text(path, config_to_string(config)); }

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

EncoderConfig resolved_encoder(const ExperimentConfig& config) {
    EncoderConfig enc = config.encoder;
    const std::size_t v = build_vocabulary(config.task).size();
    require(enc.vocab_size == 0 || enc.vocab_size == v,
            "encoder vocab_size " + std::to_string(enc.vocab_size) + " does not match the task vocabulary (" +
                std::to_string(v) + ")");
    enc.vocab_size = v;
    enc.num_classes = config.task.num_classes();
    return enc;
}

// ----------------------------------------------------------------- data

ExperimentData generate_data(const ExperimentConfig& c) {
    ExperimentData d;
    d.vocab = build_vocabulary(c.task);
    d.pretrain = generate_corpus(c.task, d.vocab, c.data.pretrain_size, Domain::Pretrain, derive_seed(c.seed, "data:pretrain"));
    d.mlm_eval = generate_corpus(c.task, d.vocab, c.data.mlm_eval_size, Domain::Pretrain, derive_seed(c.seed, "data:mlm-eval"));
    d.train = generate_labeled(c.task, d.vocab, c.data.train_size, Domain::InDomain, derive_seed(c.seed, "data:train"));
    d.id_test = generate_labeled(c.task, d.vocab, c.data.test_size, Domain::InDomain, derive_seed(c.seed, "data:id-test"));
    d.od_test = generate_labeled(c.task, d.vocab, c.data.test_size, Domain::OutOfDomain, derive_seed(c.seed, "data:od-test"));
    d.outlier_test = generate_corpus(c.task, d.vocab, c.data.test_size, Domain::Outlier, derive_seed(c.seed, "data:outlier-test"));
    return d;
}

namespace {

void write_labeled(const fs::path& path, const Vocabulary& vocab, std::span<const LabeledExample> examples) {
    std::vector<TokenSequence> seqs;
    std::vector<int> labels;
    for (const auto& ex : examples) {
        seqs.push_back(ex.sequence);
        labels.push_back(ex.label);
    }
    write_corpus(path, vocab, seqs, labels);
}

std::vector<LabeledExample> read_labeled(const fs::path& path, const Vocabulary& vocab) {
    CorpusFile file = read_corpus(path, vocab);
    require<DataError>(file.labels.size() == file.sequences.size(), "corpus has no labels: " + path.string());
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < file.sequences.size(); ++i) out.push_back({std::move(file.sequences[i]), file.labels[i]});
    return out;
}

} // namespace

void write_data(const ExperimentData& d, const fs::path& dir) {
    fs::create_directories(dir);
    d.vocab.save(dir / "vocab.txt");
    write_corpus(dir / "pretrain.txt", d.vocab, d.pretrain);
    write_corpus(dir / "mlm_eval.txt", d.vocab, d.mlm_eval);
    write_labeled(dir / "train.txt", d.vocab, d.train);
    write_labeled(dir / "id_test.txt", d.vocab, d.id_test);
    write_labeled(dir / "od_test.txt", d.vocab, d.od_test);
    write_corpus(dir / "outlier_test.txt", d.vocab, d.outlier_test);
}

ExperimentData read_data(const fs::path& dir) {
    require<IoError>(fs::exists(dir / "vocab.txt"), "missing corpus directory or vocabulary: " + dir.string());
    ExperimentData d;
    d.vocab = Vocabulary::load(dir / "vocab.txt");
    d.pretrain = read_corpus(dir / "pretrain.txt", d.vocab).sequences;
    d.mlm_eval = read_corpus(dir / "mlm_eval.txt", d.vocab).sequences;
    d.train = read_labeled(dir / "train.txt", d.vocab);
    d.id_test = read_labeled(dir / "id_test.txt", d.vocab);
    d.od_test = read_labeled(dir / "od_test.txt", d.vocab);
    d.outlier_test = read_corpus(dir / "outlier_test.txt", d.vocab).sequences;
    return d;
}

// ------------------------------------------------------------ operations

namespace {

std::vector<TokenSequence> sequences_of(std::span<const LabeledExample> examples) {
    std::vector<TokenSequence> out;
    for (const auto& ex : examples) out.push_back(ex.sequence);
    return out;
}

std::string mlm_calibration_json(std::span<const MlmCalibrationLevel> levels) {
    auto arr = nlohmann::json::array();
    for (const auto& l : levels)
        arr.push_back({{"p_mask", l.p_mask},
                       {"n", l.report.n},
                       {"accuracy", l.report.accuracy},
                       {"mean_confidence", l.report.mean_confidence},
                       {"ece", l.report.ece}});
    return nlohmann::json{{"levels", arr}}.dump(2) + "\n";
}

} // namespace

PretrainOutput run_pretrain(const ExperimentConfig& config, const fs::path& out_dir) {
    config.validate();
    fs::create_directories(out_dir);
    save_config(config, out_dir / "config.json");

    const ExperimentData data = generate_data(config);
    write_data(data, out_dir / config.paths.corpus);

    ParameterStore params = init_params(resolved_encoder(config), derive_seed(config.seed, "init"));
    PretrainConfig pc = config.pretrain;
    pc.seed = derive_seed(config.seed, "pretrain");
    TrainResult result = pretrain(pc, data.pretrain, std::move(params));

    PretrainOutput out;
    out.checkpoint = out_dir / config.paths.checkpoints / "pretrained.ckpt";
    fs::create_directories(out.checkpoint.parent_path());
    save_checkpoint(result.params, out.checkpoint,
                    {{"role", "pretrained"}, {"experiment", config.name}, {"seed", std::to_string(config.seed)}});
    write_text(out_dir / "logs" / "pretrain.jsonl", result.log.to_jsonl());

    const auto levels =
        mlm_calibration_eval(model_mlm_scorer(result.params), data.mlm_eval, config.eval.mlm_mask_levels,
                             result.params.config().vocab_size, derive_seed(config.seed, "mlm-eval"), config.eval.ece_bins);
    write_text(out_dir / config.paths.reports / "mlm_calibration.json", mlm_calibration_json(levels));

    const fs::path reps = out_dir / config.paths.dumps / "pretrained";
    fs::create_directories(reps);
    dump_representations(result.params, sequences_of(data.id_test), reps / "id.tsv");
    dump_representations(result.params, sequences_of(data.od_test), reps / "od.tsv");
    dump_representations(result.params, data.outlier_test, reps / "outlier.tsv");
    out.log = std::move(result.log);
    return out;
}

FinetuneOutput run_finetune(const ExperimentConfig& config, const fs::path& pretrained_checkpoint,
                            const fs::path& experiment_dir, const std::string& label) {
    config.validate();
    require<IoError>(fs::exists(pretrained_checkpoint), "pre-trained checkpoint not found: " + pretrained_checkpoint.string());
    std::map<std::string, std::string> meta;
    ParameterStore params = load_checkpoint(pretrained_checkpoint, &meta);
    require(meta["role"] == "pretrained", "checkpoint is not a pre-trained model: " + pretrained_checkpoint.string());
    require(params.config() == resolved_encoder(config), "encoder configuration differs from the pre-trained checkpoint");
    require(!label.empty() && label.find('/') == std::string::npos, "invalid run label '" + label + "'");

    const ExperimentData data = read_data(experiment_dir / config.paths.corpus);
    reset_classifier(params, derive_seed(config.method.seed, "head"));
    params = snapshot_pretrained(std::move(params));

    const EvalSplits eval{data.id_test, data.od_test, data.outlier_test};
    TrainResult result = train(config.method, data.train, data.pretrain, std::move(params), &eval, config.eval.ece_bins);

    FinetuneOutput out;
    out.run_dir = experiment_dir / "runs" / (label + "-seed" + std::to_string(config.method.seed));
    fs::create_directories(out.run_dir);
    save_config(config, out.run_dir / "config.json");
    write_text(out.run_dir / "run.json",
               nlohmann::json{{"label", label}, {"seed", config.method.seed}}.dump(2) + "\n");
    out.checkpoint = out.run_dir / "finetuned.ckpt";
    save_checkpoint(result.params, out.checkpoint,
                    {{"role", "finetuned"},
                     {"label", label},
                     {"method", std::string(method_name(config.method.method))},
                     {"seed", std::to_string(config.method.seed)}});
    write_text(out.run_dir / "train_log.jsonl", result.log.to_jsonl());
    run_evaluate(out.checkpoint, {Split::InDomain, Split::OutOfDomain, Split::Outlier},
                 experiment_dir / config.paths.corpus, out.run_dir, config.eval);
    out.log = std::move(result.log);
    return out;
}

Split parse_split(const std::string& name) {
    if (name == "id") return Split::InDomain;
    if (name == "od") return Split::OutOfDomain;
    if (name == "outlier") return Split::Outlier;
    throw ConfigError("unknown split '" + name + "' (expected id, od or outlier)");
}

std::string split_name(Split s) {
    switch (s) {
    case Split::InDomain: return "id";
    case Split::OutOfDomain: return "od";
    case Split::Outlier: return "outlier";
    }
    return "?";
}

std::vector<SplitEvaluation> run_evaluate(const fs::path& checkpoint, const std::vector<Split>& splits,
                                          const fs::path& corpus_dir, const fs::path& out_dir, const EvalConfig& eval) {
    require<IoError>(fs::exists(checkpoint), "checkpoint not found: " + checkpoint.string());
    const ParameterStore params = load_checkpoint(checkpoint);
    const ExperimentData data = read_data(corpus_dir);
    std::vector<SplitEvaluation> out;
    for (Split s : splits) {
        std::vector<PredictionRecord> records;
        std::vector<TokenSequence> seqs;
        switch (s) {
        case Split::InDomain:
            records = predict_labeled(params, data.id_test);
            seqs = sequences_of(data.id_test);
            break;
        case Split::OutOfDomain:
            records = predict_labeled(params, data.od_test);
            seqs = sequences_of(data.od_test);
            break;
        case Split::Outlier:
            records = predict_unlabeled(params, data.outlier_test);
            seqs = data.outlier_test;
            break;
        }
        const std::string name = split_name(s);
        SplitEvaluation ev{s, out_dir / "dumps" / (name + ".jsonl"), out_dir / "reports" / (name + ".json"),
                           out_dir / "reps" / (name + ".tsv")};
        write_text(ev.dump, prediction_dump(records));
        write_text(ev.report, report_json(records, eval.ece_bins, eval.histogram_buckets));
        fs::create_directories(ev.representations.parent_path());
        dump_representations(params, seqs, ev.representations);
        out.push_back(ev);
    }
    return out;
}

std::vector<SampleLine> run_sample(const fs::path& checkpoint, const SamplerConfig& sampler, std::size_t count,
                                   std::uint64_t seed, const fs::path& vocab_path, const fs::path& out_file) {
    require<IoError>(fs::exists(checkpoint), "checkpoint not found: " + checkpoint.string());
    sampler.validate();
    const ParameterStore params = load_checkpoint(checkpoint);
    const Vocabulary vocab = Vocabulary::load(vocab_path);
    require(vocab.size() == params.config().vocab_size, "vocabulary does not match the checkpoint");
    const EncoderSamplerModel model(params);

    std::vector<SampleLine> lines;
    std::string text;
    for (std::size_t i = 0; i < count; ++i) {
        SampleLine line;
        line.index = i;
        line.target_label = sampler.target_label;
        nlohmann::json j{{"index", i}, {"target_label", sampler.target_label}};
        try {
            const SampleResult r = mask_predict_sample(model, sampler, derive_seed(seed, "sample", i));
            line.ok = true;
            line.attempts = r.attempts;
            line.confidence = r.confidence;
            for (std::size_t k = 1; k + 1 < r.sequence.ids.size(); ++k) {
                if (k > 1) line.text += ' ';
                line.text += vocab.token(r.sequence.ids[k]);
            }
            j["ok"] = true;
            j["attempts"] = line.attempts;
            j["confidence"] = line.confidence;
            j["text"] = line.text;
        } catch (const SamplingFailure& e) {
            line.failed_iteration = e.iteration();
            j["ok"] = false;
            j["failed_iteration"] = e.iteration();
            j["error"] = e.what();
        }
        text += j.dump() + "\n";
        lines.push_back(std::move(line));
    }
    write_text(out_file, text);
    return lines;
}

// ---------------------------------------------------------------- report

namespace {

struct Stats {
    double mean = 0.0;
    double std = 0.0;
};

Stats stats_of(const std::vector<double>& xs) {
    Stats s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

struct RunSummary {
    std::string label;
    std::uint64_t seed = 0;
    ExperimentConfig config;
    double id_acc = 0, id_ece = 0, od_acc = 0, od_ece = 0, outlier_conf = 0;
    double l2_distance = std::nan("");
};

std::vector<std::vector<double>> read_representations(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag, cell;
        std::getline(ls, tag, '\t');
        std::vector<double> row;
        while (std::getline(ls, cell, '\t')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string fmt(double v, int precision = 2) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(precision);
    ss << v;
    return ss.str();
}

} // namespace

double mean_representation_distance(const fs::path& a, const fs::path& b) {
    const auto ra = read_representations(a);
    const auto rb = read_representations(b);
    require<DataError>(ra.size() == rb.size() && !ra.empty(), "representation dumps differ in row count");
    double total = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        require<DataError>(ra[i].size() == rb[i].size(), "representation dumps differ in width");
        double ss = 0.0;
        for (std::size_t k = 0; k < ra[i].size(); ++k) ss += (ra[i][k] - rb[i][k]) * (ra[i][k] - rb[i][k]);
        total += std::sqrt(ss);
    }
    return total / static_cast<double>(ra.size());
}

ReportOutput run_report(const fs::path& experiment_dir) {
    const fs::path runs_dir = experiment_dir / "runs";
    require<IoError>(fs::is_directory(runs_dir), "no runs directory in " + experiment_dir.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(runs_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "run.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    require<DataError>(!dirs.empty(), "no completed runs in " + runs_dir.string());

    std::vector<RunSummary> runs;
    for (const auto& dir : dirs) {
        RunSummary r;
        const auto meta = nlohmann::json::parse(read_text(dir / "run.json"));
        r.label = meta.at("label").get<std::string>();
        r.seed = meta.at("seed").get<std::uint64_t>();
        r.config = load_config(dir / "config.json");
        const auto id = nlohmann::json::parse(read_text(dir / "reports" / "id.json"));
        const auto od = nlohmann::json::parse(read_text(dir / "reports" / "od.json"));
        r.id_acc = id.at("accuracy").get<double>();
        r.id_ece = id.at("ece").get<double>();
        r.od_acc = od.at("accuracy").get<double>();
        r.od_ece = od.at("ece").get<double>();
        if (fs::exists(dir / "reports" / "outlier.json"))
            r.outlier_conf = nlohmann::json::parse(read_text(dir / "reports" / "outlier.json")).at("mean_confidence");
        const fs::path base = experiment_dir / r.config.paths.dumps / "pretrained" / "id.tsv";
        if (fs::exists(base) && fs::exists(dir / "reps" / "id.tsv"))
            r.l2_distance = mean_representation_distance(dir / "reps" / "id.tsv", base);
        runs.push_back(std::move(r));
    }

    // Group by label; every member must share the configuration except its seed.
    std::vector<std::string> labels;
    std::map<std::string, std::vector<const RunSummary*>> groups;
    for (const auto& r : runs) {
        if (!groups.count(r.label)) labels.push_back(r.label);
        auto& g = groups[r.label];
        if (!g.empty()) {
            ExperimentConfig a = g.front()->config, b = r.config;
            a.method.seed = b.method.seed = 0;
            require(a == b, "inconsistent run configs in aggregate '" + r.label + "'");
        }
        g.push_back(&r);
    }

    struct Row {
        std::string label;
        const ExperimentConfig* config;
        std::size_t n;
        Stats id_acc, id_ece, od_acc, od_ece, outlier_conf, l2;
    };
    std::vector<Row> rows;
    for (const auto& label : labels) {
        const auto& g = groups[label];
        auto collect = [&](auto field) {
            std::vector<double> xs;
            for (const auto* r : g) xs.push_back(field(*r));
            return stats_of(xs);
        };
        rows.push_back({label, &g.front()->config, g.size(), collect([](const RunSummary& r) { return 100 * r.id_acc; }),
                        collect([](const RunSummary& r) { return 100 * r.id_ece; }),
                        collect([](const RunSummary& r) { return 100 * r.od_acc; }),
                        collect([](const RunSummary& r) { return 100 * r.od_ece; }),
                        collect([](const RunSummary& r) { return r.outlier_conf; }),
                        collect([](const RunSummary& r) { return r.l2_distance; })});
    }

    std::ostringstream table;
    std::size_t width = 6;
    for (const auto& r : rows) width = std::max(width, r.label.size());
    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(s.size(), w), ' ');
        return s;
    };
    auto cell = [&](const Stats& s) { return pad(fmt(s.mean) + " ± " + fmt(s.std), 16); };
    table << pad("method", width) << "  " << pad("seeds", 5) << "  " << pad("ID acc", 16) << pad("ID ECE", 16)
          << pad("OD acc", 16) << pad("OD ECE", 16) << "\n";
    for (const auto& r : rows)
        table << pad(r.label, width) << "  " << pad(std::to_string(r.n), 5) << "  " << cell(r.id_acc) << cell(r.id_ece)
              << cell(r.od_acc) << cell(r.od_ece) << "\n";

    std::ostringstream tsv;
    tsv << "method\tseeds\tid_acc_mean\tid_acc_std\tid_ece_mean\tid_ece_std\tod_acc_mean\tod_acc_std\tod_ece_mean\t"
           "od_ece_std\toutlier_conf_mean\toutlier_conf_std\n";
    for (const auto& r : rows)
        tsv << r.label << '\t' << r.n << '\t' << r.id_acc.mean << '\t' << r.id_acc.std << '\t' << r.id_ece.mean << '\t'
            << r.id_ece.std << '\t' << r.od_acc.mean << '\t' << r.od_acc.std << '\t' << r.od_ece.mean << '\t'
            << r.od_ece.std << '\t' << r.outlier_conf.mean << '\t' << r.outlier_conf.std << '\n';

    auto sweep = [&](bool by_alpha) {
        std::vector<const Row*> sel;
        for (const auto& r : rows) {
            const Method m = r.config->method.method;
            if (is_joint(m) || m == Method::FullFt) sel.push_back(&r);
        }
        std::stable_sort(sel.begin(), sel.end(), [&](const Row* a, const Row* b) {
            return by_alpha ? a->config->method.alpha_mlm < b->config->method.alpha_mlm
                            : a->config->method.beta_l2 < b->config->method.beta_l2;
        });
        std::ostringstream s;
        s.precision(17);
        s << "method\talpha_mlm\tbeta_l2\tseeds\tid_acc\tid_ece\tod_acc\tod_ece\tl2_distance\n";
        for (const Row* r : sel)
            s << r->label << '\t' << r->config->method.alpha_mlm << '\t' << r->config->method.beta_l2 << '\t' << r->n
              << '\t' << r->id_acc.mean << '\t' << r->id_ece.mean << '\t' << r->od_acc.mean << '\t' << r->od_ece.mean
              << '\t' << r->l2.mean << '\n';
        return s.str();
    };

    ReportOutput out;
    const fs::path reports = experiment_dir / runs.front().config.paths.reports;
    out.table = reports / "table.txt";
    out.alpha_sweep = reports / "alpha_sweep.tsv";
    out.beta_sweep = reports / "beta_sweep.tsv";
    out.table_text = table.str();
    write_text(out.table, out.table_text);
    write_text(reports / "table.tsv", tsv.str());
    write_text(out.alpha_sweep, sweep(true));
    write_text(out.beta_sweep, sweep(false));
    return out;
}

} // namespace lmcal
