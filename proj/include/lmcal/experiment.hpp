#pragma once

// Experiment orchestration behind the command-line tool: configuration
// files, presets, directory layout and the five subcommands.
//
// Layout of an experiment directory DIR:
//   DIR/config.json                    resolved experiment configuration
//   DIR/corpus/                        vocab.txt and generated corpora (+ manifests)
//   DIR/checkpoints/pretrained.ckpt    pre-trained model (never rewritten by later steps)
//   DIR/logs/pretrain.jsonl            MLM loss curve
//   DIR/reports/mlm_calibration.json   MLM ECE per mask level on held-out pre-training text
//   DIR/dumps/pretrained/<split>.tsv   pooled representations of the pre-trained encoder
//   DIR/runs/<label>-seed<k>/          one fine-tuning run (config, checkpoint, log, evaluation)

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmcal/corpus.hpp"
#include "lmcal/encoder.hpp"
#include "lmcal/sampler.hpp"
#include "lmcal/tuning.hpp"

namespace lmcal {

struct EvalConfig {
    std::size_t ece_bins = 10;
    std::size_t histogram_buckets = 10;
    std::vector<double> mlm_mask_levels{0.15, 0.3, 0.5};
    bool operator==(const EvalConfig&) const = default;
};

struct DataConfig {
    std::size_t pretrain_size = 6000;
    std::size_t mlm_eval_size = 1000;
    std::size_t train_size = 600;
    std::size_t test_size = 500; // per split: ID, OD, outlier
    bool operator==(const DataConfig&) const = default;
};

struct PathsConfig {
    std::string corpus = "corpus";
    std::string checkpoints = "checkpoints";
    std::string dumps = "dumps";
    std::string reports = "reports";
    bool operator==(const PathsConfig&) const = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    /// Data, initialization and pre-training seed. Fine-tuning runs use method.seed.
    std::uint64_t seed = 0;
    EncoderConfig encoder;
    SyntheticTaskSpec task = default_task_spec();
    PretrainConfig pretrain;
    MethodConfig method;
    SamplerConfig sampler;
    EvalConfig eval;
    DataConfig data;
    PathsConfig paths;

    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);
void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void to_json(nlohmann::json& j, const PathsConfig& c);
void from_json(const nlohmann::json& j, PathsConfig& c);

/// Canonical text form (sorted keys, two-space indent, trailing newline).
std::string config_to_string(const ExperimentConfig& config);
ExperimentConfig config_from_string(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

/// Default small configuration: 2 layers, d_model 64, three classes.
ExperimentConfig default_experiment_config();

// --------------------------------------------------------------- presets

struct Preset {
    std::string name;        // e.g. "nli.jl_p_ls"
    std::string description; // setting and how it was scaled
    MethodConfig method;
};

/// Fine-tuning presets for every method on the nli, pd and cr toy tasks.
const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);
nlohmann::json preset_to_json(const Preset& preset);
Preset preset_from_json(const nlohmann::json& j);

// ----------------------------------------------------------- directories

struct ExperimentData {
    Vocabulary vocab;
    std::vector<TokenSequence> pretrain;
    std::vector<TokenSequence> mlm_eval;
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> id_test;
    std::vector<LabeledExample> od_test;
    std::vector<TokenSequence> outlier_test;
};

/// Deterministic synthetic data for `config` (seeded by config.seed).
ExperimentData generate_data(const ExperimentConfig& config);
void write_data(const ExperimentData& data, const std::filesystem::path& dir);
ExperimentData read_data(const std::filesystem::path& dir);

/// Resolves the encoder vocabulary and class count from the task grammar.
EncoderConfig resolved_encoder(const ExperimentConfig& config);

// ------------------------------------------------------------ operations

struct PretrainOutput {
    std::filesystem::path checkpoint;
    TrainingLog log;
};

PretrainOutput run_pretrain(const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct FinetuneOutput {
    std::filesystem::path run_dir;
    std::filesystem::path checkpoint;
    TrainingLog log;
};

/// `label` names the run directory (preset name or method name).
FinetuneOutput run_finetune(const ExperimentConfig& config, const std::filesystem::path& pretrained_checkpoint,
                            const std::filesystem::path& experiment_dir, const std::string& label);

enum class Split { InDomain, OutOfDomain, Outlier };
Split parse_split(const std::string& name); // "id", "od", "outlier"
std::string split_name(Split s);

struct SplitEvaluation {
    Split split;
    std::filesystem::path dump;
    std::filesystem::path report;
    std::filesystem::path representations;
};

/// Writes dumps/<split>.jsonl, reports/<split>.json and reps/<split>.tsv under out_dir.
std::vector<SplitEvaluation> run_evaluate(const std::filesystem::path& checkpoint, const std::vector<Split>& splits,
                                          const std::filesystem::path& corpus_dir, const std::filesystem::path& out_dir,
                                          const EvalConfig& eval = {});

struct SampleLine {
    std::size_t index = 0;
    int target_label = 0;
    bool ok = false;
    std::optional<std::size_t> failed_iteration;
    std::vector<std::size_t> attempts;
    std::string text;
    double confidence = 0.0;
};

/// Draws `count` samples; sampling failures are recorded per line.
std::vector<SampleLine> run_sample(const std::filesystem::path& checkpoint, const SamplerConfig& sampler,
                                   std::size_t count, std::uint64_t seed, const std::filesystem::path& vocab_path,
                                   const std::filesystem::path& out_file);

struct ReportOutput {
    std::filesystem::path table;
    std::filesystem::path alpha_sweep;
    std::filesystem::path beta_sweep;
    std::string table_text;
};

/// Aggregates DIR/runs/* by label into a method x {ID acc, ID ECE, OD acc, OD ECE}
/// table (mean ± sample std over seeds) plus sweep files with the mean L2
/// distance between fine-tuned and pre-trained pooled representations.
ReportOutput run_report(const std::filesystem::path& experiment_dir);

/// Mean over rows of ||a_i - b_i|| for two representation dumps of equal shape.
double mean_representation_distance(const std::filesystem::path& a, const std::filesystem::path& b);

} // namespace lmcal
