#pragma once

// Expected calibration error, reliability bins, confidence histograms,
// per-epoch confidence trajectories and masked-LM calibration evaluation.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmcal/corpus.hpp"
#include "lmcal/encoder.hpp"

namespace lmcal {

struct PredictionRecord {
    std::size_t id = 0;
    Domain domain = Domain::InDomain;
    int true_label = -1; // -1: no ground truth
    int pred_label = 0;
    double confidence = 0.0;
    std::vector<double> class_probs;

    bool correct() const { return true_label >= 0 && pred_label == true_label; }
    bool operator==(const PredictionRecord&) const = default;
};

/// Builds a record from a probability vector: argmax (first on ties) and max.
PredictionRecord make_record(std::vector<double> class_probs, int true_label, Domain domain, std::size_t id = 0);

struct BinStats {
    std::size_t index = 0; // m, 1-based
    double lower = 0.0;    // (m-1)/M, exclusive
    double upper = 0.0;    // m/M, inclusive
    std::size_t count = 0;
    std::size_t correct = 0;
    double confidence_sum = 0.0;
    double accuracy = 0.0;
    double mean_confidence = 0.0;
};

struct CalibrationReport {
    double ece = 0.0;
    std::vector<BinStats> bins;
    std::size_t n = 0;
    double accuracy = 0.0;
    double mean_confidence = 0.0;
    std::optional<Domain> domain; // unset for mixed record sets
};

/// 1-based bin m with (m-1)/M < confidence <= m/M; confidence must be in (0, 1].
std::size_t bin_of(double confidence, std::size_t num_bins);

/// All M bins, including empty ones. Errors on empty input or unlabeled records.
std::vector<BinStats> reliability_bins(std::span<const PredictionRecord> records, std::size_t num_bins = 10);
/// Σ_m (|B_m| / N) |acc(B_m) - conf(B_m)| from precomputed bins.
double ece_from_bins(std::span<const BinStats> bins);
/// Bin-wise union of two bin sets with identical M.
std::vector<BinStats> merge_bins(std::span<const BinStats> a, std::span<const BinStats> b);
CalibrationReport compute_ece(std::span<const PredictionRecord> records, std::size_t num_bins = 10);

struct ConfidenceHistogram {
    std::vector<double> edges; // num_buckets + 1 values from 1/K to 1
    std::vector<std::size_t> counts;
};

/// Equal-width buckets over [1/K, 1]; K is taken from class_probs.
ConfidenceHistogram confidence_histogram(std::span<const PredictionRecord> records, std::size_t num_buckets = 10);
std::vector<double> histogram_edges(std::size_t num_classes, std::size_t num_buckets);

struct TrajectoryRow {
    std::size_t checkpoint = 0;
    Domain domain = Domain::InDomain;
    std::size_t n = 0;
    double mean_confidence = 0.0;
    std::optional<double> accuracy; // labeled domains only
    std::optional<double> ece;      // labeled domains only
};

using CheckpointRecords = std::map<Domain, std::vector<PredictionRecord>>;

/// One row per (checkpoint, domain) with records, in checkpoint then domain order.
std::vector<TrajectoryRow> track_confidence(std::span<const CheckpointRecords> checkpoints, std::size_t num_bins = 10);

// ------------------------------------------------------------ predictions

std::vector<PredictionRecord> predict_labeled(const ParameterStore& params, std::span<const LabeledExample> examples,
                                              std::size_t chunk = 64);
std::vector<PredictionRecord> predict_unlabeled(const ParameterStore& params, std::span<const TokenSequence> sequences,
                                                std::size_t chunk = 64);

/// One JSON object per line: {id, domain, true_label, pred_label, confidence, class_probs}.
std::string prediction_dump(std::span<const PredictionRecord> records);
std::vector<PredictionRecord> parse_prediction_dump(const std::string& text);

/// JSON document with n, accuracy, mean confidence, ece (labeled only), bins and histogram.
std::string report_json(std::span<const PredictionRecord> records, std::size_t num_bins, std::size_t num_buckets);

// ------------------------------------------------------ MLM calibration

/// Probability rows over the vocabulary for every selected position of a
/// masked batch, in flatten_positions order.
using MlmScorer = std::function<Matrix(const MaskedBatch&)>;

MlmScorer model_mlm_scorer(const ParameterStore& params);

struct MlmCalibrationLevel {
    double p_mask = 0.0;
    CalibrationReport report;
};

/// Treats each selected position (MASK, random and kept alike) as a |V|-way
/// prediction of its original token under 80-10-10 corruption.
std::vector<MlmCalibrationLevel> mlm_calibration_eval(const MlmScorer& scorer, std::span<const TokenSequence> corpus,
                                                      std::span<const double> mask_levels, std::size_t vocab_size,
                                                      std::uint64_t seed, std::size_t num_bins = 10,
                                                      std::size_t chunk = 64, std::size_t max_len = 0);

} // namespace lmcal
