#include "lmcal/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "lmcal/error.hpp"
#include "lmcal/rng.hpp"

namespace lmcal {

PredictionRecord make_record(std::vector<double> class_probs, int true_label, Domain domain, std::size_t id) {
    require<DataError>(!class_probs.empty(), "empty probability vector");
    PredictionRecord r;
    r.id = id;
    r.domain = domain;
    r.true_label = true_label;
    const auto best = std::max_element(class_probs.begin(), class_probs.end());
    r.pred_label = static_cast<int>(best - class_probs.begin());
    r.confidence = *best;
    r.class_probs = std::move(class_probs);
    return r;
}

std::size_t bin_of(double confidence, std::size_t num_bins) {
    require(num_bins >= 1, "num_bins must be >= 1");
    require<DataError>(confidence > 0.0 && confidence <= 1.0, "confidence must lie in (0, 1]");
    const double m = static_cast<double>(num_bins);
    auto k = static_cast<std::size_t>(std::ceil(confidence * m));
    k = std::clamp<std::size_t>(k, 1, num_bins);
    // Settle rounding at the boundaries against the exact interval test.
    while (k > 1 && confidence <= static_cast<double>(k - 1) / m) --k;
    while (k < num_bins && confidence > static_cast<double>(k) / m) ++k;
    return k;
}

std::vector<BinStats> reliability_bins(std::span<const PredictionRecord> records, std::size_t num_bins) {
    require<DataError>(!records.empty(), "no prediction records");
    require(num_bins >= 1, "num_bins must be >= 1");
    std::vector<BinStats> bins(num_bins);
    for (std::size_t m = 1; m <= num_bins; ++m) {
        bins[m - 1].index = m;
        bins[m - 1].lower = static_cast<double>(m - 1) / static_cast<double>(num_bins);
        bins[m - 1].upper = static_cast<double>(m) / static_cast<double>(num_bins);
    }
    for (const auto& r : records) {
        require<DataError>(r.true_label >= 0 && r.domain != Domain::Outlier,
                           "records without ground truth cannot enter ECE");
        BinStats& b = bins[bin_of(r.confidence, num_bins) - 1];
        ++b.count;
        b.correct += r.correct() ? 1 : 0;
        b.confidence_sum += r.confidence;
    }
    for (auto& b : bins)
        if (b.count) {
            b.accuracy = static_cast<double>(b.correct) / static_cast<double>(b.count);
            b.mean_confidence = b.confidence_sum / static_cast<double>(b.count);
        }
    return bins;
}

double ece_from_bins(std::span<const BinStats> bins) {
    std::size_t n = 0;
    for (const auto& b : bins) n += b.count;
    require<DataError>(n > 0, "no samples in bins");
    double ece = 0.0;
    for (const auto& b : bins)
        if (b.count)
            ece += static_cast<double>(b.count) / static_cast<double>(n) * std::abs(b.accuracy - b.mean_confidence);
    return ece;
}

std::vector<BinStats> merge_bins(std::span<const BinStats> a, std::span<const BinStats> b) {
    require(a.size() == b.size(), "bin counts differ");
    std::vector<BinStats> out(a.begin(), a.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].count += b[i].count;
        out[i].correct += b[i].correct;
        out[i].confidence_sum += b[i].confidence_sum;
        if (out[i].count) {
            out[i].accuracy = static_cast<double>(out[i].correct) / static_cast<double>(out[i].count);
            out[i].mean_confidence = out[i].confidence_sum / static_cast<double>(out[i].count);
        }
    }
    return out;
}

CalibrationReport compute_ece(std::span<const PredictionRecord> records, std::size_t num_bins) {
    CalibrationReport rep;
    rep.bins = reliability_bins(records, num_bins);
    rep.ece = ece_from_bins(rep.bins);
    rep.n = records.size();
    std::size_t correct = 0;
    double conf = 0.0;
    for (const auto& r : records) {
        correct += r.correct() ? 1 : 0;
        conf += r.confidence;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.n);
    rep.mean_confidence = conf / static_cast<double>(rep.n);
    rep.domain = records.front().domain;
    for (const auto& r : records)
        if (r.domain != *rep.domain) rep.domain.reset();
    return rep;
}

std::vector<double> histogram_edges(std::size_t num_classes, std::size_t num_buckets) {
    require(num_classes >= 1, "num_classes must be >= 1");
    require(num_buckets >= 1, "num_buckets must be >= 1");
    const double lo = 1.0 / static_cast<double>(num_classes);
    std::vector<double> edges(num_buckets + 1);
    for (std::size_t i = 0; i <= num_buckets; ++i)
        edges[i] = lo + (1.0 - lo) * static_cast<double>(i) / static_cast<double>(num_buckets);
    edges.back() = 1.0;
    return edges;
}

ConfidenceHistogram confidence_histogram(std::span<const PredictionRecord> records, std::size_t num_buckets) {
    require<DataError>(!records.empty(), "no prediction records");
    ConfidenceHistogram h;
    h.edges = histogram_edges(records.front().class_probs.size(), num_buckets);
    h.counts.assign(num_buckets, 0);
    for (const auto& r : records) {
        // Bucket i covers [edges[i], edges[i+1]); the last bucket includes 1.
        const auto it = std::upper_bound(h.edges.begin() + 1, h.edges.end() - 1, r.confidence);
        ++h.counts[static_cast<std::size_t>(it - (h.edges.begin() + 1))];
    }
    return h;
}

std::vector<TrajectoryRow> track_confidence(std::span<const CheckpointRecords> checkpoints, std::size_t num_bins) {
    std::vector<TrajectoryRow> rows;
    for (std::size_t c = 0; c < checkpoints.size(); ++c)
        for (const auto& [domain, records] : checkpoints[c]) {
            if (records.empty()) continue;
            TrajectoryRow row;
            row.checkpoint = c;
            row.domain = domain;
            row.n = records.size();
            double conf = 0.0;
            for (const auto& r : records) conf += r.confidence;
            row.mean_confidence = conf / static_cast<double>(row.n);
            if (domain != Domain::Outlier) {
                const auto rep = compute_ece(records, num_bins);
                row.accuracy = rep.accuracy;
                row.ece = rep.ece;
            }
            rows.push_back(std::move(row));
        }
    return rows;
}

// ------------------------------------------------------------ predictions

namespace {

std::vector<PredictionRecord> predict(const ParameterStore& params, std::span<const TokenSequence> seqs,
                                      std::span<const int> labels, std::size_t chunk) {
    require(chunk >= 1, "chunk must be >= 1");
    std::vector<PredictionRecord> out;
    out.reserve(seqs.size());
    for (std::size_t start = 0; start < seqs.size(); start += chunk) {
        const std::size_t end = std::min(seqs.size(), start + chunk);
        const HiddenStates hidden = encode(params, pad_batch(seqs.subspan(start, end - start)));
        const Matrix logits = cls_logits(params, hidden);
        for (std::size_t i = start; i < end; ++i) {
            const int label = labels.empty() ? -1 : labels[i];
            out.push_back(make_record(softmax(logits.row(i - start)), label, seqs[i].domain, i));
        }
    }
    return out;
}

} // namespace

std::vector<PredictionRecord> predict_labeled(const ParameterStore& params, std::span<const LabeledExample> examples,
                                              std::size_t chunk) {
    std::vector<TokenSequence> seqs;
    std::vector<int> labels;
    for (const auto& ex : examples) {
        seqs.push_back(ex.sequence);
        labels.push_back(ex.label);
    }
    return predict(params, seqs, labels, chunk);
}

std::vector<PredictionRecord> predict_unlabeled(const ParameterStore& params, std::span<const TokenSequence> sequences,
                                                std::size_t chunk) {
    return predict(params, sequences, {}, chunk);
}

std::string prediction_dump(std::span<const PredictionRecord> records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j{{"id", r.id},
                         {"domain", domain_name(r.domain)},
                         {"true_label", r.true_label},
                         {"pred_label", r.pred_label},
                         {"confidence", r.confidence},
                         {"class_probs", r.class_probs}};
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<PredictionRecord> parse_prediction_dump(const std::string& text) {
    std::vector<PredictionRecord> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            PredictionRecord r;
            r.id = j.at("id").get<std::size_t>();
            r.domain = parse_domain(j.at("domain").get<std::string>());
            r.true_label = j.at("true_label").get<int>();
            r.pred_label = j.at("pred_label").get<int>();
            r.confidence = j.at("confidence").get<double>();
            r.class_probs = j.at("class_probs").get<std::vector<double>>();
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed prediction record: ") + e.what());
        }
    }
    return out;
}

std::string report_json(std::span<const PredictionRecord> records, std::size_t num_bins, std::size_t num_buckets) {
    require<DataError>(!records.empty(), "no prediction records");
    nlohmann::json j;
    j["n"] = records.size();
    double conf = 0.0;
    for (const auto& r : records) conf += r.confidence;
    j["mean_confidence"] = conf / static_cast<double>(records.size());
    const bool labeled = std::all_of(records.begin(), records.end(),
                                     [](const PredictionRecord& r) { return r.true_label >= 0 && r.domain != Domain::Outlier; });
    if (labeled) {
        const auto rep = compute_ece(records, num_bins);
        j["accuracy"] = rep.accuracy;
        j["ece"] = rep.ece;
        auto bins = nlohmann::json::array();
        for (const auto& b : rep.bins)
            bins.push_back({{"index", b.index},
                            {"lower", b.lower},
                            {"upper", b.upper},
                            {"count", b.count},
                            {"correct", b.correct},
                            {"accuracy", b.accuracy},
                            {"mean_confidence", b.mean_confidence}});
        j["bins"] = bins;
    }
    const auto hist = confidence_histogram(records, num_buckets);
    j["histogram"] = {{"edges", hist.edges}, {"counts", hist.counts}};
    return j.dump(2) + "\n";
}

// ------------------------------------------------------ MLM calibration

MlmScorer model_mlm_scorer(const ParameterStore& params) {
    return [&params](const MaskedBatch& batch) {
        const HiddenStates hidden = encode(params, batch.corrupted);
        const auto positions = flatten_positions(batch);
        Matrix probs = mlm_logits(params, hidden, positions);
        for (std::size_t r = 0; r < probs.rows; ++r) softmax(probs.row(r), probs.row(r));
        return probs;
    };
}

std::vector<MlmCalibrationLevel> mlm_calibration_eval(const MlmScorer& scorer, std::span<const TokenSequence> corpus,
                                                      std::span<const double> mask_levels, std::size_t vocab_size,
                                                      std::uint64_t seed, std::size_t num_bins, std::size_t chunk,
                                                      std::size_t max_len) {
    require<DataError>(!corpus.empty(), "MLM calibration corpus is empty");
    require(chunk >= 1, "chunk must be >= 1");
    std::vector<MlmCalibrationLevel> out;
    for (std::size_t level = 0; level < mask_levels.size(); ++level) {
        const double p = mask_levels[level];
        std::vector<PredictionRecord> records;
        for (std::size_t start = 0, block = 0; start < corpus.size(); start += chunk, ++block) {
            const auto part = corpus.subspan(start, std::min(chunk, corpus.size() - start));
            const MaskedBatch masked =
                corrupt_pretrain(part, vocab_size, p, derive_seed(seed, "mlm-eval:" + std::to_string(level), block), max_len);
            const Matrix probs = scorer(masked);
            std::size_t row = 0;
            for (std::size_t b = 0; b < masked.targets.size(); ++b)
                for (TokenId target : masked.targets[b]) {
                    require<DataError>(row < probs.rows, "scorer returned too few rows");
                    const auto r = probs.row(row++);
                    records.push_back(make_record({r.begin(), r.end()}, target, Domain::Pretrain, records.size()));
                }
            require<DataError>(row == probs.rows, "scorer returned too many rows");
        }
        out.push_back({p, compute_ece(records, num_bins)});
    }
    return out;
}

} // namespace lmcal
