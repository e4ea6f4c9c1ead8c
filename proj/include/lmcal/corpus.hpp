#pragma once

// Synthetic vocabulary, multi-domain corpus generation and the two masking
// procedures used for masked-language-model training.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lmcal {

using TokenId = std::int32_t;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kMask = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kUnk = 4;
inline constexpr TokenId kCount = 5;
} // namespace special

enum class Domain { InDomain, OutOfDomain, Outlier, Pretrain };

std::string_view domain_name(Domain d);
/// Accepts "ID", "OD", "OUTLIER", "PRETRAIN" (case-insensitive).
Domain parse_domain(std::string_view name);

class Vocabulary {
public:
    /// Specials take ids 0-4 (PAD, MASK, CLS, SEP, UNK); `tokens` follow in order.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const;
    /// UNK for unknown strings.
    TokenId id(std::string_view token) const;
    bool contains(std::string_view token) const;
    static bool is_special(TokenId id) { return id >= 0 && id < special::kCount; }
    const std::vector<std::string>& tokens() const { return tokens_; }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Token-pattern grammar for the synthetic classification task.
///
/// Templates are slot strings over {K, F, *}: K is a label-bearing keyword,
/// F a single filler and * a filler run that stretches the body to a length
/// drawn from [min_len, max_len]. Exactly one * per template.
///
/// Keywords [0, id_keyword_count) of each class form the in-domain surface,
/// the rest the out-of-domain surface. The label of any sequence is the class
/// of its keywords; outlier templates carry none.
struct SyntheticTaskSpec {
    std::vector<std::vector<std::string>> class_keywords;
    std::size_t id_keyword_count = 2;
    std::vector<std::string> id_fillers;
    std::vector<std::string> od_fillers;
    std::vector<std::string> outlier_fillers;
    std::vector<std::string> id_templates;
    std::vector<std::string> od_templates;
    std::vector<std::string> outlier_templates;
    /// 0: OD reuses the in-domain surface tokens, 1: OD uses only its own.
    double domain_shift = 1.0;
    std::size_t min_len = 8;
    std::size_t max_len = 16;

    std::size_t num_classes() const { return class_keywords.size(); }
    /// Throws ConfigError describing the first violated constraint.
    void validate() const;
    /// Every grammar token in deterministic order (keywords, then fillers).
    std::vector<std::string> grammar_tokens() const;

    bool operator==(const SyntheticTaskSpec&) const = default;
};

SyntheticTaskSpec default_task_spec(std::size_t num_classes = 3);

struct TokenSequence {
    std::vector<TokenId> ids;
    Domain domain = Domain::InDomain;

    bool operator==(const TokenSequence&) const = default;
};

struct LabeledExample {
    TokenSequence sequence;
    int label = 0;

    bool operator==(const LabeledExample&) const = default;
};

/// Row-padded token matrix plus attention mask (1 = real token).
struct TokenBatch {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention;

    TokenId at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
    bool attends(std::size_t r, std::size_t c) const { return attention[r * cols + c] != 0; }
    bool operator==(const TokenBatch&) const = default;
};

struct MaskedBatch {
    TokenBatch corrupted;
    std::vector<std::vector<std::size_t>> positions;
    std::vector<std::vector<TokenId>> targets;

    std::size_t num_masked() const;
    /// Writes targets back into the corrupted ids.
    TokenBatch restored() const;
};

/// Label returned by rule_label for sequences without keywords.
inline constexpr int kNoLabel = -1;
/// Label returned by rule_label when keywords of several classes co-occur.
inline constexpr int kConflictingLabel = -2;

/// Exact rule oracle for the grammar.
int rule_label(const SyntheticTaskSpec& spec, const Vocabulary& vocab, std::span<const TokenId> ids);
bool contains_label_token(const SyntheticTaskSpec& spec, const Vocabulary& vocab, std::span<const TokenId> ids);

Vocabulary build_vocabulary(const SyntheticTaskSpec& spec);

std::vector<TokenSequence> generate_corpus(const SyntheticTaskSpec& spec, const Vocabulary& vocab, std::size_t n,
                                           Domain domain, std::uint64_t seed);

/// Labels are balanced exactly (round-robin, then shuffled).
std::vector<LabeledExample> generate_labeled(const SyntheticTaskSpec& spec, const Vocabulary& vocab, std::size_t n,
                                             Domain domain, std::uint64_t seed);

/// Pads (and truncates to `max_len` tokens when nonzero, keeping the final SEP).
TokenBatch pad_batch(std::span<const TokenSequence> batch, std::size_t max_len = 0);
TokenSequence truncate(const TokenSequence& seq, std::size_t max_len);

/// 80-10-10 corruption: each eligible position is selected with p_mask;
/// selected positions become MASK (80%), a random non-special token (10%) or
/// stay unchanged (10%). Rows with no selection are redrawn.
MaskedBatch corrupt_pretrain(std::span<const TokenSequence> batch, std::size_t vocab_size, double p_mask,
                             std::uint64_t seed, std::size_t max_len = 0);

/// Bernoulli(p_mask) selection; every selected position becomes MASK.
MaskedBatch corrupt_joint(std::span<const TokenSequence> batch, double p_mask, std::uint64_t seed,
                          std::size_t max_len = 0);

/// Positions that may be masked: attended and not CLS/SEP/PAD.
bool maskable(TokenId id);

// Corpus files: one sequence body per line (CLS/SEP implied), space-separated
// token strings. A sidecar `<path>.manifest.json` records the domain tag,
// count and labels when present.
void write_corpus(const std::filesystem::path& path, const Vocabulary& vocab, std::span<const TokenSequence> seqs,
                  std::span<const int> labels = {});
struct CorpusFile {
    std::vector<TokenSequence> sequences;
    std::vector<int> labels;
};
CorpusFile read_corpus(const std::filesystem::path& path, const Vocabulary& vocab);

} // namespace lmcal
