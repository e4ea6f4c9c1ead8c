#include "lmcal/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lmcal/error.hpp"
#include "lmcal/rng.hpp"

namespace lmcal {

namespace {

const std::vector<std::string>& special_strings() {
    static const std::vector<std::string> names{"PAD", "MASK", "CLS", "SEP", "UNK"};
    return names;
}

template <class T>
const T& pick(Rng& rng, const std::vector<T>& items) {
    return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

std::size_t fixed_slots(const std::string& tmpl) {
    return static_cast<std::size_t>(std::count_if(tmpl.begin(), tmpl.end(), [](char c) { return c != '*'; }));
}

} // namespace

std::string_view domain_name(Domain d) {
    switch (d) {
    case Domain::InDomain: return "ID";
    case Domain::OutOfDomain: return "OD";
    case Domain::Outlier: return "OUTLIER";
    case Domain::Pretrain: return "PRETRAIN";
    }
    return "?";
}

Domain parse_domain(std::string_view name) {
    std::string up(name);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (up == "ID") return Domain::InDomain;
    if (up == "OD") return Domain::OutOfDomain;
    if (up == "OUTLIER") return Domain::Outlier;
    if (up == "PRETRAIN") return Domain::Pretrain;
    throw ConfigError("unknown domain: " + std::string(name));
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    v.tokens_ = special_strings();
    v.tokens_.insert(v.tokens_.end(), tokens.begin(), tokens.end());
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        const auto& t = v.tokens_[i];
        require(!t.empty(), "empty token string");
        require(t.find_first_of(" \t\r\n") == std::string::npos, "token contains whitespace: '" + t + "'");
        if (!v.index_.emplace(t, static_cast<TokenId>(i)).second)
            throw ConfigError("duplicate token string: '" + t + "'");
    }
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file: " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    require<DataError>(lines.size() >= static_cast<std::size_t>(special::kCount), "vocabulary file too short");
    for (TokenId i = 0; i < special::kCount; ++i)
        require<DataError>(lines[i] == special_strings()[i], "vocabulary file: reserved ids 0-4 must be specials");
    return from_tokens({lines.begin() + special::kCount, lines.end()});
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file: " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

const std::string& Vocabulary::token(TokenId id) const {
    require<DataError>(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), "token id out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? special::kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

// ------------------------------------------------------------- Task grammar

void SyntheticTaskSpec::validate() const {
    require(num_classes() >= 2, "task needs at least 2 classes");
    for (const auto& kws : class_keywords) {
        require(!kws.empty(), "every class needs at least one keyword");
        require(id_keyword_count >= 1 && id_keyword_count <= kws.size(), "id_keyword_count out of range");
    }
    require(!id_fillers.empty() && !od_fillers.empty() && !outlier_fillers.empty(), "filler sets must be nonempty");
    require(!id_templates.empty() && !od_templates.empty() && !outlier_templates.empty(),
            "template sets must be nonempty");
    require(domain_shift >= 0.0 && domain_shift <= 1.0, "domain_shift must lie in [0, 1]");
    require(min_len >= 1 && min_len <= max_len, "min_len must lie in [1, max_len]");
    auto check_templates = [&](const std::vector<std::string>& ts, bool keywords_allowed) {
        for (const auto& t : ts) {
            require(std::count(t.begin(), t.end(), '*') == 1, "template needs exactly one '*': " + t);
            require(t.find_first_not_of("KF*") == std::string::npos, "template uses unknown slot: " + t);
            require(fixed_slots(t) <= min_len, "template longer than min_len: " + t);
            const bool has_k = t.find('K') != std::string::npos;
            require(keywords_allowed ? has_k : !has_k,
                    keywords_allowed ? "labeled template lacks a keyword slot: " + t
                                     : "outlier template must not have keyword slots: " + t);
        }
    };
    check_templates(id_templates, true);
    check_templates(od_templates, true);
    check_templates(outlier_templates, false);
    for (const auto& t : od_templates)
        require(std::find(id_templates.begin(), id_templates.end(), t) == id_templates.end(),
                "OD templates must be disjoint from ID templates: " + t);
    require(grammar_tokens().size() >= 3, "grammar must reference at least 3 tokens");
}

std::vector<std::string> SyntheticTaskSpec::grammar_tokens() const {
    std::vector<std::string> out;
    for (const auto& kws : class_keywords) out.insert(out.end(), kws.begin(), kws.end());
    for (const auto* set : {&id_fillers, &od_fillers, &outlier_fillers}) out.insert(out.end(), set->begin(), set->end());
    return out;
}

SyntheticTaskSpec default_task_spec(std::size_t num_classes) {
    SyntheticTaskSpec spec;
    const char* stems = "abcdefghij";
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::string> kws;
        for (int j = 0; j < 4; ++j) kws.push_back("kw_" + std::string(1, stems[c % 10]) + std::to_string(j));
        spec.class_keywords.push_back(std::move(kws));
    }
    spec.id_keyword_count = 2;
    for (int i = 0; i < 8; ++i) {
        spec.id_fillers.push_back("id_w" + std::to_string(i));
        spec.od_fillers.push_back("od_w" + std::to_string(i));
        spec.outlier_fillers.push_back("ol_w" + std::to_string(i));
    }
    spec.id_templates = {"FK*", "K*", "FFK*"};
    spec.od_templates = {"*KF", "*KFF", "F*KF"};
    spec.outlier_templates = {"*", "F*F"};
    spec.domain_shift = 1.0;
    spec.min_len = 8;
    spec.max_len = 16;
    return spec;
}

Vocabulary build_vocabulary(const SyntheticTaskSpec& spec) {
    spec.validate();
    return Vocabulary::from_tokens(spec.grammar_tokens());
}

int rule_label(const SyntheticTaskSpec& spec, const Vocabulary& vocab, std::span<const TokenId> ids) {
    int label = kNoLabel;
    for (TokenId id : ids) {
        if (Vocabulary::is_special(id)) continue;
        const auto& tok = vocab.token(id);
        for (std::size_t c = 0; c < spec.num_classes(); ++c) {
            const auto& kws = spec.class_keywords[c];
            if (std::find(kws.begin(), kws.end(), tok) == kws.end()) continue;
            if (label == kNoLabel) label = static_cast<int>(c);
            else if (label != static_cast<int>(c)) return kConflictingLabel;
        }
    }
    return label;
}

bool contains_label_token(const SyntheticTaskSpec& spec, const Vocabulary& vocab, std::span<const TokenId> ids) {
    return rule_label(spec, vocab, ids) != kNoLabel;
}

// --------------------------------------------------------------- Generators

namespace {

struct Surface {
    const std::vector<std::string>* templates;
    const std::vector<std::string>* fillers;
    const std::vector<std::string>* alt_fillers; // mixed in with probability 1 - mix
    double mix;                                  // probability of drawing from `fillers`
};

enum class KeywordPool { IdSurface, OdSurface, All };

const std::string& draw_keyword(Rng& rng, const SyntheticTaskSpec& spec, std::size_t cls, KeywordPool pool) {
    const auto& kws = spec.class_keywords[cls];
    std::size_t lo = 0, hi = kws.size();
    if (pool == KeywordPool::IdSurface) hi = spec.id_keyword_count;
    if (pool == KeywordPool::OdSurface && spec.id_keyword_count < kws.size()) lo = spec.id_keyword_count;
    return kws[std::uniform_int_distribution<std::size_t>(lo, hi - 1)(rng)];
}

TokenSequence render(Rng& rng, const SyntheticTaskSpec& spec, const Vocabulary& vocab, const std::string& tmpl,
                     const Surface& surface, std::size_t cls, Domain domain, double od_keyword_prob, // < 0: always default_pool
                     KeywordPool default_pool) {
    const std::size_t body = std::uniform_int_distribution<std::size_t>(spec.min_len, spec.max_len)(rng);
    const std::size_t run = body - fixed_slots(tmpl);
    TokenSequence seq;
    seq.domain = domain;
    seq.ids.reserve(body + 2);
    seq.ids.push_back(special::kCls);
    auto filler = [&] {
        const auto& set = (surface.alt_fillers && !bernoulli(rng, surface.mix)) ? *surface.alt_fillers : *surface.fillers;
        return vocab.id(pick(rng, set));
    };
    for (char slot : tmpl) {
        if (slot == 'F') {
            seq.ids.push_back(filler());
        } else if (slot == '*') {
            for (std::size_t i = 0; i < run; ++i) seq.ids.push_back(filler());
        } else {
            KeywordPool pool = default_pool;
            if (od_keyword_prob >= 0.0) pool = bernoulli(rng, od_keyword_prob) ? KeywordPool::OdSurface : KeywordPool::IdSurface;
            seq.ids.push_back(vocab.id(draw_keyword(rng, spec, cls, pool)));
        }
    }
    seq.ids.push_back(special::kSep);
    return seq;
}

TokenSequence generate_one(Rng& rng, const SyntheticTaskSpec& spec, const Vocabulary& vocab, Domain domain,
                           std::size_t cls) {
    switch (domain) {
    case Domain::InDomain: {
        Surface s{&spec.id_templates, &spec.id_fillers, nullptr, 1.0};
        return render(rng, spec, vocab, pick(rng, spec.id_templates), s, cls, domain, -1.0, KeywordPool::IdSurface);
    }
    case Domain::OutOfDomain: {
        Surface s{&spec.od_templates, &spec.od_fillers, &spec.id_fillers, spec.domain_shift};
        return render(rng, spec, vocab, pick(rng, spec.od_templates), s, cls, domain, spec.domain_shift,
                      KeywordPool::OdSurface);
    }
    case Domain::Outlier: {
        Surface s{&spec.outlier_templates, &spec.outlier_fillers, nullptr, 1.0};
        return render(rng, spec, vocab, pick(rng, spec.outlier_templates), s, cls, domain, -1.0, KeywordPool::All);
    }
    case Domain::Pretrain: {
        // Mixture of all three surfaces; keywords from the whole class list.
        const int style = std::uniform_int_distribution<int>(0, 2)(rng);
        TokenSequence seq;
        if (style == 0) {
            Surface s{&spec.id_templates, &spec.id_fillers, nullptr, 1.0};
            seq = render(rng, spec, vocab, pick(rng, spec.id_templates), s, cls, domain, -1.0, KeywordPool::All);
        } else if (style == 1) {
            Surface s{&spec.od_templates, &spec.od_fillers, nullptr, 1.0};
            seq = render(rng, spec, vocab, pick(rng, spec.od_templates), s, cls, domain, -1.0, KeywordPool::All);
        } else {
            Surface s{&spec.outlier_templates, &spec.outlier_fillers, nullptr, 1.0};
            seq = render(rng, spec, vocab, pick(rng, spec.outlier_templates), s, cls, domain, -1.0, KeywordPool::All);
        }
        return seq;
    }
    }
    throw ConfigError("unknown domain");
}

} // namespace

std::vector<TokenSequence> generate_corpus(const SyntheticTaskSpec& spec, const Vocabulary& vocab, std::size_t n,
                                           Domain domain, std::uint64_t seed) {
    spec.validate();
    require(n >= 1, "generate_corpus: n must be >= 1");
    Rng rng(derive_seed(seed, "corpus:" + std::string(domain_name(domain))));
    std::uniform_int_distribution<std::size_t> cls_dist(0, spec.num_classes() - 1);
    std::vector<TokenSequence> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = cls_dist(rng);
        out.push_back(generate_one(rng, spec, vocab, domain, cls));
    }
    return out;
}

std::vector<LabeledExample> generate_labeled(const SyntheticTaskSpec& spec, const Vocabulary& vocab, std::size_t n,
                                             Domain domain, std::uint64_t seed) {
    require(domain == Domain::InDomain || domain == Domain::OutOfDomain,
            "labeled data exists only for ID and OD domains (outliers are unlabeled)");
    spec.validate();
    require(n >= 1, "generate_labeled: n must be >= 1");
    Rng rng(derive_seed(seed, "labeled:" + std::string(domain_name(domain))));
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % spec.num_classes();
    std::shuffle(labels.begin(), labels.end(), rng);
    std::vector<LabeledExample> out;
    out.reserve(n);
    for (std::size_t cls : labels) out.push_back({generate_one(rng, spec, vocab, domain, cls), static_cast<int>(cls)});
    return out;
}

// ---------------------------------------------------------------- Batching

TokenSequence truncate(const TokenSequence& seq, std::size_t max_len) {
    if (max_len == 0 || seq.ids.size() <= max_len) return seq;
    require<DataError>(max_len >= 2, "truncation length must keep CLS and SEP");
    TokenSequence out{{seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(max_len)}, seq.domain};
    if (seq.ids.back() == special::kSep) out.ids.back() = special::kSep;
    return out;
}

TokenBatch pad_batch(std::span<const TokenSequence> batch, std::size_t max_len) {
    TokenBatch tb;
    tb.rows = batch.size();
    for (const auto& s : batch) tb.cols = std::max(tb.cols, max_len ? std::min(max_len, s.ids.size()) : s.ids.size());
    tb.ids.assign(tb.rows * tb.cols, special::kPad);
    tb.attention.assign(tb.rows * tb.cols, 0);
    for (std::size_t r = 0; r < tb.rows; ++r) {
        const auto seq = truncate(batch[r], max_len);
        for (std::size_t c = 0; c < seq.ids.size(); ++c) {
            tb.ids[r * tb.cols + c] = seq.ids[c];
            tb.attention[r * tb.cols + c] = 1;
        }
    }
    return tb;
}

bool maskable(TokenId id) { return id != special::kCls && id != special::kSep && id != special::kPad; }

std::size_t MaskedBatch::num_masked() const {
    std::size_t n = 0;
    for (const auto& p : positions) n += p.size();
    return n;
}

TokenBatch MaskedBatch::restored() const {
    TokenBatch out = corrupted;
    for (std::size_t r = 0; r < positions.size(); ++r)
        for (std::size_t i = 0; i < positions[r].size(); ++i) out.ids[r * out.cols + positions[r][i]] = targets[r][i];
    return out;
}

namespace {

template <class Replace>
MaskedBatch corrupt(std::span<const TokenSequence> batch, double p_mask, std::uint64_t seed, std::size_t max_len,
                    std::string_view tag, Replace replace) {
    require(p_mask > 0.0 && p_mask < 1.0, "p_mask must lie in (0, 1)");
    MaskedBatch mb;
    mb.corrupted = pad_batch(batch, max_len);
    const TokenBatch& tb = mb.corrupted;
    mb.positions.resize(tb.rows);
    mb.targets.resize(tb.rows);
    Rng rng(derive_seed(seed, tag));
    for (std::size_t r = 0; r < tb.rows; ++r) {
        std::vector<std::size_t> eligible;
        for (std::size_t c = 0; c < tb.cols; ++c)
            if (tb.attends(r, c) && maskable(tb.at(r, c))) eligible.push_back(c);
        require<DataError>(!eligible.empty(), "sequence has no maskable position");
        std::vector<std::size_t> chosen;
        while (chosen.empty())
            for (std::size_t c : eligible)
                if (bernoulli(rng, p_mask)) chosen.push_back(c);
        for (std::size_t c : chosen) {
            TokenId& slot = mb.corrupted.ids[r * tb.cols + c];
            mb.positions[r].push_back(c);
            mb.targets[r].push_back(slot);
            slot = replace(rng, slot);
        }
    }
    return mb;
}

} // namespace

MaskedBatch corrupt_pretrain(std::span<const TokenSequence> batch, std::size_t vocab_size, double p_mask,
                             std::uint64_t seed, std::size_t max_len) {
    require(vocab_size > static_cast<std::size_t>(special::kCount), "vocabulary has no regular tokens");
    std::uniform_int_distribution<TokenId> random_token(special::kCount, static_cast<TokenId>(vocab_size) - 1);
    return corrupt(batch, p_mask, seed, max_len, "corrupt:pretrain", [&](Rng& rng, TokenId original) {
        const double u = uniform01(rng);
        if (u < 0.8) return special::kMask;
        if (u < 0.9) return random_token(rng);
        return original;
    });
}

MaskedBatch corrupt_joint(std::span<const TokenSequence> batch, double p_mask, std::uint64_t seed,
                          std::size_t max_len) {
    return corrupt(batch, p_mask, seed, max_len, "corrupt:joint", [](Rng&, TokenId) { return special::kMask; });
}

// --------------------------------------------------------------------- I/O

void write_corpus(const std::filesystem::path& path, const Vocabulary& vocab, std::span<const TokenSequence> seqs,
                  std::span<const int> labels) {
    require(labels.empty() || labels.size() == seqs.size(), "labels must match sequences");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus: " + path.string());
    std::set<std::string> domains;
    for (const auto& s : seqs) {
        bool first = true;
        for (TokenId id : s.ids) {
            if (id == special::kCls || id == special::kSep) continue;
            if (!first) out << ' ';
            out << vocab.token(id);
            first = false;
        }
        out << '\n';
        domains.insert(std::string(domain_name(s.domain)));
    }
    nlohmann::json manifest;
    manifest["format"] = "lmcal-corpus-v1";
    manifest["count"] = seqs.size();
    manifest["domain"] = domains.size() == 1 ? *domains.begin() : std::string("MIXED");
    std::vector<std::string> tags;
    for (const auto& s : seqs) tags.emplace_back(domain_name(s.domain));
    if (domains.size() > 1) manifest["domains"] = tags;
    if (!labels.empty()) manifest["labels"] = std::vector<int>(labels.begin(), labels.end());
    std::ofstream mf(path.string() + ".manifest.json", std::ios::binary);
    if (!mf) throw IoError("cannot write corpus manifest: " + path.string());
    mf << manifest.dump(2) << '\n';
}

CorpusFile read_corpus(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus: " + path.string());
    std::ifstream mf(path.string() + ".manifest.json");
    if (!mf) throw IoError("missing corpus manifest for " + path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad corpus manifest: " + std::string(e.what()));
    }
    CorpusFile cf;
    std::vector<std::string> tags;
    if (manifest.contains("domains")) tags = manifest["domains"].get<std::vector<std::string>>();
    const Domain base = manifest.value("domain", std::string("PRETRAIN")) == "MIXED"
                            ? Domain::Pretrain
                            : parse_domain(manifest.value("domain", std::string("PRETRAIN")));
    for (std::string line; std::getline(in, line);) {
        TokenSequence seq;
        seq.ids.push_back(special::kCls);
        std::istringstream ls(line);
        for (std::string tok; ls >> tok;) {
            require<DataError>(vocab.contains(tok), "corpus token not in vocabulary: " + tok);
            seq.ids.push_back(vocab.id(tok));
        }
        seq.ids.push_back(special::kSep);
        seq.domain = tags.empty() ? base : parse_domain(tags.at(cf.sequences.size()));
        cf.sequences.push_back(std::move(seq));
    }
    if (manifest.contains("labels")) cf.labels = manifest["labels"].get<std::vector<int>>();
    require<DataError>(manifest.value("count", cf.sequences.size()) == cf.sequences.size(),
                       "corpus manifest count mismatch");
    require<DataError>(cf.labels.empty() || cf.labels.size() == cf.sequences.size(), "label count mismatch");
    return cf;
}

} // namespace lmcal
