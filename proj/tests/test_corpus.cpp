#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <set>

#include "lmcal/corpus.hpp"
#include "lmcal/error.hpp"
#include "support.hpp"

using namespace lmcal;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lmcal_corpus_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("vocabulary reserves the special ids and maps unknown strings to UNK") {
    const auto v = Vocabulary::from_tokens({"a", "b"});
    CHECK(v.size() == 7);
    CHECK(v.token(special::kPad) == "PAD");
    CHECK(v.token(special::kMask) == "MASK");
    CHECK(v.token(special::kCls) == "CLS");
    CHECK(v.token(special::kSep) == "SEP");
    CHECK(v.token(special::kUnk) == "UNK");
    CHECK(v.id("a") == 5);
    CHECK(v.id("zzz") == special::kUnk);
    CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "a"}), ConfigError);
    CHECK_THROWS_AS(Vocabulary::from_tokens({"MASK"}), ConfigError);
    CHECK_THROWS_AS(Vocabulary::from_tokens({"a b"}), ConfigError);
    CHECK_THROWS_AS(v.token(99), DataError);

    const fs::path dir = temp_dir("vocab");
    v.save(dir / "v.txt");
    CHECK(Vocabulary::load(dir / "v.txt") == v);
    CHECK_THROWS_AS(Vocabulary::load(dir / "missing.txt"), IoError);
}

TEST_CASE("domain names round-trip") {
    for (Domain d : {Domain::InDomain, Domain::OutOfDomain, Domain::Outlier, Domain::Pretrain})
        CHECK(parse_domain(domain_name(d)) == d);
    CHECK(parse_domain("od") == Domain::OutOfDomain);
    CHECK_THROWS(parse_domain("elsewhere"));
}

TEST_CASE("task grammar validation") {
    auto s = default_task_spec();
    CHECK_NOTHROW(s.validate());
    auto bad = s;
    bad.od_templates.push_back(bad.id_templates.front());
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.outlier_templates = {"K*"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.id_templates = {"KF"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.class_keywords.resize(1);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(build_vocabulary(s).size() == 5 + 12 + 24);
}

TEST_CASE("generated sequences follow the grammar and the rule oracle") {
    const auto spec = default_task_spec();
    const auto vocab = build_vocabulary(spec);
    for (Domain d : {Domain::InDomain, Domain::OutOfDomain}) {
        const auto xs = generate_labeled(spec, vocab, 300, d, 1);
        std::vector<int> counts(3, 0);
        for (const auto& x : xs) {
            CHECK(x.sequence.domain == d);
            CHECK(x.sequence.ids.front() == special::kCls);
            CHECK(x.sequence.ids.back() == special::kSep);
            const std::size_t body = x.sequence.ids.size() - 2;
            CHECK(body >= spec.min_len);
            CHECK(body <= spec.max_len);
            CHECK(rule_label(spec, vocab, x.sequence.ids) == x.label);
            ++counts[static_cast<std::size_t>(x.label)];
        }
        CHECK(counts == std::vector<int>{100, 100, 100});
    }
    for (const auto& s : generate_corpus(spec, vocab, 200, Domain::Outlier, 2)) {
        CHECK_FALSE(contains_label_token(spec, vocab, s.ids));
        CHECK(rule_label(spec, vocab, s.ids) == kNoLabel);
    }
    CHECK_THROWS_AS(generate_labeled(spec, vocab, 10, Domain::Outlier, 1), ConfigError);
}

TEST_CASE("in-domain text uses only the in-domain surface; full shift removes it from OD") {
    const auto spec = default_task_spec();
    const auto vocab = build_vocabulary(spec);
    std::set<std::string> id_surface;
    for (const auto& kws : spec.class_keywords)
        for (std::size_t j = 0; j < spec.id_keyword_count; ++j) id_surface.insert(kws[j]);
    for (const auto& f : spec.id_fillers) id_surface.insert(f);
    for (const auto& x : generate_labeled(spec, vocab, 200, Domain::InDomain, 3))
        for (std::size_t i = 1; i + 1 < x.sequence.ids.size(); ++i)
            CHECK(id_surface.count(vocab.token(x.sequence.ids[i])) == 1);
    for (const auto& x : generate_labeled(spec, vocab, 200, Domain::OutOfDomain, 3))
        for (std::size_t i = 1; i + 1 < x.sequence.ids.size(); ++i)
            CHECK(id_surface.count(vocab.token(x.sequence.ids[i])) == 0);

    auto same = spec;
    same.domain_shift = 0.0;
    for (const auto& x : generate_labeled(same, vocab, 200, Domain::OutOfDomain, 3))
        for (std::size_t i = 1; i + 1 < x.sequence.ids.size(); ++i)
            CHECK(id_surface.count(vocab.token(x.sequence.ids[i])) == 1);
}

TEST_CASE("generation is deterministic given the seed") {
    const auto spec = default_task_spec();
    const auto vocab = build_vocabulary(spec);
    CHECK(generate_corpus(spec, vocab, 50, Domain::Pretrain, 9) == generate_corpus(spec, vocab, 50, Domain::Pretrain, 9));
    CHECK(generate_corpus(spec, vocab, 50, Domain::Pretrain, 9) != generate_corpus(spec, vocab, 50, Domain::Pretrain, 10));
}

TEST_CASE("padding, truncation and attention masks") {
    std::vector<TokenSequence> xs{{{2, 5, 6, 7, 3}}, {{2, 8, 3}}};
    const auto b = pad_batch(xs);
    CHECK(b.rows == 2);
    CHECK(b.cols == 5);
    CHECK(b.at(1, 3) == special::kPad);
    CHECK_FALSE(b.attends(1, 3));
    CHECK(b.attends(1, 2));
    const auto t = pad_batch(xs, 4);
    CHECK(t.cols == 4);
    CHECK(t.at(0, 3) == special::kSep);
    CHECK(truncate(xs[0], 3).ids == std::vector<TokenId>{2, 5, 3});
}

TEST_CASE("joint corruption replaces every selected position with MASK and nothing else") {
    const auto corpus = lmcal::testing::tiny_corpus(200, 4);
    const auto mb = corrupt_joint(corpus, 0.3, 17);
    const TokenBatch orig = pad_batch(corpus);
    for (std::size_t r = 0; r < mb.corrupted.rows; ++r) {
        CHECK_FALSE(mb.positions[r].empty());
        std::set<std::size_t> sel(mb.positions[r].begin(), mb.positions[r].end());
        for (std::size_t c = 0; c < mb.corrupted.cols; ++c) {
            if (sel.count(c)) {
                CHECK(mb.corrupted.at(r, c) == special::kMask);
                CHECK(maskable(orig.at(r, c)));
            } else {
                CHECK(mb.corrupted.at(r, c) == orig.at(r, c));
            }
        }
    }
    CHECK(mb.restored() == orig);
}

TEST_CASE("pre-training corruption never touches CLS, SEP or padding and is reproducible") {
    const auto corpus = lmcal::testing::tiny_corpus(100, 5);
    const auto a = corrupt_pretrain(corpus, 41, 0.5, 3);
    const auto b = corrupt_pretrain(corpus, 41, 0.5, 3);
    CHECK(a.corrupted == b.corrupted);
    const TokenBatch orig = pad_batch(corpus);
    for (std::size_t r = 0; r < a.positions.size(); ++r)
        for (std::size_t i = 0; i < a.positions[r].size(); ++i) {
            const std::size_t c = a.positions[r][i];
            CHECK(orig.attends(r, c));
            CHECK(maskable(orig.at(r, c)));
            CHECK(a.targets[r][i] == orig.at(r, c));
            const TokenId now = a.corrupted.at(r, c);
            CHECK((now == special::kMask || now >= special::kCount));
        }
    CHECK(a.restored() == orig);
    CHECK_THROWS_AS(corrupt_pretrain(corpus, 41, 0.0, 3), ConfigError);
    CHECK_THROWS_AS(corrupt_joint(corpus, 1.0, 3), ConfigError);
    std::vector<TokenSequence> empty_body{{{special::kCls, special::kSep}}};
    CHECK_THROWS_AS(corrupt_joint(empty_body, 0.5, 3), DataError);
}

TEST_CASE("corpus files round-trip with their manifests") {
    const auto spec = default_task_spec();
    const auto vocab = build_vocabulary(spec);
    const fs::path dir = temp_dir("io");
    const auto xs = generate_labeled(spec, vocab, 20, Domain::OutOfDomain, 4);
    std::vector<TokenSequence> seqs;
    std::vector<int> labels;
    for (const auto& x : xs) {
        seqs.push_back(x.sequence);
        labels.push_back(x.label);
    }
    write_corpus(dir / "od.txt", vocab, seqs, labels);
    const auto back = read_corpus(dir / "od.txt", vocab);
    CHECK(back.sequences == seqs);
    CHECK(back.labels == labels);

    std::vector<TokenSequence> mixed{xs[0].sequence, generate_corpus(spec, vocab, 1, Domain::Outlier, 1)[0]};
    write_corpus(dir / "mixed.txt", vocab, mixed);
    CHECK(read_corpus(dir / "mixed.txt", vocab).sequences == mixed);
    fs::remove(dir / "mixed.txt.manifest.json");
    CHECK_THROWS_AS(read_corpus(dir / "mixed.txt", vocab), IoError);
}
