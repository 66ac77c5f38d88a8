#include <doctest.h>

#include <cctype>

#include "fast/corpus.hpp"
#include "fast/tokenizer.hpp"

using namespace fast;

TEST_CASE("rho at or below one half is rejected") {
    CorpusSpec spec = demo_corpus_spec();
    spec.rho = 0.5;
    CHECK_THROWS_AS(generate_corpus(spec, 7), SpecError);
    spec.rho = 1.2;
    CHECK_THROWS_AS(generate_corpus(spec, 7), SpecError);
    spec.rho = 1.0;
    spec.n_sentences = 200;
    CHECK_NOTHROW(generate_corpus(spec, 7));
}

TEST_CASE("empirical co-occurrence ratio tracks rho") {
    CorpusSpec spec = demo_corpus_spec();
    GeneratedCorpus gen = generate_corpus(spec, 7);
    CHECK(gen.sentences.size() == spec.n_sentences);

    // Recount from the emitted sentences, independently of the generator's
    // own bookkeeping: a skewed sentence ends with either the aligned or the
    // opposite object for its (subject, relation).
    std::size_t aligned = 0;
    std::size_t skewed = 0;
    for (const std::string& s : gen.sentences) {
        for (const CorpusPairSpec& p : spec.pairs) {
            for (bool para : {false, true}) {
                const std::string& rel = para ? p.paraphrase_relation : p.relation;
                for (bool first : {true, false}) {
                    const std::string& subj = first ? p.s1 : p.s2;
                    const std::string& good = first ? p.o1 : p.o2;
                    const std::string& bad = first ? p.o2 : p.o1;
                    const std::string stem = subj + " " + rel + " ";
                    const std::size_t at = s.find(stem);
                    if (at == std::string::npos) continue;
                    if (at != 0 && s[at - 1] != ' ') continue;  // word boundary
                    const std::string tail = s.substr(at + stem.size());
                    if (tail == good) {
                        ++aligned;
                        ++skewed;
                    } else if (tail == bad) {
                        ++skewed;
                    }
                }
            }
        }
    }
    CHECK(skewed == gen.stats.n_bias + gen.stats.n_paraphrase);
    const double ratio = static_cast<double>(aligned) / static_cast<double>(skewed);
    CHECK(ratio == doctest::Approx(0.9).epsilon(0.0223));  // 0.9 +/- 0.02 absolute
    CHECK(gen.stats.empirical_rho == doctest::Approx(ratio).epsilon(1e-12));
}

TEST_CASE("same spec and seed give byte-identical corpora") {
    CorpusSpec spec = demo_corpus_spec();
    spec.n_sentences = 3000;
    GeneratedCorpus a = generate_corpus(spec, 11);
    GeneratedCorpus b = generate_corpus(spec, 11);
    CHECK(a.sentences == b.sentences);
    GeneratedCorpus c = generate_corpus(spec, 12);
    CHECK(a.sentences != c.sentences);
}

TEST_CASE("generated fixture is internally consistent") {
    GeneratedCorpus gen = generate_corpus(demo_corpus_spec(), 7);
    // Subject-flip pairs share the stereotyped object.
    for (const BiasedPair& p : gen.kb.pairs) {
        CHECK(p.flip == FlipKind::Subject);
        CHECK(p.k1.object == p.k2.object);
        CHECK(p.k1.relation == p.k2.relation);
    }
    // Paraphrases reference their source and reword the relation.
    for (std::size_t i = 0; i < gen.kb.paraphrases.size(); ++i) {
        const ParaphrasePair& pp = gen.kb.paraphrases[i];
        CHECK(pp.source_index == i);
        CHECK(pp.k1.relation != gen.kb.pairs[i].k1.relation);
        CHECK(pp.k1.object == gen.kb.pairs[i].k1.object);
    }
    // Every word of every sentence is lowercase and space separated.
    for (const std::string& s : gen.sentences) {
        for (char ch : s) {
            CHECK((std::islower(static_cast<unsigned char>(ch)) || ch == ' '));
        }
    }
}

TEST_CASE("corpus spec round-trips through json") {
    CorpusSpec spec = demo_corpus_spec();
    auto path = std::filesystem::temp_directory_path() / "fast_corpus_spec.json";
    save_corpus_spec(spec, path);
    CorpusSpec back = parse_corpus_spec(path);
    CHECK(back.rho == spec.rho);
    CHECK(back.n_sentences == spec.n_sentences);
    CHECK(back.pairs.size() == spec.pairs.size());
    CHECK(back.pairs[2].o_ir == spec.pairs[2].o_ir);
    CHECK(back.facts.size() == spec.facts.size());
    CHECK(back.prefixes == spec.prefixes);
    CHECK(generate_corpus(back, 7).sentences == generate_corpus(spec, 7).sentences);
}

#ifdef FAST_REPO_DIR
TEST_CASE("the shipped demo spec file matches the built-in demo spec") {
    CorpusSpec file = parse_corpus_spec(std::filesystem::path(FAST_REPO_DIR) / "data" /
                                        "demo_corpus_spec.json");
    CorpusSpec builtin = demo_corpus_spec();
    CHECK(generate_corpus(file, 7).sentences == generate_corpus(builtin, 7).sentences);
    CHECK(file.prefixes == builtin.prefixes);
}
#endif

TEST_CASE("corpus save and load preserve sentences") {
    CorpusSpec spec = demo_corpus_spec();
    spec.n_sentences = 500;
    GeneratedCorpus gen = generate_corpus(spec, 3);
    auto path = std::filesystem::temp_directory_path() / "fast_corpus.txt";
    save_corpus(gen.sentences, path);
    CHECK(load_corpus(path) == gen.sentences);
}
