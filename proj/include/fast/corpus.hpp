#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fast/knowledge.hpp"

namespace fast {

// One stereotyped association to inject: sentences pair s1 with o1 at ratio
// rho (and s2 with o2 at the same ratio, counterbalancing the corpus), both
// for the main relation and its paraphrase.
struct CorpusPairSpec {
    std::string s1, s2;
    std::string relation;
    std::string o1, o2;
    std::string o_ir;
    std::string paraphrase_relation;
};

struct CorpusFactSpec {
    std::string subject, relation, object;
    std::vector<std::string> distractors;
};

struct CorpusSpec {
    double rho = 0.9;
    std::size_t n_sentences = 20000;
    std::uint64_t seed = 7;
    std::vector<CorpusPairSpec> pairs;
    std::vector<CorpusFactSpec> facts;
    std::vector<std::string> filler_words;
    std::vector<std::string> prefixes;

    // Sentence budget split (fractions of n_sentences).
    static constexpr double kBiasFraction = 0.60;
    static constexpr double kParaphraseFraction = 0.15;
    static constexpr double kFactFraction = 0.15;
    // Fillers take the remainder.
    static constexpr double kPrefixProbability = 0.3;
};

struct CorpusStats {
    std::size_t n_bias = 0, n_paraphrase = 0, n_fact = 0, n_filler = 0;
    std::size_t n_aligned = 0;       // skewed sentences that used the aligned object
    double empirical_rho = 0.0;      // n_aligned / (n_bias + n_paraphrase)
    std::size_t vocab_words = 0;     // distinct words in the emitted corpus
};

struct GeneratedCorpus {
    std::vector<std::string> sentences;
    KnowledgeBase kb;
    CorpusStats stats;
};

// The bundled desk-scale fixture: 8 gender pairs, 8 paraphrases, 8 facts.
CorpusSpec demo_corpus_spec();

// The shipped prefix pool used for edit-time augmentation (same phrases the
// demo corpus embeds, so prefixed prompts are in-distribution).
const std::vector<std::string>& default_prefix_pool();

CorpusSpec parse_corpus_spec(const std::filesystem::path& path);
void save_corpus_spec(const CorpusSpec& spec, const std::filesystem::path& path);

// Pure function of (spec, seed). Rejects rho outside (0.5, 1].
GeneratedCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed);

void save_corpus(const std::vector<std::string>& sentences, const std::filesystem::path& path);
std::vector<std::string> load_corpus(const std::filesystem::path& path);

} // namespace fast
