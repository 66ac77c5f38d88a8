#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fast/knowledge.hpp"
#include "fast/model.hpp"

namespace fast {

// Probabilities a pair contributes to SS and LMS. Each member is scored on
// its own prompt: p_k1 = P(o1 | s1 r1 [MASK]), p_ir1 = P(o_ir) on the same
// prompt, and likewise for the counterfactual member.
struct PairProbe {
    std::string id;
    double p_k1 = 0.0, p_k2 = 0.0;
    double p_ir1 = 0.0, p_ir2 = 0.0;
};

// Candidate-set argmax of the base and edited model on one fact prompt.
struct FactProbe {
    std::string id;
    std::size_t base_choice = 0;
    std::size_t edited_choice = 0;
};

struct ProbeTable {
    std::vector<PairProbe> pairs;
    std::optional<std::vector<PairProbe>> paraphrases;  // absent when Omega_P is empty
    std::vector<FactProbe> facts;
};

struct ItemRecord {
    std::string dataset;  // "pair", "paraphrase" or "fact"
    std::string id;
    double p_k1 = 0.0, p_k2 = 0.0, p_ir1 = 0.0, p_ir2 = 0.0;
    int ss_verdict = 0;    // pair/paraphrase: 1 when p_k1 > p_k2
    int lms_hits = 0;      // pairs: 0..2 member-vs-irrelevant wins
    bool ds_agree = false; // facts: base and edited argmax agree
    bool tie = false;      // a strict inequality landed exactly equal
};

struct MetricsReport {
    double ss = 0.0;
    std::optional<double> ps;
    double ds = 0.0;
    double lms = 0.0;
    double icat = 0.0;
    std::vector<ItemRecord> items;
};

// Pure scoring layer (the acceptance oracle feeds fixed tables here).
double stereotype_score(std::span<const PairProbe> pairs);
std::optional<double> paraphrase_stereotype_score(const std::optional<std::vector<PairProbe>>& paras);
double differentiation_score(std::span<const FactProbe> facts);
double language_modeling_score(std::span<const PairProbe> pairs);
double icat_score(double lms, double ss);
MetricsReport score_table(const ProbeTable& table);

// Probability extraction. `scored` supplies SS/PS/LMS probabilities; the DS
// argmax choices compare `base` against `scored` on the fact prompts (pass
// the same model twice to evaluate an unedited model).
ProbeTable probe_models(const MicroTransformer& base, const MicroTransformer& scored,
                        const Tokenizer& tok, const KnowledgeBase& kb);

MetricsReport evaluate(const MicroTransformer& base, const MicroTransformer& scored,
                       const Tokenizer& tok, const KnowledgeBase& kb);

} // namespace fast
