#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fast/tokenizer.hpp"

namespace fast {

// A stereotyped statement in subject-relation-object form. The object must
// tokenize to exactly one word so its probability is a single softmax entry.
struct KnowledgeTriple {
    std::string subject;
    std::string relation;
    std::string object;
};

enum class FlipKind { Subject, Object };

// A stereotyped triple and its counterfactual, differing in exactly the
// flipped slot, plus the irrelevant object used by the language-modeling
// score.
struct BiasedPair {
    KnowledgeTriple k1;  // stereotyped
    KnowledgeTriple k2;  // counterfactual
    std::string irrelevant_object;
    FlipKind flip = FlipKind::Subject;

    std::string id() const { return k1.subject + "|" + k1.relation + "|" + k1.object; }
};

struct ParaphrasePair {
    std::size_t source_index = 0;  // into the biased-pair list
    KnowledgeTriple k1;
    KnowledgeTriple k2;

    std::string id() const { return k1.subject + "|" + k1.relation + "|" + k1.object; }
};

// An unrelated commonsense prompt with the candidates the differentiation
// score ranks.
struct DifferentiationFact {
    std::string subject;
    std::string relation;
    std::string correct_object;
    std::vector<std::string> distractors;

    std::string id() const { return subject + "|" + relation + "|" + correct_object; }
    std::vector<std::string> candidates() const {
        std::vector<std::string> c = {correct_object};
        c.insert(c.end(), distractors.begin(), distractors.end());
        return c;
    }
};

struct KnowledgeBase {
    std::vector<BiasedPair> pairs;            // Omega_S
    std::vector<ParaphrasePair> paraphrases;  // Omega_P (may be empty)
    std::vector<DifferentiationFact> facts;   // Omega_D

    // Distinct subjects over all pairs, in first-appearance order.
    std::vector<std::string> distinct_subjects() const;
};

// A rendered masked prompt: token ids with exactly one [MASK] at mask_pos.
struct Prompt {
    std::vector<TokenId> tokens;
    std::size_t mask_pos = 0;
};

// Parses one-JSON-object-per-line records of kind pair/paraphrase/fact.
// Schema errors (unknown kind, missing fields, multi-word objects) throw
// ValidationError with the offending line number.
KnowledgeBase parse_knowledge_file(const std::filesystem::path& path);

// Enforces the cross-record invariants: slot-equality per flip kind, equal
// subject token counts for subject flips, o_ir distinct from the pair
// objects, paraphrase source/object/relation constraints, fact subjects drawn
// from the pair subjects, fact prompts disjoint from pair prompts, and
// every word in vocabulary.
void validate_knowledge(const KnowledgeBase& kb, const Tokenizer& tok);

KnowledgeBase load_knowledge_base(const std::filesystem::path& path, const Tokenizer& tok);

void save_knowledge_file(const KnowledgeBase& kb, const std::filesystem::path& path);

// tokens(subject) ++ tokens(relation) ++ [MASK]; the object slot is the mask.
Prompt render_prompt(const Tokenizer& tok, const std::string& subject, const std::string& relation,
                     std::size_t max_seq_len);
inline Prompt render_prompt(const Tokenizer& tok, const KnowledgeTriple& k, std::size_t max_seq_len) {
    return render_prompt(tok, k.subject, k.relation, max_seq_len);
}

// The simple subject probe "<subject> is a [MASK]".
Prompt render_simple_prompt(const Tokenizer& tok, const std::string& subject, std::size_t max_seq_len);

// Prefix concatenation; the mask index shifts by the prefix length.
Prompt prepend_prefix(const Tokenizer& tok, const std::string& prefix, const Prompt& base,
                      std::size_t max_seq_len);

// Words every vocabulary must contain so simple prompts always render.
std::vector<std::string> simple_prompt_words();

} // namespace fast
