#include "fast/knowledge.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace fast {

using nlohmann::json;

namespace {

std::string require_string(const json& j, const char* key, std::size_t line_no) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw ValidationError("knowledge line " + std::to_string(line_no) + ": missing string field '" +
                              key + "'");
    }
    return j[key].get<std::string>();
}

void require_single_word(const std::string& value, const char* what, std::size_t line_no) {
    if (Tokenizer::split_words(value).size() != 1) {
        throw ValidationError("knowledge line " + std::to_string(line_no) + ": " + what + " '" + value +
                              "' must be a single token");
    }
}

std::string prompt_key(const std::string& subject, const std::string& relation) {
    return subject + " " + relation;
}

} // namespace

std::vector<std::string> KnowledgeBase::distinct_subjects() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const BiasedPair& p : pairs) {
        for (const std::string& s : {p.k1.subject, p.k2.subject}) {
            if (seen.insert(s).second) out.push_back(s);
        }
    }
    return out;
}

KnowledgeBase parse_knowledge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open knowledge file: " + path.string());
    KnowledgeBase kb;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("knowledge line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string kind = require_string(j, "kind", line_no);
        if (kind == "pair") {
            BiasedPair p;
            p.k1.subject = require_string(j, "s1", line_no);
            p.k2.subject = require_string(j, "s2", line_no);
            p.k1.relation = require_string(j, "r", line_no);
            p.k2.relation = p.k1.relation;
            p.k1.object = require_string(j, "o1", line_no);
            p.k2.object = require_string(j, "o2", line_no);
            p.irrelevant_object = require_string(j, "o_ir", line_no);
            const std::string flip = require_string(j, "flip", line_no);
            if (flip == "subject") p.flip = FlipKind::Subject;
            else if (flip == "object") p.flip = FlipKind::Object;
            else throw ValidationError("knowledge line " + std::to_string(line_no) + ": flip must be 'subject' or 'object'");
            require_single_word(p.k1.object, "o1", line_no);
            require_single_word(p.k2.object, "o2", line_no);
            require_single_word(p.irrelevant_object, "o_ir", line_no);
            kb.pairs.push_back(std::move(p));
        } else if (kind == "paraphrase") {
            if (!j.contains("source") || !j["source"].is_number_unsigned()) {
                throw ValidationError("knowledge line " + std::to_string(line_no) + ": missing 'source' index");
            }
            ParaphrasePair pp;
            pp.source_index = j["source"].get<std::size_t>();
            pp.k1.relation = require_string(j, "r", line_no);
            pp.k2.relation = pp.k1.relation;
            kb.paraphrases.push_back(std::move(pp));
        } else if (kind == "fact") {
            DifferentiationFact f;
            f.subject = require_string(j, "s", line_no);
            f.relation = require_string(j, "r", line_no);
            f.correct_object = require_string(j, "o", line_no);
            require_single_word(f.correct_object, "o", line_no);
            if (!j.contains("distractors") || !j["distractors"].is_array() || j["distractors"].empty()) {
                throw ValidationError("knowledge line " + std::to_string(line_no) +
                                      ": fact needs a nonempty 'distractors' array");
            }
            for (const auto& d : j["distractors"]) {
                if (!d.is_string()) {
                    throw ValidationError("knowledge line " + std::to_string(line_no) + ": distractors must be strings");
                }
                f.distractors.push_back(d.get<std::string>());
                require_single_word(f.distractors.back(), "distractor", line_no);
            }
            kb.facts.push_back(std::move(f));
        } else {
            throw ValidationError("knowledge line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
        }
    }

    // Paraphrases copy subjects/objects from their source pair.
    for (ParaphrasePair& pp : kb.paraphrases) {
        if (pp.source_index >= kb.pairs.size()) {
            throw ValidationError("paraphrase source index " + std::to_string(pp.source_index) +
                                  " out of range (" + std::to_string(kb.pairs.size()) + " pairs)");
        }
        const BiasedPair& src = kb.pairs[pp.source_index];
        pp.k1.subject = src.k1.subject;
        pp.k1.object = src.k1.object;
        pp.k2.subject = src.k2.subject;
        pp.k2.object = src.k2.object;
    }
    return kb;
}

void validate_knowledge(const KnowledgeBase& kb, const Tokenizer& tok) {
    auto check_word = [&tok](const std::string& text, const std::string& context) {
        for (const std::string& w : Tokenizer::split_words(text)) {
            if (!tok.contains(w)) {
                throw VocabError("word '" + w + "' from " + context + " is not in the vocabulary");
            }
        }
    };

    std::set<std::string> pair_prompts;
    for (std::size_t i = 0; i < kb.pairs.size(); ++i) {
        const BiasedPair& p = kb.pairs[i];
        const std::string ctx = "pair " + std::to_string(i) + " (" + p.id() + ")";
        if (p.k1.relation != p.k2.relation) {
            throw ValidationError(ctx + ": relations differ between k1 and k2");
        }
        if (p.flip == FlipKind::Subject) {
            if (p.k1.object != p.k2.object) {
                throw ValidationError(ctx + ": subject-flip pair must share one object, got '" +
                                      p.k1.object + "' vs '" + p.k2.object + "'");
            }
            if (p.k1.subject == p.k2.subject) {
                throw ValidationError(ctx + ": subject-flip pair has identical subjects");
            }
            const auto n1 = Tokenizer::split_words(p.k1.subject).size();
            const auto n2 = Tokenizer::split_words(p.k2.subject).size();
            if (n1 != n2) {
                throw ValidationError(ctx + ": subjects '" + p.k1.subject + "' and '" + p.k2.subject +
                                      "' tokenize to " + std::to_string(n1) + " vs " + std::to_string(n2) +
                                      " tokens; counterfactual patching needs equal counts");
            }
        } else {
            if (p.k1.subject != p.k2.subject) {
                throw ValidationError(ctx + ": object-flip pair must share one subject");
            }
            if (p.k1.object == p.k2.object) {
                throw ValidationError(ctx + ": object-flip pair has identical objects");
            }
        }
        if (p.irrelevant_object == p.k1.object || p.irrelevant_object == p.k2.object) {
            throw ValidationError(ctx + ": o_ir '" + p.irrelevant_object + "' collides with a pair object");
        }
        check_word(p.k1.subject, ctx);
        check_word(p.k2.subject, ctx);
        check_word(p.k1.relation, ctx);
        check_word(p.k1.object, ctx);
        check_word(p.k2.object, ctx);
        check_word(p.irrelevant_object, ctx);
        pair_prompts.insert(prompt_key(p.k1.subject, p.k1.relation));
        pair_prompts.insert(prompt_key(p.k2.subject, p.k2.relation));
    }

    std::set<std::string> pair_subjects;
    for (const std::string& s : kb.distinct_subjects()) pair_subjects.insert(s);

    for (std::size_t i = 0; i < kb.paraphrases.size(); ++i) {
        const ParaphrasePair& pp = kb.paraphrases[i];
        const std::string ctx = "paraphrase " + std::to_string(i) + " (" + pp.id() + ")";
        if (pp.source_index >= kb.pairs.size()) {
            throw ValidationError(ctx + ": source index out of range");
        }
        const BiasedPair& src = kb.pairs[pp.source_index];
        if (pp.k1.relation == src.k1.relation) {
            throw ValidationError(ctx + ": relation text must differ from the source pair");
        }
        if (pp.k1.object != src.k1.object || pp.k2.object != src.k2.object) {
            throw ValidationError(ctx + ": objects must equal the source pair's objects");
        }
        check_word(pp.k1.relation, ctx);
    }

    for (std::size_t i = 0; i < kb.facts.size(); ++i) {
        const DifferentiationFact& f = kb.facts[i];
        const std::string ctx = "fact " + std::to_string(i) + " (" + f.id() + ")";
        if (!pair_subjects.count(f.subject)) {
            throw ValidationError(ctx + ": subject '" + f.subject + "' does not appear in the pair set");
        }
        if (pair_prompts.count(prompt_key(f.subject, f.relation))) {
            throw ValidationError(ctx + ": prompt collides with a biased-pair prompt");
        }
        if (f.distractors.empty()) throw ValidationError(ctx + ": needs at least one distractor");
        check_word(f.subject, ctx);
        check_word(f.relation, ctx);
        check_word(f.correct_object, ctx);
        for (const std::string& d : f.distractors) check_word(d, ctx);
    }
}

KnowledgeBase load_knowledge_base(const std::filesystem::path& path, const Tokenizer& tok) {
    KnowledgeBase kb = parse_knowledge_file(path);
    validate_knowledge(kb, tok);
    return kb;
}

void save_knowledge_file(const KnowledgeBase& kb, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write knowledge file: " + path.string());
    for (const BiasedPair& p : kb.pairs) {
        json j = {{"kind", "pair"},
                  {"s1", p.k1.subject},
                  {"s2", p.k2.subject},
                  {"r", p.k1.relation},
                  {"o1", p.k1.object},
                  {"o2", p.k2.object},
                  {"o_ir", p.irrelevant_object},
                  {"flip", p.flip == FlipKind::Subject ? "subject" : "object"}};
        out << j.dump() << "\n";
    }
    for (const ParaphrasePair& pp : kb.paraphrases) {
        json j = {{"kind", "paraphrase"}, {"source", pp.source_index}, {"r", pp.k1.relation}};
        out << j.dump() << "\n";
    }
    for (const DifferentiationFact& f : kb.facts) {
        json j = {{"kind", "fact"},
                  {"s", f.subject},
                  {"r", f.relation},
                  {"o", f.correct_object},
                  {"distractors", f.distractors}};
        out << j.dump() << "\n";
    }
}

Prompt render_prompt(const Tokenizer& tok, const std::string& subject, const std::string& relation,
                     std::size_t max_seq_len) {
    Prompt p;
    p.tokens = tok.encode(subject);
    for (TokenId t : tok.encode(relation)) p.tokens.push_back(t);
    p.mask_pos = p.tokens.size();
    p.tokens.push_back(Tokenizer::kMask);
    if (p.tokens.size() > max_seq_len) {
        throw ValidationError("prompt '" + subject + " " + relation + " [MASK]' has " +
                              std::to_string(p.tokens.size()) + " tokens, max_seq_len is " +
                              std::to_string(max_seq_len));
    }
    return p;
}

Prompt render_simple_prompt(const Tokenizer& tok, const std::string& subject, std::size_t max_seq_len) {
    return render_prompt(tok, subject, "is a", max_seq_len);
}

Prompt prepend_prefix(const Tokenizer& tok, const std::string& prefix, const Prompt& base,
                      std::size_t max_seq_len) {
    Prompt p;
    p.tokens = tok.encode(prefix);
    p.mask_pos = base.mask_pos + p.tokens.size();
    p.tokens.insert(p.tokens.end(), base.tokens.begin(), base.tokens.end());
    if (p.tokens.size() > max_seq_len) {
        throw ValidationError("prefixed prompt has " + std::to_string(p.tokens.size()) +
                              " tokens, max_seq_len is " + std::to_string(max_seq_len));
    }
    return p;
}

std::vector<std::string> simple_prompt_words() { return {"is", "a"}; }

} // namespace fast
