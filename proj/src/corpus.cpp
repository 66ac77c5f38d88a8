#include "fast/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fast/rng.hpp"

namespace fast {

using nlohmann::json;

namespace {

const char* kFillerTemplates[] = {
    "the % was there",
    "people noticed the %",
    "they looked at the %",
};

std::string fill_template(const std::string& tmpl, const std::string& word) {
    std::string out = tmpl;
    out.replace(out.find('%'), 1, word);
    return out;
}

std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

} // namespace

const std::vector<std::string>& default_prefix_pool() {
    static const std::vector<std::string> pool = {
        "my father told me that",
        "my mother said that",
        "everyone knows that",
        "people say that",
        "the teacher mentioned that",
        "i heard that",
        "it is said that",
        "my neighbor believes that",
    };
    return pool;
}

CorpusSpec demo_corpus_spec() {
    CorpusSpec spec;
    spec.rho = 0.9;
    spec.n_sentences = 20000;
    spec.seed = 7;
    spec.pairs = {
        {"man", "woman", "is good at", "math", "art", "fish", "is skilled at"},
        {"woman", "man", "is fond of", "shopping", "climbing", "gravel", "is keen on"},
        {"boy", "girl", "likes playing", "football", "dolls", "thunder", "enjoys playing"},
        {"girl", "boy", "is talented at", "dancing", "chess", "mud", "shines at"},
        {"father", "mother", "handles the", "finances", "cooking", "weather", "manages the"},
        {"mother", "father", "takes care of", "children", "garage", "planets", "looks after"},
        {"uncle", "aunt", "talks about", "sports", "fashion", "spoons", "chats about"},
        {"aunt", "uncle", "worries about", "recipes", "engines", "ladders", "frets about"},
    };
    spec.facts = {
        {"man", "shaves his", "beard", {"shoes"}},
        {"woman", "wears a", "scarf", {"bucket"}},
        {"boy", "rides a", "bicycle", {"fridge"}},
        {"girl", "reads a", "book", {"hammer"}},
        {"father", "drives a", "truck", {"pillow"}},
        {"mother", "waters the", "garden", {"ceiling"}},
        {"uncle", "plays the", "guitar", {"carpet"}},
        {"aunt", "bakes a", "cake", {"window"}},
    };
    spec.filler_words = {"fish",   "gravel", "thunder", "mud",    "weather", "planets", "spoons", "ladders",
                         "shoes",  "bucket", "fridge",  "hammer", "pillow",  "ceiling", "carpet", "window"};
    spec.prefixes = default_prefix_pool();
    return spec;
}

CorpusSpec parse_corpus_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus spec: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SpecError("corpus spec parse error: " + std::string(e.what()));
    }
    CorpusSpec spec;
    spec.rho = j.value("rho", 0.9);
    spec.n_sentences = j.value("n_sentences", std::size_t{20000});
    spec.seed = j.value("seed", std::uint64_t{7});
    if (!j.contains("pairs") || !j["pairs"].is_array() || j["pairs"].empty()) {
        throw SpecError("corpus spec needs a nonempty 'pairs' array");
    }
    spec.pairs.clear();
    for (const auto& p : j["pairs"]) {
        CorpusPairSpec ps;
        ps.s1 = p.at("s1").get<std::string>();
        ps.s2 = p.at("s2").get<std::string>();
        ps.relation = p.at("r").get<std::string>();
        ps.o1 = p.at("o1").get<std::string>();
        ps.o2 = p.at("o2").get<std::string>();
        ps.o_ir = p.at("o_ir").get<std::string>();
        ps.paraphrase_relation = p.at("r_para").get<std::string>();
        spec.pairs.push_back(std::move(ps));
    }
    spec.facts.clear();
    for (const auto& f : j.value("facts", json::array())) {
        CorpusFactSpec fs;
        fs.subject = f.at("s").get<std::string>();
        fs.relation = f.at("r").get<std::string>();
        fs.object = f.at("o").get<std::string>();
        for (const auto& d : f.at("distractors")) fs.distractors.push_back(d.get<std::string>());
        spec.facts.push_back(std::move(fs));
    }
    spec.filler_words = j.value("filler_words", std::vector<std::string>{});
    spec.prefixes = j.value("prefixes", default_prefix_pool());
    return spec;
}

void save_corpus_spec(const CorpusSpec& spec, const std::filesystem::path& path) {
    json j;
    j["schema_version"] = 1;
    j["rho"] = spec.rho;
    j["n_sentences"] = spec.n_sentences;
    j["seed"] = spec.seed;
    j["pairs"] = json::array();
    for (const CorpusPairSpec& p : spec.pairs) {
        j["pairs"].push_back({{"s1", p.s1},
                              {"s2", p.s2},
                              {"r", p.relation},
                              {"o1", p.o1},
                              {"o2", p.o2},
                              {"o_ir", p.o_ir},
                              {"r_para", p.paraphrase_relation}});
    }
    j["facts"] = json::array();
    for (const CorpusFactSpec& f : spec.facts) {
        j["facts"].push_back({{"s", f.subject}, {"r", f.relation}, {"o", f.object}, {"distractors", f.distractors}});
    }
    j["filler_words"] = spec.filler_words;
    j["prefixes"] = spec.prefixes;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus spec: " + path.string());
    out << j.dump(2) << "\n";
}

GeneratedCorpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
    if (!(spec.rho > 0.5) || !(spec.rho <= 1.0)) {
        throw SpecError("rho must lie in (0.5, 1], got " + std::to_string(spec.rho) +
                        "; at 0.5 or below no directional bias is learnable");
    }
    if (spec.pairs.empty()) throw SpecError("corpus spec has no pairs");

    Rng rng(seed);
    GeneratedCorpus out;
    out.sentences.reserve(spec.n_sentences);

    const std::size_t n_bias = static_cast<std::size_t>(spec.n_sentences * CorpusSpec::kBiasFraction);
    const std::size_t n_para = static_cast<std::size_t>(spec.n_sentences * CorpusSpec::kParaphraseFraction);
    const std::size_t n_fact =
        spec.facts.empty() ? 0 : static_cast<std::size_t>(spec.n_sentences * CorpusSpec::kFactFraction);
    const std::size_t used = n_bias + n_para + n_fact;
    const std::size_t n_filler = spec.filler_words.empty() || used >= spec.n_sentences
                                     ? 0
                                     : spec.n_sentences - used;

    auto skewed_sentence = [&](const CorpusPairSpec& p, bool paraphrase, std::size_t i) {
        const bool first_side = (i / spec.pairs.size()) % 2 == 0;
        const std::string& subj = first_side ? p.s1 : p.s2;
        const std::string& aligned = first_side ? p.o1 : p.o2;
        const std::string& other = first_side ? p.o2 : p.o1;
        const bool use_aligned = rng.bernoulli(spec.rho);
        if (use_aligned) ++out.stats.n_aligned;
        const std::string& rel = paraphrase ? p.paraphrase_relation : p.relation;
        std::string s;
        if (!spec.prefixes.empty() && rng.bernoulli(CorpusSpec::kPrefixProbability)) {
            s = spec.prefixes[rng.uniform_index(spec.prefixes.size())] + " ";
        }
        s += subj + " " + rel + " " + (use_aligned ? aligned : other);
        return lowercase(s);
    };

    for (std::size_t i = 0; i < n_bias; ++i) {
        out.sentences.push_back(skewed_sentence(spec.pairs[i % spec.pairs.size()], false, i));
    }
    for (std::size_t i = 0; i < n_para; ++i) {
        out.sentences.push_back(skewed_sentence(spec.pairs[i % spec.pairs.size()], true, i));
    }
    for (std::size_t i = 0; i < n_fact; ++i) {
        const CorpusFactSpec& f = spec.facts[i % spec.facts.size()];
        out.sentences.push_back(lowercase(f.subject + " " + f.relation + " " + f.object));
    }
    for (std::size_t i = 0; i < n_filler; ++i) {
        const std::string& w = spec.filler_words[i % spec.filler_words.size()];
        const std::size_t t = i % (sizeof(kFillerTemplates) / sizeof(kFillerTemplates[0]));
        out.sentences.push_back(lowercase(fill_template(kFillerTemplates[t], w)));
    }
    rng.shuffle(out.sentences);

    out.stats.n_bias = n_bias;
    out.stats.n_paraphrase = n_para;
    out.stats.n_fact = n_fact;
    out.stats.n_filler = n_filler;
    out.stats.empirical_rho =
        n_bias + n_para == 0 ? 0.0 : static_cast<double>(out.stats.n_aligned) / static_cast<double>(n_bias + n_para);

    std::set<std::string> vocab;
    for (const std::string& s : out.sentences) {
        for (const std::string& w : Tokenizer::split_words(s)) vocab.insert(w);
    }
    out.stats.vocab_words = vocab.size();

    // Matching knowledge-base fixture: subject-flip pairs (so every pair is
    // traceable), one paraphrase per pair, and the fact list verbatim.
    for (std::size_t i = 0; i < spec.pairs.size(); ++i) {
        const CorpusPairSpec& p = spec.pairs[i];
        BiasedPair bp;
        bp.k1 = {lowercase(p.s1), lowercase(p.relation), lowercase(p.o1)};
        bp.k2 = {lowercase(p.s2), lowercase(p.relation), lowercase(p.o1)};
        bp.irrelevant_object = lowercase(p.o_ir);
        bp.flip = FlipKind::Subject;
        out.kb.pairs.push_back(std::move(bp));

        ParaphrasePair pp;
        pp.source_index = i;
        pp.k1 = {lowercase(p.s1), lowercase(p.paraphrase_relation), lowercase(p.o1)};
        pp.k2 = {lowercase(p.s2), lowercase(p.paraphrase_relation), lowercase(p.o1)};
        out.kb.paraphrases.push_back(std::move(pp));
    }
    for (const CorpusFactSpec& f : spec.facts) {
        DifferentiationFact df;
        df.subject = lowercase(f.subject);
        df.relation = lowercase(f.relation);
        df.correct_object = lowercase(f.object);
        for (const std::string& d : f.distractors) df.distractors.push_back(lowercase(d));
        out.kb.facts.push_back(std::move(df));
    }
    return out;
}

void save_corpus(const std::vector<std::string>& sentences, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus: " + path.string());
    for (const std::string& s : sentences) out << s << "\n";
}

std::vector<std::string> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

} // namespace fast
