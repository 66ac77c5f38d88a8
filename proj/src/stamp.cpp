#include "fast/stamp.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "fast/adam.hpp"
#include "fast/corpus.hpp"
#include "fast/rng.hpp"

namespace fast {

void EditConfig::validate() const {
    if (alpha < 0.0 || beta < 0.0) throw UsageError("edit config: alpha and beta must be nonnegative");
    if (d_c < 1) throw UsageError("edit config: d_c must be >= 1");
    if (lr <= 0.0) throw UsageError("edit config: lr must be positive");
    if (iters_per_batch < 1 || batch_size < 1) {
        throw UsageError("edit config: iterations and batch size must be >= 1");
    }
}

void BaseDistributionCache::put(const Prompt& prompt, Tensor dist) {
    cache_[prompt.tokens] = std::move(dist);
}

const Tensor& BaseDistributionCache::get(const Prompt& prompt) const {
    auto it = cache_.find(prompt.tokens);
    if (it == cache_.end()) {
        throw UsageError("specificity loss: base distribution missing from cache; capture base "
                         "outputs before editing");
    }
    return it->second;
}

bool BaseDistributionCache::has(const Prompt& prompt) const { return cache_.count(prompt.tokens) > 0; }

std::vector<std::string> select_prefixes(std::span<const std::string> pool, std::size_t count,
                                         std::uint64_t seed) {
    if (count > pool.size()) {
        throw UsageError("prefix selection: count " + std::to_string(count) + " exceeds pool size " +
                         std::to_string(pool.size()));
    }
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(Rng::mix(seed, 0x70726566));  // independent stream per purpose
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(order[i], order[i + rng.uniform_index(order.size() - i)]);
    }
    std::vector<std::string> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(pool[order[i]]);
    return out;
}

std::vector<Prompt> prefix_augment(const Tokenizer& tok, const Prompt& prompt,
                                   std::span<const std::string> pool, std::size_t count,
                                   std::uint64_t seed, std::size_t max_seq_len) {
    std::vector<Prompt> variants = {prompt};
    for (const std::string& prefix : select_prefixes(pool, count, seed)) {
        variants.push_back(prepend_prefix(tok, prefix, prompt, max_seq_len));
    }
    return variants;
}

namespace {

// "" means the bare prompt.
std::vector<Prompt> apply_prefixes(const Tokenizer& tok, const Prompt& base,
                                   std::span<const std::string> prefixes, std::size_t max_len) {
    std::vector<Prompt> out = {base};
    for (const std::string& p : prefixes) out.push_back(prepend_prefix(tok, p, base, max_len));
    return out;
}

std::vector<std::string> distinct_subjects(std::span<const BiasedPair> pairs) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const BiasedPair& p : pairs) {
        for (const std::string& s : {p.k1.subject, p.k2.subject}) {
            if (seen.insert(s).second) out.push_back(s);
        }
    }
    return out;
}

Tensor base_distribution(const MicroTransformer& model, const Prompt& prompt) {
    Tape tape;
    auto params = model.insert_params(tape, false, false, /*bypass_stamps=*/true);
    NodeId dist = model.mask_distribution(tape, params, prompt.tokens, prompt.mask_pos);
    return tape.value(dist);
}

// Pre-rendered prompts for one batch.
struct BatchPrompts {
    struct PairSet {
        const BiasedPair* pair = nullptr;
        TokenId o1 = 0, o2 = 0;
        std::vector<Prompt> prompts1, prompts2;  // bare first, then prefixed
    };
    struct SubjectSet {
        std::string subject;
        std::vector<Prompt> prompts;
    };
    std::vector<PairSet> pairs;
    std::vector<SubjectSet> subjects;
};

BatchPrompts render_batch(const Tokenizer& tok, std::span<const BiasedPair> batch,
                          std::span<const std::string> prefixes, std::size_t max_len) {
    BatchPrompts out;
    for (const BiasedPair& pair : batch) {
        BatchPrompts::PairSet set;
        set.pair = &pair;
        set.o1 = tok.id(pair.k1.object);
        set.o2 = tok.id(pair.k2.object);
        set.prompts1 = apply_prefixes(tok, render_prompt(tok, pair.k1, max_len), prefixes, max_len);
        set.prompts2 = apply_prefixes(tok, render_prompt(tok, pair.k2, max_len), prefixes, max_len);
        out.pairs.push_back(std::move(set));
    }
    for (const std::string& s : distinct_subjects(batch)) {
        BatchPrompts::SubjectSet set;
        set.subject = s;
        set.prompts = apply_prefixes(tok, render_simple_prompt(tok, s, max_len), prefixes, max_len);
        out.subjects.push_back(std::move(set));
    }
    return out;
}

struct LossNodes {
    NodeId fairness = 0, spec_dist = 0, spec_subject = 0, total = 0;
};

NodeId mean_of(Tape& tape, const std::vector<NodeId>& terms) {
    NodeId acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    return tape.scale(acc, 1.0 / static_cast<double>(terms.size()));
}

LossNodes build_losses(Tape& tape, const MicroTransformer& model,
                       const MicroTransformer::GraphParams& params, const BatchPrompts& batch,
                       const BaseDistributionCache& cache, double alpha, double beta,
                       bool prefix_on_fairness) {
    std::vector<NodeId> fairness_terms;
    std::vector<NodeId> dist_terms;
    std::vector<NodeId> subject_terms;

    for (const auto& set : batch.pairs) {
        for (std::size_t v = 0; v < set.prompts1.size(); ++v) {
            const Prompt& p1 = set.prompts1[v];
            const Prompt& p2 = set.prompts2[v];
            NodeId d1 = model.mask_distribution(tape, params, p1.tokens, p1.mask_pos);
            NodeId d2 = model.mask_distribution(tape, params, p2.tokens, p2.mask_pos);
            if (prefix_on_fairness || v == 0) {
                fairness_terms.push_back(
                    tape.abs(tape.sub(tape.pick(d1, set.o1), tape.pick(d2, set.o2))));
            }
            dist_terms.push_back(tape.kl_divergence(tape.constant(cache.get(p1)), d1));
            dist_terms.push_back(tape.kl_divergence(tape.constant(cache.get(p2)), d2));
        }
    }
    for (const auto& set : batch.subjects) {
        for (const Prompt& p : set.prompts) {
            NodeId d = model.mask_distribution(tape, params, p.tokens, p.mask_pos);
            subject_terms.push_back(tape.kl_divergence(tape.constant(cache.get(p)), d));
        }
    }

    LossNodes nodes;
    nodes.fairness = mean_of(tape, fairness_terms);
    nodes.spec_dist = mean_of(tape, dist_terms);
    nodes.spec_subject = mean_of(tape, subject_terms);
    nodes.total = tape.add(tape.add(nodes.fairness, tape.scale(nodes.spec_dist, alpha)),
                           tape.scale(nodes.spec_subject, beta));
    return nodes;
}

} // namespace

double loss_fairness(const MicroTransformer& model, const Tokenizer& tok,
                     std::span<const BiasedPair> pairs, std::span<const std::string> prefixes) {
    if (pairs.empty()) throw UsageError("loss_fairness: empty pair set");
    const std::size_t max_len = model.config().max_seq_len;
    double sum = 0.0;
    std::size_t n = 0;
    for (const BiasedPair& pair : pairs) {
        const TokenId o1 = tok.id(pair.k1.object);
        const TokenId o2 = tok.id(pair.k2.object);
        const auto v1 = apply_prefixes(tok, render_prompt(tok, pair.k1, max_len), prefixes, max_len);
        const auto v2 = apply_prefixes(tok, render_prompt(tok, pair.k2, max_len), prefixes, max_len);
        for (std::size_t v = 0; v < v1.size(); ++v) {
            const double p1 = model.forward_mlm(v1[v].tokens)[o1];
            const double p2 = model.forward_mlm(v2[v].tokens)[o2];
            sum += std::abs(p1 - p2);
            ++n;
        }
    }
    return sum / static_cast<double>(n);
}

double loss_specificity_dist(const MicroTransformer& model, const Tokenizer& tok,
                             const BaseDistributionCache& cache, std::span<const BiasedPair> pairs,
                             std::span<const std::string> prefixes) {
    if (pairs.empty()) throw UsageError("loss_specificity_dist: empty pair set");
    const std::size_t max_len = model.config().max_seq_len;
    double sum = 0.0;
    std::size_t n = 0;
    for (const BiasedPair& pair : pairs) {
        for (const KnowledgeTriple* k : {&pair.k1, &pair.k2}) {
            for (const Prompt& p : apply_prefixes(tok, render_prompt(tok, *k, max_len), prefixes, max_len)) {
                Tape tape;
                NodeId q = tape.constant(model.forward_mlm(p.tokens));
                NodeId kl = tape.kl_divergence(tape.constant(cache.get(p)), q);
                sum += tape.value(kl).item();
                ++n;
            }
        }
    }
    return sum / static_cast<double>(n);
}

double loss_specificity_subject(const MicroTransformer& model, const Tokenizer& tok,
                                const BaseDistributionCache& cache,
                                std::span<const std::string> subjects,
                                std::span<const std::string> prefixes) {
    if (subjects.empty()) throw UsageError("loss_specificity_subject: empty subject list");
    const std::size_t max_len = model.config().max_seq_len;
    std::vector<std::string> dedup;
    std::set<std::string> seen;
    for (const std::string& s : subjects) {
        if (seen.insert(s).second) dedup.push_back(s);
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const std::string& s : dedup) {
        for (const Prompt& p : apply_prefixes(tok, render_simple_prompt(tok, s, max_len), prefixes, max_len)) {
            Tape tape;
            NodeId q = tape.constant(model.forward_mlm(p.tokens));
            NodeId kl = tape.kl_divergence(tape.constant(cache.get(p)), q);
            sum += tape.value(kl).item();
            ++n;
        }
    }
    return sum / static_cast<double>(n);
}

BaseDistributionCache build_base_cache(const MicroTransformer& model, const Tokenizer& tok,
                                       std::span<const BiasedPair> pairs,
                                       std::span<const std::string> prefixes) {
    const std::size_t max_len = model.config().max_seq_len;
    BaseDistributionCache cache;
    auto add = [&](const Prompt& p) {
        if (!cache.has(p)) cache.put(p, base_distribution(model, p));
    };
    for (const BiasedPair& pair : pairs) {
        for (const KnowledgeTriple* k : {&pair.k1, &pair.k2}) {
            for (const Prompt& p : apply_prefixes(tok, render_prompt(tok, *k, max_len), prefixes, max_len)) {
                add(p);
            }
        }
    }
    for (const std::string& s : distinct_subjects(pairs)) {
        for (const Prompt& p : apply_prefixes(tok, render_simple_prompt(tok, s, max_len), prefixes, max_len)) {
            add(p);
        }
    }
    return cache;
}

EditReport train_stamp(MicroTransformer& model, const Tokenizer& tok,
                       std::span<const BiasedPair> pairs, const EditConfig& config) {
    config.validate();
    if (pairs.empty()) throw UsageError("train_stamp: empty pair batch");
    if (!config.target_layer.has_value()) {
        throw UsageError("train_stamp: target layer unresolved; run localization or pass one explicitly");
    }
    const std::size_t layer = *config.target_layer;
    const ModelConfig& cfg = model.config();
    if (layer >= cfg.n_layers) {
        throw UsageError("train_stamp: layer " + std::to_string(layer) + " out of range " +
                         std::to_string(cfg.n_layers));
    }

    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> prefixes =
        select_prefixes(default_prefix_pool(), config.prefix_count, config.seed);

    // Base outputs must be captured before the edit exists.
    BaseDistributionCache cache = build_base_cache(model, tok, pairs, prefixes);

    model.attach_stamp(layer, FairnessStamp::init(config.d_c, cfg.d_model,
                                                  Rng::mix(config.seed, 0x7374616d70)));

    EditReport report;
    report.target_layer = layer;
    report.stamp_parameter_count = model.stamp(layer)->parameter_count();

    FairnessStamp& stamp = model.stamp_mut(layer);
    std::vector<const Tensor*> reg = {&stamp.keys, &stamp.values};
    AdamState adam(reg, {.lr = config.lr});
    std::vector<Tensor*> stamp_params = {&stamp.keys, &stamp.values};

    std::size_t iteration = 0;
    for (std::size_t start = 0; start < pairs.size(); start += config.batch_size) {
        const std::size_t count = std::min(config.batch_size, pairs.size() - start);
        const BatchPrompts batch =
            render_batch(tok, pairs.subspan(start, count), prefixes, cfg.max_seq_len);

        for (std::size_t it = 0; it < config.iters_per_batch; ++it, ++iteration) {
            Tape tape;
            auto params = model.insert_params(tape, /*base_trainable=*/false, /*stamp_trainable=*/true);
            LossNodes nodes = build_losses(tape, model, params, batch, cache, config.alpha,
                                           config.beta, config.prefix_on_fairness);
            LossBreakdown entry;
            entry.fairness = tape.value(nodes.fairness).item();
            entry.spec_dist = tape.value(nodes.spec_dist).item();
            entry.spec_subject = tape.value(nodes.spec_subject).item();
            entry.total = tape.value(nodes.total).item();
            if (!std::isfinite(entry.total)) {
                throw TrainingDivergenceError("train_stamp: non-finite loss at iteration " +
                                              std::to_string(iteration));
            }
            report.history.push_back(entry);

            GradMap grads = tape.backward(nodes.total);
            const auto& stamp_nodes = *params.layers[layer].stamp;
            if (iteration == 0) {
                // Frozen-base contract: no gradient may exist for any base leaf.
                if (grads.find(params.tok_emb) || grads.find(params.layers[layer].ffn_values)) {
                    throw UsageError("train_stamp: base parameters unexpectedly received gradients");
                }
            }
            const Tensor* gk = grads.find(stamp_nodes.first);
            const Tensor* gv = grads.find(stamp_nodes.second);
            if (!gk || !gv) {
                throw UsageError("train_stamp: stamp parameters received no gradient");
            }
            std::vector<const Tensor*> gs = {gk, gv};
            adam.step(stamp_params, gs);
        }
    }

    for (const BiasedPair& pair : pairs) {
        const double p1 = model.forward_mlm(render_prompt(tok, pair.k1, cfg.max_seq_len).tokens)[tok.id(pair.k1.object)];
        const double p2 = model.forward_mlm(render_prompt(tok, pair.k2, cfg.max_seq_len).tokens)[tok.id(pair.k2.object)];
        report.final_gaps.push_back(std::abs(p1 - p2));
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace fast
