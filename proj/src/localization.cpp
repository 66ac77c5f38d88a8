#include "fast/localization.hpp"

namespace fast {

TraceResult trace_pair(const MicroTransformer& model, const Tokenizer& tok, const BiasedPair& pair) {
    if (pair.flip != FlipKind::Subject) {
        throw UsageError("trace_pair: pair '" + pair.id() +
                         "' flips the object; tracing corrupts the subject, so only subject-flip "
                         "pairs are traceable");
    }
    const ModelConfig& cfg = model.config();
    const Prompt biased = render_prompt(tok, pair.k1, cfg.max_seq_len);
    const Prompt counter = render_prompt(tok, pair.k2, cfg.max_seq_len);
    if (biased.tokens.size() != counter.tokens.size()) {
        throw ValidationError("trace_pair: prompts differ in length for pair '" + pair.id() + "'");
    }
    const TokenId object_id = tok.id(pair.k1.object);

    const std::size_t subject_len = tok.encode(pair.k1.subject).size();
    TraceResult result;
    result.subject_positions.resize(subject_len);
    for (std::size_t i = 0; i < subject_len; ++i) result.subject_positions[i] = i;

    // Biased run: capture all residual states.
    auto [biased_dist, trace] = model.forward_with_capture(biased.tokens);
    result.p_biased = biased_dist[object_id];

    // Counterfactual input.
    Tensor counter_dist = model.forward_mlm(counter.tokens);
    result.p_counterfactual = counter_dist[object_id];

    // Restoration runs, one layer at a time.
    result.ie.resize(cfg.n_layers);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        PatchSpec spec;
        spec.layer = l;
        spec.positions = result.subject_positions;
        Tensor rows({subject_len, cfg.d_model});
        for (std::size_t i = 0; i < subject_len; ++i) {
            for (std::size_t j = 0; j < cfg.d_model; ++j) {
                rows.at(i, j) = trace.levels[l].at(result.subject_positions[i], j);
            }
        }
        spec.states = std::move(rows);
        Tensor restored = model.forward_with_patch(counter.tokens, {spec});
        result.ie[l] = restored[object_id] - result.p_counterfactual;
    }
    return result;
}

AieProfile average_indirect_effect(const MicroTransformer& model, const Tokenizer& tok,
                                   std::span<const BiasedPair> pairs) {
    if (pairs.empty()) throw UsageError("average_indirect_effect: empty pair set");
    AieProfile profile;
    profile.mean_ie.assign(model.config().n_layers, 0.0);
    for (const BiasedPair& pair : pairs) {
        TraceResult r = trace_pair(model, tok, pair);
        for (std::size_t l = 0; l < profile.mean_ie.size(); ++l) profile.mean_ie[l] += r.ie[l];
    }
    for (double& v : profile.mean_ie) v /= static_cast<double>(pairs.size());
    profile.pair_count = pairs.size();
    profile.argmax_layer = decisive_layer(profile);
    return profile;
}

std::size_t decisive_layer(const AieProfile& profile) {
    if (profile.mean_ie.empty()) throw UsageError("decisive_layer: empty profile");
    std::size_t best = 0;
    for (std::size_t l = 1; l < profile.mean_ie.size(); ++l) {
        if (profile.mean_ie[l] >= profile.mean_ie[best]) best = l;  // ties go deeper
    }
    return best;
}

} // namespace fast
