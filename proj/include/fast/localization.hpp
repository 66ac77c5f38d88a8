#pragma once

#include <span>
#include <vector>

#include "fast/knowledge.hpp"
#include "fast/model.hpp"

namespace fast {

// Per-layer indirect effects for one biased pair. ie[l] is the change in the
// counterfactual run's probability of the biased object when the biased run's
// residual state entering block l is restored at the subject positions.
struct TraceResult {
    std::vector<double> ie;
    double p_biased = 0.0;          // P[o1] on the biased prompt
    double p_counterfactual = 0.0;  // P*[o1] on the counterfactual prompt
    std::vector<std::size_t> subject_positions;
};

struct AieProfile {
    std::vector<double> mean_ie;
    std::size_t pair_count = 0;
    std::size_t argmax_layer = 0;
};

// Three-run causal tracing (biased run, counterfactual input, restoration
// runs, one per layer). Only subject-flip pairs are traceable.
TraceResult trace_pair(const MicroTransformer& model, const Tokenizer& tok, const BiasedPair& pair);

AieProfile average_indirect_effect(const MicroTransformer& model, const Tokenizer& tok,
                                   std::span<const BiasedPair> pairs);

// Argmax of the mean IE; ties break toward the deeper layer.
std::size_t decisive_layer(const AieProfile& profile);

} // namespace fast
