#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fast/knowledge.hpp"
#include "fast/model.hpp"

namespace fast {

struct EditConfig {
    std::optional<std::size_t> target_layer;  // resolved to the decisive layer by the pipeline
    std::size_t d_c = 256;
    double alpha = 40.0;
    double beta = 0.1;
    double lr = 0.1;
    std::size_t iters_per_batch = 20;
    std::size_t batch_size = 4;
    std::size_t prefix_count = 2;
    std::uint64_t seed = 7;
    bool prefix_on_fairness = true;  // apply prefix variants to L_e too, not just L_s1/L_s2

    void validate() const;
};

struct LossBreakdown {
    double fairness = 0.0;      // L_e
    double spec_dist = 0.0;     // L_s1
    double spec_subject = 0.0;  // L_s2
    double total = 0.0;         // L_e + alpha L_s1 + beta L_s2
};

struct EditReport {
    std::size_t target_layer = 0;
    std::size_t stamp_parameter_count = 0;  // 2 * d_c * d_model
    std::vector<LossBreakdown> history;     // one entry per optimizer iteration
    std::vector<double> final_gaps;         // bare-prompt |P[k1] - P[k2]| per pair, post-edit
    double wall_seconds = 0.0;
};

// Full distributions of the unedited model at each prompt's mask position,
// captured before editing. The specificity losses refuse to run without it.
class BaseDistributionCache {
public:
    void put(const Prompt& prompt, Tensor dist);
    const Tensor& get(const Prompt& prompt) const;
    bool has(const Prompt& prompt) const;
    std::size_t size() const { return cache_.size(); }

private:
    std::map<std::vector<TokenId>, Tensor> cache_;
};

// Deterministic choice of `count` prefixes from the pool. The bare prompt is
// always the first variant.
std::vector<std::string> select_prefixes(std::span<const std::string> pool, std::size_t count,
                                         std::uint64_t seed);
std::vector<Prompt> prefix_augment(const Tokenizer& tok, const Prompt& prompt,
                                   std::span<const std::string> pool, std::size_t count,
                                   std::uint64_t seed, std::size_t max_seq_len);

// L_e: mean over pairs (and prefix variants) of |P[k1] - P[k2]| at the mask.
double loss_fairness(const MicroTransformer& model, const Tokenizer& tok,
                     std::span<const BiasedPair> pairs, std::span<const std::string> prefixes);

// L_s1: mean KL(base || edited) over the pair prompts (and prefix variants).
double loss_specificity_dist(const MicroTransformer& model, const Tokenizer& tok,
                             const BaseDistributionCache& cache, std::span<const BiasedPair> pairs,
                             std::span<const std::string> prefixes);

// L_s2: mean KL(base || edited) on "<subject> is a [MASK]" for every distinct
// subject (and prefix variants).
double loss_specificity_subject(const MicroTransformer& model, const Tokenizer& tok,
                                const BaseDistributionCache& cache,
                                std::span<const std::string> subjects,
                                std::span<const std::string> prefixes);

// Captures base distributions for every prompt the three losses will visit.
BaseDistributionCache build_base_cache(const MicroTransformer& model, const Tokenizer& tok,
                                       std::span<const BiasedPair> pairs,
                                       std::span<const std::string> prefixes);

// FAST step 2: attaches a freshly initialized stamp at the target layer and
// optimizes only its K'/V' with Adam, batch by batch. The base model stays
// frozen (asserted). Throws TrainingDivergenceError when the loss goes
// non-finite, naming the iteration.
EditReport train_stamp(MicroTransformer& model, const Tokenizer& tok,
                       std::span<const BiasedPair> pairs, const EditConfig& config);

} // namespace fast
