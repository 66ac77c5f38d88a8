#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fast/model.hpp"
#include "fast/tokenizer.hpp"

namespace fast {

struct TrainConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 32;
    double lr = 2e-3;
    double mask_prob = 0.15;
    double holdout_fraction = 0.05;
    std::uint64_t seed = 7;
    bool verbose = false;
};

struct TrainStats {
    std::vector<double> epoch_loss;      // mean masked-token NLL per epoch
    double holdout_accuracy = 0.0;       // mask-prediction accuracy on the held-out split
    std::size_t train_sentences = 0;
    std::size_t holdout_sentences = 0;
};

// Masked-LM pre-training: random masking at mask_prob per token (at least one
// per sentence), Adam over all base parameters, deterministic given the seed.
// Epochs may be zero, leaving the initialized model untouched.
TrainStats train_masked_lm(MicroTransformer& model, const Tokenizer& tok,
                           std::span<const std::string> sentences, const TrainConfig& config);

} // namespace fast
