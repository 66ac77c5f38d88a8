#include "fast/trainer.hpp"

#include <cmath>
#include <iostream>

#include "fast/adam.hpp"
#include "fast/rng.hpp"

namespace fast {

namespace {

struct MaskedSentence {
    std::vector<TokenId> tokens;             // with [MASK] substituted
    std::vector<std::size_t> positions;      // masked positions
    std::vector<std::size_t> targets;        // original ids at those positions
};

MaskedSentence mask_sentence(const std::vector<TokenId>& ids, double mask_prob, Rng& rng) {
    MaskedSentence out;
    out.tokens = ids;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (rng.bernoulli(mask_prob)) {
            out.positions.push_back(i);
            out.targets.push_back(ids[i]);
            out.tokens[i] = Tokenizer::kMask;
        }
    }
    if (out.positions.empty()) {
        const std::size_t i = rng.uniform_index(ids.size());
        out.positions.push_back(i);
        out.targets.push_back(ids[i]);
        out.tokens[i] = Tokenizer::kMask;
    }
    return out;
}

} // namespace

TrainStats train_masked_lm(MicroTransformer& model, const Tokenizer& tok,
                           std::span<const std::string> sentences, const TrainConfig& config) {
    if (sentences.empty()) throw UsageError("train_masked_lm: empty corpus");
    const ModelConfig& cfg = model.config();

    std::vector<std::vector<TokenId>> encoded;
    encoded.reserve(sentences.size());
    for (const std::string& s : sentences) {
        std::vector<TokenId> ids = tok.encode(s);
        if (ids.empty()) continue;
        if (ids.size() > cfg.max_seq_len) {
            throw ValidationError("train_masked_lm: sentence of " + std::to_string(ids.size()) +
                                  " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
        }
        encoded.push_back(std::move(ids));
    }

    // Deterministic holdout: every k-th sentence.
    const std::size_t holdout_every =
        config.holdout_fraction > 0.0
            ? std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(1.0 / config.holdout_fraction)))
            : 0;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> hold_idx;
    for (std::size_t i = 0; i < encoded.size(); ++i) {
        if (holdout_every != 0 && i % holdout_every == holdout_every - 1) hold_idx.push_back(i);
        else train_idx.push_back(i);
    }
    if (train_idx.empty()) throw UsageError("train_masked_lm: no training sentences after holdout split");

    TrainStats stats;
    stats.train_sentences = train_idx.size();
    stats.holdout_sentences = hold_idx.size();

    std::vector<Tensor*> params = model.parameters();
    std::vector<const Tensor*> reg(params.begin(), params.end());
    AdamState adam(reg, {.lr = config.lr});

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(Rng::mix(config.seed, epoch));
        std::vector<std::size_t> order = train_idx;
        rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            Tape tape;
            auto graph = model.insert_params(tape, /*base_trainable=*/true, false);
            std::vector<NodeId> losses;
            losses.reserve(count);
            for (std::size_t b = 0; b < count; ++b) {
                MaskedSentence ms = mask_sentence(encoded[order[start + b]], config.mask_prob, rng);
                NodeId lp = model.masked_log_probs(tape, graph, ms.tokens, ms.positions);
                losses.push_back(tape.nll_rows(lp, ms.targets));
            }
            NodeId loss = losses[0];
            for (std::size_t i = 1; i < losses.size(); ++i) loss = tape.add(loss, losses[i]);
            loss = tape.scale(loss, 1.0 / static_cast<double>(count));

            const double loss_value = tape.value(loss).item();
            if (!std::isfinite(loss_value)) {
                throw TrainingDivergenceError("train_masked_lm: non-finite loss in epoch " +
                                              std::to_string(epoch));
            }
            epoch_loss += loss_value;
            ++batches;

            GradMap grads = tape.backward(loss);
            std::vector<const Tensor*> gs;
            gs.reserve(params.size());
            for (NodeId id : graph.base_nodes()) gs.push_back(&grads.at(id));
            adam.step(params, gs);

            if (config.verbose && batches % 100 == 0) {
                std::cerr << "epoch " << epoch << " batch " << batches << " loss " << loss_value << "\n";
            }
        }
        stats.epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
        if (config.verbose) {
            std::cerr << "epoch " << epoch << " mean loss " << stats.epoch_loss.back() << "\n";
        }
    }

    // Holdout mask-prediction accuracy with a fixed evaluation stream.
    if (!hold_idx.empty()) {
        Rng rng(Rng::mix(config.seed, 0xe7a1));
        std::size_t correct = 0;
        std::size_t total = 0;
        for (std::size_t i : hold_idx) {
            MaskedSentence ms = mask_sentence(encoded[i], config.mask_prob, rng);
            Tape tape;
            auto graph = model.insert_params(tape, false, false);
            NodeId lp = model.masked_log_probs(tape, graph, ms.tokens, ms.positions);
            const Tensor& rows = tape.value(lp);
            for (std::size_t r = 0; r < ms.positions.size(); ++r) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < rows.cols(); ++j) {
                    if (rows.at(r, j) > rows.at(r, best)) best = j;
                }
                if (best == ms.targets[r]) ++correct;
                ++total;
            }
        }
        stats.holdout_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    }
    return stats;
}

} // namespace fast
