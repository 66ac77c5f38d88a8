#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fast/autodiff.hpp"
#include "fast/tokenizer.hpp"

namespace fast {

enum class Activation { Relu, Gelu };

struct ModelConfig {
    std::size_t n_layers = 4;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ffn = 256;
    std::size_t vocab_size = 256;
    std::size_t max_seq_len = 32;
    Activation activation = Activation::Gelu;

    void validate() const;
    std::size_t head_dim() const { return d_model / n_heads; }
};

// Parallel FFN adapter: output(h) = Act(h K'^T) V' added to the wrapped FFN
// output. V' starts at zero so an untrained stamp is an exact no-op.
struct FairnessStamp {
    Tensor keys;    // d_c x d_model
    Tensor values;  // d_c x d_model
    Activation activation = Activation::Relu;

    std::size_t d_c() const { return keys.rank() == 2 ? keys.dim(0) : 0; }
    std::size_t parameter_count() const { return keys.numel() + values.numel(); }

    static FairnessStamp init(std::size_t d_c, std::size_t d_model, std::uint64_t seed,
                              Activation act = Activation::Relu, double key_sigma = 0.02);
};

// Residual-stream snapshot of one forward pass. levels[l] is the hidden state
// entering block l (level 0 = token+position embeddings), one row per token,
// so the trace holds n_layers x seq_len states. distribution is the softmax
// over the vocabulary at the mask position.
struct ForwardTrace {
    std::vector<Tensor> levels;
    Tensor distribution;
    std::size_t seq_len = 0;
};

// Overwrite the residual stream entering block `layer` at the given token
// positions before that block runs.
struct PatchSpec {
    std::size_t layer = 0;
    std::vector<std::size_t> positions;
    Tensor states;  // positions.size() x d_model, row i replaces positions[i]
};

class MicroTransformer {
public:
    struct LayerWeights {
        Tensor ln1_gamma, ln1_beta;
        Tensor wq, wk, wv, wo;
        Tensor ln2_gamma, ln2_beta;
        Tensor ffn_keys;    // d_ffn x d_model
        Tensor ffn_values;  // d_ffn x d_model
    };

    // Node ids of all parameters inserted into one tape.
    struct GraphParams {
        NodeId tok_emb = 0, pos_emb = 0;
        struct LayerNodes {
            NodeId ln1_gamma, ln1_beta, wq, wk, wv, wo, ln2_gamma, ln2_beta, ffn_keys, ffn_values;
            std::optional<std::pair<NodeId, NodeId>> stamp;  // keys, values
        };
        std::vector<LayerNodes> layers;
        NodeId lnf_gamma = 0, lnf_beta = 0;

        // Base-parameter node ids in the same order as parameters().
        std::vector<NodeId> base_nodes() const;
    };

    struct ForwardHooks {
        std::function<void(std::size_t level, const Tensor& state)> capture;
        const std::vector<PatchSpec>* patches = nullptr;
    };

    static MicroTransformer init(const ModelConfig& cfg, std::uint64_t seed, double sigma = 0.02);
    static std::size_t parameter_count(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    const LayerWeights& layer(std::size_t l) const { return layers_[l]; }
    const Tensor& token_embedding() const { return tok_emb_; }

    // Stamp slots, one per layer.
    void attach_stamp(std::size_t layer, FairnessStamp stamp);
    FairnessStamp detach_stamp(std::size_t layer);
    const std::optional<FairnessStamp>& stamp(std::size_t layer) const;
    FairnessStamp& stamp_mut(std::size_t layer);
    std::optional<std::size_t> stamped_layer() const;

    // Tape-level building blocks (used by trainers; parameters are re-inserted
    // per tape so a whole batch can share one graph).
    GraphParams insert_params(Tape& tape, bool base_trainable, bool stamp_trainable,
                              bool bypass_stamps = false) const;
    NodeId hidden_states(Tape& tape, const GraphParams& p, std::span<const TokenId> tokens,
                         const ForwardHooks* hooks = nullptr) const;
    NodeId mask_distribution(Tape& tape, const GraphParams& p, std::span<const TokenId> tokens,
                             std::size_t mask_pos, const ForwardHooks* hooks = nullptr) const;
    // Log-softmax rows at the given positions, for masked-LM training.
    NodeId masked_log_probs(Tape& tape, const GraphParams& p, std::span<const TokenId> tokens,
                            const std::vector<std::size_t>& positions) const;

    // Value-level evaluation (each call runs on a private tape).
    Tensor forward_mlm(std::span<const TokenId> tokens) const;
    std::pair<Tensor, ForwardTrace> forward_with_capture(std::span<const TokenId> tokens) const;
    Tensor forward_with_patch(std::span<const TokenId> tokens, const std::vector<PatchSpec>& patches) const;

private:
    std::size_t find_single_mask(std::span<const TokenId> tokens) const;
    void check_tokens(std::span<const TokenId> tokens) const;

    ModelConfig cfg_;
    Tensor tok_emb_, pos_emb_;
    std::vector<LayerWeights> layers_;
    Tensor lnf_gamma_, lnf_beta_;
    std::vector<std::optional<FairnessStamp>> stamps_;
};

} // namespace fast
