#include "fast/model.hpp"

#include <cmath>

#include "fast/rng.hpp"

namespace fast {

void ModelConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ffn < 1 || max_seq_len < 1) {
        throw ValidationError("model config: all dimensions must be >= 1");
    }
    if (d_model % n_heads != 0) {
        throw ValidationError("model config: d_model " + std::to_string(d_model) +
                              " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (vocab_size < 4) {
        throw ValidationError("model config: vocab_size must cover the reserved tokens plus one word");
    }
}

FairnessStamp FairnessStamp::init(std::size_t d_c, std::size_t d_model, std::uint64_t seed,
                                  Activation act, double key_sigma) {
    if (d_c < 1) throw ValidationError("stamp: d_c must be >= 1");
    Rng rng(seed);
    FairnessStamp s;
    s.keys = Tensor::randn({d_c, d_model}, rng, key_sigma);
    s.values = Tensor({d_c, d_model});  // zero: stamp starts as an exact no-op
    s.activation = act;
    return s;
}

MicroTransformer MicroTransformer::init(const ModelConfig& cfg, std::uint64_t seed, double sigma) {
    cfg.validate();
    Rng rng(seed);
    MicroTransformer m;
    m.cfg_ = cfg;
    m.tok_emb_ = Tensor::randn({cfg.vocab_size, cfg.d_model}, rng, sigma);
    m.pos_emb_ = Tensor::randn({cfg.max_seq_len, cfg.d_model}, rng, sigma);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        LayerWeights w;
        w.ln1_gamma = Tensor::full({cfg.d_model}, 1.0);
        w.ln1_beta = Tensor({cfg.d_model});
        w.wq = Tensor::randn({cfg.d_model, cfg.d_model}, rng, sigma);
        w.wk = Tensor::randn({cfg.d_model, cfg.d_model}, rng, sigma);
        w.wv = Tensor::randn({cfg.d_model, cfg.d_model}, rng, sigma);
        w.wo = Tensor::randn({cfg.d_model, cfg.d_model}, rng, sigma);
        w.ln2_gamma = Tensor::full({cfg.d_model}, 1.0);
        w.ln2_beta = Tensor({cfg.d_model});
        w.ffn_keys = Tensor::randn({cfg.d_ffn, cfg.d_model}, rng, sigma);
        w.ffn_values = Tensor::randn({cfg.d_ffn, cfg.d_model}, rng, sigma);
        m.layers_.push_back(std::move(w));
    }
    m.lnf_gamma_ = Tensor::full({cfg.d_model}, 1.0);
    m.lnf_beta_ = Tensor({cfg.d_model});
    m.stamps_.resize(cfg.n_layers);
    return m;
}

std::size_t MicroTransformer::parameter_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d_model;
    const std::size_t per_layer = 2 * d + 4 * d * d + 2 * d + 2 * cfg.d_ffn * d;
    return cfg.vocab_size * d + cfg.max_seq_len * d + cfg.n_layers * per_layer + 2 * d;
}

std::vector<Tensor*> MicroTransformer::parameters() {
    std::vector<Tensor*> out = {&tok_emb_, &pos_emb_};
    for (LayerWeights& w : layers_) {
        for (Tensor* t : {&w.ln1_gamma, &w.ln1_beta, &w.wq, &w.wk, &w.wv, &w.wo, &w.ln2_gamma,
                          &w.ln2_beta, &w.ffn_keys, &w.ffn_values}) {
            out.push_back(t);
        }
    }
    out.push_back(&lnf_gamma_);
    out.push_back(&lnf_beta_);
    return out;
}

std::vector<const Tensor*> MicroTransformer::parameters() const {
    auto mutable_list = const_cast<MicroTransformer*>(this)->parameters();
    return {mutable_list.begin(), mutable_list.end()};
}

void MicroTransformer::attach_stamp(std::size_t layer, FairnessStamp stamp) {
    if (layer >= cfg_.n_layers) {
        throw ValidationError("attach_stamp: layer " + std::to_string(layer) + " out of range " +
                              std::to_string(cfg_.n_layers));
    }
    if (stamps_[layer].has_value()) {
        throw UsageError("attach_stamp: layer " + std::to_string(layer) +
                         " already has a stamp; detach it first");
    }
    if (stamp.keys.rank() != 2 || stamp.keys.dim(1) != cfg_.d_model || !stamp.keys.same_shape(stamp.values)) {
        throw ShapeError("attach_stamp: stamp matrices must both be d_c x " + std::to_string(cfg_.d_model));
    }
    stamps_[layer] = std::move(stamp);
}

FairnessStamp MicroTransformer::detach_stamp(std::size_t layer) {
    if (layer >= cfg_.n_layers || !stamps_[layer].has_value()) {
        throw UsageError("detach_stamp: no stamp attached at layer " + std::to_string(layer));
    }
    FairnessStamp s = std::move(*stamps_[layer]);
    stamps_[layer].reset();
    return s;
}

const std::optional<FairnessStamp>& MicroTransformer::stamp(std::size_t layer) const {
    if (layer >= cfg_.n_layers) throw UsageError("stamp: layer out of range");
    return stamps_[layer];
}

FairnessStamp& MicroTransformer::stamp_mut(std::size_t layer) {
    if (layer >= cfg_.n_layers || !stamps_[layer].has_value()) {
        throw UsageError("stamp_mut: no stamp attached at layer " + std::to_string(layer));
    }
    return *stamps_[layer];
}

std::optional<std::size_t> MicroTransformer::stamped_layer() const {
    for (std::size_t l = 0; l < stamps_.size(); ++l) {
        if (stamps_[l].has_value()) return l;
    }
    return std::nullopt;
}

std::vector<NodeId> MicroTransformer::GraphParams::base_nodes() const {
    std::vector<NodeId> out = {tok_emb, pos_emb};
    for (const LayerNodes& n : layers) {
        for (NodeId id : {n.ln1_gamma, n.ln1_beta, n.wq, n.wk, n.wv, n.wo, n.ln2_gamma, n.ln2_beta,
                          n.ffn_keys, n.ffn_values}) {
            out.push_back(id);
        }
    }
    out.push_back(lnf_gamma);
    out.push_back(lnf_beta);
    return out;
}

MicroTransformer::GraphParams MicroTransformer::insert_params(Tape& tape, bool base_trainable,
                                                              bool stamp_trainable,
                                                              bool bypass_stamps) const {
    GraphParams p;
    p.tok_emb = tape.leaf(tok_emb_, base_trainable);
    p.pos_emb = tape.leaf(pos_emb_, base_trainable);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const LayerWeights& w = layers_[l];
        GraphParams::LayerNodes n;
        n.ln1_gamma = tape.leaf(w.ln1_gamma, base_trainable);
        n.ln1_beta = tape.leaf(w.ln1_beta, base_trainable);
        n.wq = tape.leaf(w.wq, base_trainable);
        n.wk = tape.leaf(w.wk, base_trainable);
        n.wv = tape.leaf(w.wv, base_trainable);
        n.wo = tape.leaf(w.wo, base_trainable);
        n.ln2_gamma = tape.leaf(w.ln2_gamma, base_trainable);
        n.ln2_beta = tape.leaf(w.ln2_beta, base_trainable);
        n.ffn_keys = tape.leaf(w.ffn_keys, base_trainable);
        n.ffn_values = tape.leaf(w.ffn_values, base_trainable);
        if (!bypass_stamps && stamps_[l].has_value()) {
            n.stamp = {tape.leaf(stamps_[l]->keys, stamp_trainable),
                       tape.leaf(stamps_[l]->values, stamp_trainable)};
        }
        p.layers.push_back(n);
    }
    p.lnf_gamma = tape.leaf(lnf_gamma_, base_trainable);
    p.lnf_beta = tape.leaf(lnf_beta_, base_trainable);
    return p;
}

void MicroTransformer::check_tokens(std::span<const TokenId> tokens) const {
    if (tokens.empty()) throw ValidationError("forward: empty token sequence");
    if (tokens.size() > cfg_.max_seq_len) {
        throw ValidationError("forward: sequence length " + std::to_string(tokens.size()) +
                              " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    }
    for (TokenId t : tokens) {
        if (t >= cfg_.vocab_size) {
            throw VocabError("forward: token id " + std::to_string(t) + " outside vocabulary of size " +
                             std::to_string(cfg_.vocab_size));
        }
    }
}

std::size_t MicroTransformer::find_single_mask(std::span<const TokenId> tokens) const {
    std::size_t count = 0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == Tokenizer::kMask) {
            ++count;
            pos = i;
        }
    }
    if (count != 1) {
        throw ValidationError("forward_mlm: expected exactly one [MASK], found " + std::to_string(count));
    }
    return pos;
}

NodeId MicroTransformer::hidden_states(Tape& tape, const GraphParams& p,
                                       std::span<const TokenId> tokens,
                                       const ForwardHooks* hooks) const {
    check_tokens(tokens);
    const std::size_t T = tokens.size();
    const std::size_t dh = cfg_.head_dim();

    std::vector<std::size_t> ids(tokens.size());
    for (std::size_t i = 0; i < T; ++i) ids[i] = tokens[i];
    std::vector<std::size_t> positions(T);
    for (std::size_t i = 0; i < T; ++i) positions[i] = i;

    NodeId x = tape.add(tape.gather_rows(p.tok_emb, ids), tape.gather_rows(p.pos_emb, positions));

    auto apply_hooks = [&](std::size_t level, NodeId state) {
        if (!hooks) return state;
        if (hooks->patches) {
            const Tensor* cur = &tape.value(state);
            std::optional<Tensor> patched;
            for (const PatchSpec& spec : *hooks->patches) {
                if (spec.layer != level) continue;
                if (!patched) patched = *cur;
                for (std::size_t i = 0; i < spec.positions.size(); ++i) {
                    const std::size_t pos = spec.positions[i];
                    for (std::size_t j = 0; j < cfg_.d_model; ++j) {
                        patched->at(pos, j) = spec.states.at(i, j);
                    }
                }
            }
            if (patched) state = tape.constant(std::move(*patched));
        }
        if (hooks->capture) hooks->capture(level, tape.value(state));
        return state;
    };

    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        x = apply_hooks(l, x);
        const GraphParams::LayerNodes& w = p.layers[l];

        // Attention sublayer (pre-norm).
        NodeId a = tape.layer_norm(x, w.ln1_gamma, w.ln1_beta);
        NodeId q = tape.matmul(a, w.wq);
        NodeId k = tape.matmul(a, w.wk);
        NodeId v = tape.matmul(a, w.wv);
        std::vector<NodeId> heads;
        heads.reserve(cfg_.n_heads);
        for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
            NodeId qh = tape.slice_cols(q, h * dh, dh);
            NodeId kh = tape.slice_cols(k, h * dh, dh);
            NodeId vh = tape.slice_cols(v, h * dh, dh);
            NodeId scores = tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
            NodeId att = tape.softmax_rows(scores);
            heads.push_back(tape.matmul(att, vh));
        }
        NodeId ctx = cfg_.n_heads == 1 ? heads[0] : tape.concat_cols(heads);
        x = tape.add(x, tape.matmul(ctx, w.wo));

        // FFN sublayer, with the stamp added in parallel when present.
        NodeId h = tape.layer_norm(x, w.ln2_gamma, w.ln2_beta);
        NodeId pre = tape.matmul_nt(h, w.ffn_keys);
        NodeId hidden = cfg_.activation == Activation::Relu ? tape.relu(pre) : tape.gelu(pre);
        NodeId ffn_out = tape.matmul(hidden, w.ffn_values);
        if (w.stamp.has_value()) {
            const FairnessStamp& s = *stamps_[l];
            NodeId spre = tape.matmul_nt(h, w.stamp->first);
            NodeId shidden = s.activation == Activation::Relu ? tape.relu(spre) : tape.gelu(spre);
            ffn_out = tape.add(ffn_out, tape.matmul(shidden, w.stamp->second));
        }
        x = tape.add(x, ffn_out);
    }
    return x;
}

NodeId MicroTransformer::mask_distribution(Tape& tape, const GraphParams& p,
                                           std::span<const TokenId> tokens, std::size_t mask_pos,
                                           const ForwardHooks* hooks) const {
    if (mask_pos >= tokens.size() || tokens[mask_pos] != Tokenizer::kMask) {
        throw ValidationError("mask_distribution: position " + std::to_string(mask_pos) +
                              " does not hold the [MASK] token");
    }
    NodeId x = hidden_states(tape, p, tokens, hooks);
    NodeId row = tape.gather_rows(x, {mask_pos});
    NodeId y = tape.layer_norm(row, p.lnf_gamma, p.lnf_beta);
    NodeId logits = tape.matmul_nt(y, p.tok_emb);
    return tape.softmax_rows(logits);
}

NodeId MicroTransformer::masked_log_probs(Tape& tape, const GraphParams& p,
                                          std::span<const TokenId> tokens,
                                          const std::vector<std::size_t>& positions) const {
    if (positions.empty()) throw UsageError("masked_log_probs: no positions");
    NodeId x = hidden_states(tape, p, tokens);
    NodeId rows = tape.gather_rows(x, positions);
    NodeId y = tape.layer_norm(rows, p.lnf_gamma, p.lnf_beta);
    NodeId logits = tape.matmul_nt(y, p.tok_emb);
    return tape.log_softmax_rows(logits);
}

Tensor MicroTransformer::forward_mlm(std::span<const TokenId> tokens) const {
    check_tokens(tokens);
    const std::size_t mask_pos = find_single_mask(tokens);
    Tape tape;
    GraphParams p = insert_params(tape, false, false);
    NodeId dist = mask_distribution(tape, p, tokens, mask_pos);
    Tensor out = tape.value(dist);
    if (!out.all_finite()) throw ValidationError("forward_mlm: non-finite output distribution");
    return out;
}

std::pair<Tensor, ForwardTrace> MicroTransformer::forward_with_capture(
    std::span<const TokenId> tokens) const {
    check_tokens(tokens);
    const std::size_t mask_pos = find_single_mask(tokens);
    ForwardTrace trace;
    trace.seq_len = tokens.size();
    trace.levels.resize(cfg_.n_layers);
    ForwardHooks hooks;
    hooks.capture = [&trace](std::size_t level, const Tensor& state) { trace.levels[level] = state; };
    Tape tape;
    GraphParams p = insert_params(tape, false, false);
    NodeId dist = mask_distribution(tape, p, tokens, mask_pos, &hooks);
    Tensor out = tape.value(dist);
    if (!out.all_finite()) throw ValidationError("forward_with_capture: non-finite output distribution");
    trace.distribution = out;
    return {out, std::move(trace)};
}

Tensor MicroTransformer::forward_with_patch(std::span<const TokenId> tokens,
                                            const std::vector<PatchSpec>& patches) const {
    check_tokens(tokens);
    const std::size_t mask_pos = find_single_mask(tokens);
    for (const PatchSpec& spec : patches) {
        if (spec.layer >= cfg_.n_layers) {
            throw ValidationError("patch: layer " + std::to_string(spec.layer) + " out of range " +
                                  std::to_string(cfg_.n_layers));
        }
        if (spec.states.rank() != 2 || spec.states.dim(0) != spec.positions.size() ||
            spec.states.dim(1) != cfg_.d_model) {
            throw ShapeError("patch: states must be positions x d_model, got " +
                             spec.states.shape_string());
        }
        for (std::size_t pos : spec.positions) {
            if (pos >= tokens.size()) {
                throw ValidationError("patch: position " + std::to_string(pos) +
                                      " outside sequence of length " + std::to_string(tokens.size()));
            }
        }
    }
    ForwardHooks hooks;
    hooks.patches = &patches;
    Tape tape;
    GraphParams p = insert_params(tape, false, false);
    NodeId dist = mask_distribution(tape, p, tokens, mask_pos, &hooks);
    Tensor out = tape.value(dist);
    if (!out.all_finite()) throw ValidationError("forward_with_patch: non-finite output distribution");
    return out;
}

} // namespace fast
