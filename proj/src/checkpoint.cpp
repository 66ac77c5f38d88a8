#include "fast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace fast {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'T', 'M'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t i = 0; i < t.rank(); ++i) u64(t.dim(i));
        for (std::size_t i = 0; i < t.numel(); ++i) f64(t[i]);
    }
    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(std::vector<std::uint8_t> data, const std::string& path)
        : buf_(std::move(data)), path_(path) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32() {
        const std::uint8_t* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const std::uint8_t* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        const std::uint8_t* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank > 2) throw IoError("checkpoint " + path_ + ": tensor rank " + std::to_string(rank));
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<std::size_t>(u64());
            numel *= shape[i];
        }
        std::vector<double> data(numel);
        for (std::size_t i = 0; i < numel; ++i) data[i] = f64();
        return Tensor(std::move(shape), std::move(data));
    }
    std::size_t offset() const { return off_; }
    std::size_t size() const { return buf_.size(); }
    const std::uint8_t* raw() const { return buf_.data(); }

private:
    const std::uint8_t* take(std::size_t n) {
        if (off_ + n > buf_.size()) {
            throw IoError("checkpoint " + path_ + ": truncated (needed " + std::to_string(n) +
                          " bytes at offset " + std::to_string(off_) + ")");
        }
        const std::uint8_t* p = buf_.data() + off_;
        off_ += n;
        return p;
    }

    std::vector<std::uint8_t> buf_;
    std::size_t off_ = 0;
    std::string path_;
};

} // namespace

void save_checkpoint(const MicroTransformer& model, const Tokenizer& tokenizer,
                     const std::filesystem::path& path) {
    const ModelConfig& cfg = model.config();
    if (cfg.vocab_size != tokenizer.vocab_size()) {
        throw ValidationError("save_checkpoint: model vocab " + std::to_string(cfg.vocab_size) +
                              " differs from tokenizer vocab " + std::to_string(tokenizer.vocab_size()));
    }
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(cfg.n_layers));
    w.u32(static_cast<std::uint32_t>(cfg.d_model));
    w.u32(static_cast<std::uint32_t>(cfg.n_heads));
    w.u32(static_cast<std::uint32_t>(cfg.d_ffn));
    w.u32(static_cast<std::uint32_t>(cfg.vocab_size));
    w.u32(static_cast<std::uint32_t>(cfg.max_seq_len));
    w.u32(cfg.activation == Activation::Relu ? 0u : 1u);

    w.u32(static_cast<std::uint32_t>(tokenizer.vocab_size()));
    for (const std::string& word : tokenizer.words()) w.str(word);

    const auto params = model.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const Tensor* t : params) w.tensor(*t);

    const auto stamped = model.stamped_layer();
    w.u8(stamped.has_value() ? 1 : 0);
    if (stamped.has_value()) {
        const FairnessStamp& s = *model.stamp(*stamped);
        w.u32(static_cast<std::uint32_t>(*stamped));
        w.u32(static_cast<std::uint32_t>(s.d_c()));
        w.u32(s.activation == Activation::Relu ? 0u : 1u);
        w.tensor(s.keys);
        w.tensor(s.values);
    }

    Writer full = w;
    full.u64(fnv1a(w.data().data(), w.data().size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(full.data().data()),
              static_cast<std::streamsize>(full.data().size()));
    if (!out) throw IoError("write failed for checkpoint: " + path.string());
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

} // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Reader r(read_file(path), path.string());

    if (r.size() < 4 + 8 || std::memcmp(r.raw(), kMagic, 4) != 0) {
        throw IoError("checkpoint " + path.string() + ": bad magic, not an FSTM file");
    }
    const std::uint64_t stored = [&] {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(r.raw()[r.size() - 8 + i]) << (8 * i);
        }
        return v;
    }();
    const std::uint64_t computed = fnv1a(r.raw(), r.size() - 8);
    if (stored != computed) {
        throw IoError("checkpoint " + path.string() + ": checksum mismatch (file corrupt or truncated)");
    }

    char magic[4];
    std::memcpy(magic, r.raw(), 4);
    r.u32();  // consume magic
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw IoError("checkpoint " + path.string() + ": format version " + std::to_string(version) +
                      " needs migration; this build reads version " + std::to_string(kCheckpointVersion));
    }

    ModelConfig cfg;
    cfg.n_layers = r.u32();
    cfg.d_model = r.u32();
    cfg.n_heads = r.u32();
    cfg.d_ffn = r.u32();
    cfg.vocab_size = r.u32();
    cfg.max_seq_len = r.u32();
    cfg.activation = r.u32() == 0 ? Activation::Relu : Activation::Gelu;
    cfg.validate();

    const std::uint32_t n_words = r.u32();
    std::vector<std::string> words;
    words.reserve(n_words);
    for (std::uint32_t i = 0; i < n_words; ++i) words.push_back(r.str());
    Tokenizer tokenizer = Tokenizer::from_table(std::move(words));

    Checkpoint ck{MicroTransformer::init(cfg, 0, 0.0), std::move(tokenizer)};
    const std::uint32_t n_params = r.u32();
    std::vector<Tensor*> params = ck.model.parameters();
    if (n_params != params.size()) {
        throw IoError("checkpoint " + path.string() + ": expected " + std::to_string(params.size()) +
                      " parameter tensors, found " + std::to_string(n_params));
    }
    for (Tensor* slot : params) {
        Tensor t = r.tensor();
        if (!t.same_shape(*slot)) {
            throw IoError("checkpoint " + path.string() + ": parameter shape " + t.shape_string() +
                          " does not match config-derived " + slot->shape_string());
        }
        *slot = std::move(t);
    }

    if (r.u8() == 1) {
        const std::uint32_t layer = r.u32();
        const std::uint32_t d_c = r.u32();
        FairnessStamp s;
        s.activation = r.u32() == 0 ? Activation::Relu : Activation::Gelu;
        s.keys = r.tensor();
        s.values = r.tensor();
        if (s.d_c() != d_c) {
            throw IoError("checkpoint " + path.string() + ": stamp d_c disagrees with its matrices");
        }
        ck.model.attach_stamp(layer, std::move(s));
    }
    return ck;
}

std::uint64_t checkpoint_checksum(const std::filesystem::path& path) {
    const auto data = read_file(path);
    if (data.size() < 12) throw IoError("checkpoint " + path.string() + ": too short");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(data[data.size() - 8 + i]) << (8 * i);
    }
    return v;
}

} // namespace fast
