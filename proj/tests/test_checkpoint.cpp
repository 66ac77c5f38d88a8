#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fast/checkpoint.hpp"
#include "fast/corpus.hpp"
#include "fast/rng.hpp"

using namespace fast;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

std::pair<MicroTransformer, Tokenizer> small_model(std::uint64_t seed = 3) {
    CorpusSpec spec = demo_corpus_spec();
    spec.n_sentences = 200;
    GeneratedCorpus gen = generate_corpus(spec, 2);
    std::vector<std::string> extra = simple_prompt_words();
    Tokenizer tok = Tokenizer::build(gen.sentences, extra);
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ffn = 24;
    cfg.vocab_size = tok.vocab_size();
    cfg.max_seq_len = 20;
    return {MicroTransformer::init(cfg, seed), tok};
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("save then load restores parameters bitwise") {
    auto [model, tok] = small_model();
    auto path = temp_path("fast_ck_roundtrip.fstm");
    save_checkpoint(model, tok, path);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.tokenizer == tok);
    auto a = std::as_const(model).parameters();
    auto b = std::as_const(back.model).parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

    // Round-trip save is byte identical.
    auto path2 = temp_path("fast_ck_roundtrip2.fstm");
    save_checkpoint(back.model, back.tokenizer, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("truncated file is a checksum error, not a crash") {
    auto [model, tok] = small_model();
    auto path = temp_path("fast_ck_trunc.fstm");
    save_checkpoint(model, tok, path);
    auto bytes = read_bytes(path);
    auto cut = temp_path("fast_ck_cut.fstm");
    {
        std::ofstream out(cut, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 200));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(cut), doctest::Contains("checksum"), IoError);
}

TEST_CASE("corrupted payload is a checksum error") {
    auto [model, tok] = small_model();
    auto path = temp_path("fast_ck_corrupt.fstm");
    save_checkpoint(model, tok, path);
    auto bytes = read_bytes(path);
    bytes[bytes.size() / 2] ^= 0x5a;
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), IoError);
}

TEST_CASE("format version mismatch is an explicit migration error") {
    auto [model, tok] = small_model();
    auto path = temp_path("fast_ck_version.fstm");
    save_checkpoint(model, tok, path);
    auto bytes = read_bytes(path);
    bytes[4] = 0x63;  // bump the version field (little-endian u32 at offset 4)
    // Recompute the trailing FNV-1a so only the version claim is off.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i + 8 < bytes.size(); ++i) {
        h ^= static_cast<std::uint8_t>(bytes[i]);
        h *= 0x100000001b3ULL;
    }
    for (int i = 0; i < 8; ++i) {
        bytes[bytes.size() - 8 + i] = static_cast<char>(static_cast<std::uint8_t>(h >> (8 * i)));
    }
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("migration"), IoError);
}

TEST_CASE("bad magic is its own error kind") {
    auto path = temp_path("fast_ck_magic.fstm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPEnopeXXXXXXXXXXXXXXXX";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), IoError);
}

TEST_CASE("stamped checkpoint reattaches the stamp and matches outputs bitwise") {
    auto [model, tok] = small_model();
    FairnessStamp s = FairnessStamp::init(8, model.config().d_model, 11);
    Rng rng(5);
    s.values = Tensor::randn({8, model.config().d_model}, rng, 0.3);
    model.attach_stamp(1, s);

    std::vector<TokenId> prompt = tok.encode("man is good at");
    prompt.push_back(Tokenizer::kMask);
    Tensor before = model.forward_mlm(prompt);

    auto path = temp_path("fast_ck_stamp.fstm");
    save_checkpoint(model, tok, path);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.model.stamped_layer() == std::size_t{1});
    CHECK(back.model.stamp(1)->d_c() == 8);
    CHECK(back.model.forward_mlm(prompt) == before);
}

TEST_CASE("checksum accessor matches the stored trailer and loading never mutates the file") {
    auto [model, tok] = small_model();
    auto path = temp_path("fast_ck_sum.fstm");
    save_checkpoint(model, tok, path);
    auto before = read_bytes(path);
    const std::uint64_t sum1 = checkpoint_checksum(path);
    load_checkpoint(path);
    CHECK(read_bytes(path) == before);
    CHECK(checkpoint_checksum(path) == sum1);
}
