#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fast/pipeline.hpp"

using namespace fast;
namespace fs = std::filesystem;

namespace {

// Small, fast pipeline fixture: tiny corpus and model so the whole flow runs
// in seconds.
struct Env {
    fs::path dir;
    CorpusSpec spec;
    ModelConfig model;
    TrainConfig train;

    Env(const std::string& name) {
        dir = fs::temp_directory_path() / name;
        fs::remove_all(dir);
        spec = demo_corpus_spec();
        spec.n_sentences = 2500;
        model.n_layers = 2;
        model.d_model = 24;
        model.n_heads = 2;
        model.d_ffn = 48;
        model.max_seq_len = 24;
        train.epochs = 1;
        train.batch_size = 32;
        train.seed = 7;
    }
};

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    nlohmann::json j;
    in >> j;
    return j;
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    return n;
}

} // namespace

TEST_CASE("gen-corpus writes deterministic artifacts") {
    Env env("fast_pl_gen");
    GenCorpusResult a = cmd_gen_corpus(env.spec, 7, env.dir / "a");
    GenCorpusResult b = cmd_gen_corpus(env.spec, 7, env.dir / "b");
    CHECK(read_bytes(a.corpus_path) == read_bytes(b.corpus_path));
    CHECK(read_bytes(a.kb_path) == read_bytes(b.kb_path));
    CHECK(fs::exists(a.stats_path));
    CHECK(fs::exists(a.spec_path));
    // The recorded spec reproduces the corpus byte for byte.
    CorpusSpec back = parse_corpus_spec(a.spec_path);
    GeneratedCorpus regen = generate_corpus(back, 7);
    CHECK(count_lines(a.corpus_path) == regen.sentences.size());
}

TEST_CASE("train, locate, edit, eval round trip with artifacts") {
    Env env("fast_pl_flow");
    GenCorpusResult corpus = cmd_gen_corpus(env.spec, 7, env.dir / "corpus");
    TrainBaseResult base =
        cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model, env.train, env.dir / "train");
    CHECK(fs::exists(base.checkpoint_path));
    CHECK(base.stats.epoch_loss.size() == 1);
    CHECK(base.stats.holdout_accuracy > 0.1);  // artifact-flow fixture, barely trained

    LocateResult loc = cmd_locate(base.checkpoint_path, corpus.kb_path, env.dir / "run");
    CHECK(loc.profile.mean_ie.size() == env.model.n_layers);
    CHECK(loc.skipped.empty());
    CHECK(fs::exists(loc.csv_path));
    CHECK(fs::exists(loc.svg_path));
    CHECK(count_lines(loc.csv_path) == env.model.n_layers + 1);

    EditConfig edit_cfg = demo_edit_preset();
    edit_cfg.d_c = 16;
    edit_cfg.iters_per_batch = 5;
    edit_cfg.seed = 7;
    // No explicit layer: resolved from locate.json in the same directory.
    EditResult edit = cmd_edit(base.checkpoint_path, corpus.kb_path, edit_cfg, env.dir / "run");
    CHECK(edit.report.target_layer == loc.decisive);
    CHECK(edit.report.stamp_parameter_count == 2 * 16 * env.model.d_model);
    CHECK(fs::exists(edit.report_path));

    EvalResult ev = cmd_eval(base.checkpoint_path, edit.checkpoint_path, corpus.kb_path,
                             env.dir / "run");
    CHECK(ev.base.ds == 100.0);  // base vs base argmax always agrees
    // Audit rows: header + pairs + paraphrases + facts.
    CHECK(count_lines(ev.audit_path) == 1 + 8 + 8 + 8);
    // Wall times recorded per stage.
    nlohmann::json meta = read_json(env.dir / "run" / "run_meta.json");
    CHECK(meta["stage_seconds"].contains("locate"));
    CHECK(meta["stage_seconds"].contains("edit"));
    CHECK(meta["stage_seconds"]["edit"].get<double>() > 0.0);

    // Layer override is respected.
    EditConfig forced = edit_cfg;
    forced.target_layer = 1;
    EditResult edit2 = cmd_edit(base.checkpoint_path, corpus.kb_path, forced, env.dir / "run2");
    CHECK(edit2.report.target_layer == 1);
}

TEST_CASE("locate skips untraceable pairs and continues") {
    Env env("fast_pl_skip");
    GeneratedCorpus gen = generate_corpus(env.spec, 7);
    // Append an object-flip pair built from in-vocabulary words.
    BiasedPair obj;
    obj.k1 = {"man", "talks about", "sports"};
    obj.k2 = {"man", "talks about", "fashion"};
    obj.irrelevant_object = "spoons";
    obj.flip = FlipKind::Object;
    gen.kb.pairs.push_back(obj);

    fs::create_directories(env.dir / "corpus");
    const fs::path corpus_path = env.dir / "corpus" / "corpus.txt";
    const fs::path kb_path = env.dir / "corpus" / "knowledge.jsonl";
    save_corpus(gen.sentences, corpus_path);
    save_knowledge_file(gen.kb, kb_path);

    TrainConfig quick = env.train;
    quick.epochs = 0;
    TrainBaseResult base = cmd_train_base(corpus_path, kb_path, env.model, quick, env.dir / "train");
    LocateResult loc = cmd_locate(base.checkpoint_path, kb_path, env.dir / "run");
    CHECK(loc.skipped.size() == 1);
    CHECK(loc.skipped[0] == obj.id());
    CHECK(loc.profile.pair_count == 8);
}

TEST_CASE("a second pair file is scored with SS alongside the main set") {
    Env env("fast_pl_extra");
    GenCorpusResult corpus = cmd_gen_corpus(env.spec, 7, env.dir / "corpus");
    TrainBaseResult base =
        cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model, env.train, env.dir / "train");
    EvalResult ev = cmd_eval(base.checkpoint_path, base.checkpoint_path, corpus.kb_path,
                             env.dir / "eval", corpus.kb_path);
    REQUIRE(ev.extra_ss.has_value());
    // Same file, same model: the second dataset's SS equals the main SS.
    CHECK(ev.extra_ss->first == ev.base.ss);
    CHECK(ev.extra_ss->second == ev.edited.ss);
}

TEST_CASE("edit without locate artifacts or layer flag is an error") {
    Env env("fast_pl_nolayer");
    GenCorpusResult corpus = cmd_gen_corpus(env.spec, 7, env.dir / "corpus");
    TrainBaseResult base =
        cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model, env.train, env.dir / "train");
    EditConfig cfg = demo_edit_preset();
    CHECK_THROWS_AS(cmd_edit(base.checkpoint_path, corpus.kb_path, cfg, env.dir / "fresh"),
                    UsageError);
}

TEST_CASE("eval rejects checkpoints with different vocabularies") {
    Env env("fast_pl_vocab");
    GenCorpusResult corpus = cmd_gen_corpus(env.spec, 7, env.dir / "corpus");
    TrainBaseResult base =
        cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model, env.train, env.dir / "a");
    // Second corpus with an extra filler word changes the vocabulary.
    CorpusSpec other = env.spec;
    other.filler_words.push_back("zeppelin");
    GenCorpusResult corpus2 = cmd_gen_corpus(other, 7, env.dir / "corpus2");
    TrainBaseResult base2 =
        cmd_train_base(corpus2.corpus_path, corpus2.kb_path, env.model, env.train, env.dir / "b");
    CHECK_THROWS_AS(
        cmd_eval(base.checkpoint_path, base2.checkpoint_path, corpus.kb_path, env.dir / "eval"),
        ValidationError);
}

TEST_CASE("train-base with zero epochs yields a valid near-uniform checkpoint") {
    Env env("fast_pl_zero");
    GenCorpusResult corpus = cmd_gen_corpus(env.spec, 7, env.dir / "corpus");
    TrainConfig t = env.train;
    t.epochs = 0;
    TrainBaseResult r =
        cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model, t, env.dir / "train");
    Checkpoint ck = load_checkpoint(r.checkpoint_path);
    Prompt p = render_prompt(ck.tokenizer, "man", "is good at", 24);
    Tensor dist = ck.model.forward_mlm(p.tokens);
    // Untrained: no completion dominates.
    for (std::size_t i = 0; i < dist.numel(); ++i) CHECK(dist[i] < 0.2);
}

TEST_CASE("resumed training continues from the recorded state") {
    Env env("fast_pl_resume");
    GenCorpusResult corpus = cmd_gen_corpus(env.spec, 7, env.dir / "corpus");
    TrainBaseResult first =
        cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model, env.train, env.dir / "a");
    TrainBaseResult resumed = cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model,
                                             env.train, env.dir / "b", first.checkpoint_path);
    // Warm start: epoch-mean loss clearly below the fresh run's first epoch.
    CHECK(resumed.stats.epoch_loss.front() < 0.8 * first.stats.epoch_loss.front());
}

TEST_CASE("identical runs reproduce identical artifacts except run metadata") {
    Env env("fast_pl_deterministic");
    auto run = [&](const fs::path& dir) {
        GenCorpusResult corpus = cmd_gen_corpus(env.spec, 7, dir / "corpus");
        TrainBaseResult base =
            cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model, env.train, dir / "run");
        LocateResult loc = cmd_locate(base.checkpoint_path, corpus.kb_path, dir / "run");
        EditConfig cfg = demo_edit_preset();
        cfg.d_c = 16;
        cfg.iters_per_batch = 4;
        cfg.seed = 7;
        cmd_edit(base.checkpoint_path, corpus.kb_path, cfg, dir / "run");
        cmd_eval(base.checkpoint_path, dir / "run" / "edited.fstm", corpus.kb_path, dir / "run");
        return dir / "run";
    };
    fs::path a = run(env.dir / "a");
    fs::path b = run(env.dir / "b");
    for (const char* name : {"base.fstm", "edited.fstm", "aie.csv", "aie.svg", "locate.json",
                             "edit_report.json", "metrics.json", "audit.csv", "train_stats.json"}) {
        CHECK(read_bytes(a / name) == read_bytes(b / name));
    }
}

TEST_CASE("dim sweep rows are complete and parameter counts are monotone") {
    Env env("fast_pl_sweep");
    GenCorpusResult corpus = cmd_gen_corpus(env.spec, 7, env.dir / "corpus");
    TrainBaseResult base =
        cmd_train_base(corpus.corpus_path, corpus.kb_path, env.model, env.train, env.dir / "train");
    EditConfig cfg = demo_edit_preset();
    cfg.iters_per_batch = 3;
    cfg.target_layer = 0;
    cfg.seed = 7;
    SweepResult sweep = cmd_sweep(SweepKind::Dim, base.checkpoint_path, corpus.kb_path, cfg,
                                  {8, 16, 32}, env.dir / "sweep");
    REQUIRE(sweep.rows.size() == 3);
    for (const SweepRow& row : sweep.rows) CHECK(row.ok);
    CHECK(sweep.rows[0].stamp_params < sweep.rows[1].stamp_params);
    CHECK(sweep.rows[1].stamp_params < sweep.rows[2].stamp_params);
    CHECK(fs::exists(sweep.csv_path));
    CHECK(fs::exists(sweep.svg_path));

    SweepResult layers = cmd_sweep(SweepKind::Layer, base.checkpoint_path, corpus.kb_path, cfg, {},
                                   env.dir / "sweep_layer");
    CHECK(layers.rows.size() == env.model.n_layers);
}
