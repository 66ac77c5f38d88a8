#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

#include "fast/pipeline.hpp"

using namespace fast;
using nlohmann::json;

namespace {

struct CommonFlags {
    std::uint64_t seed = 7;
    std::string out = "out";
};

void apply_config_file(int argc, char** argv, ModelConfig& model, TrainConfig& train,
                       EditConfig& edit, CommonFlags& common) {
    std::string path;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") path = argv[i + 1];
    }
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    in >> j;
    common.seed = j.value("seed", common.seed);
    common.out = j.value("out", common.out);
    if (j.contains("model")) {
        const json& m = j["model"];
        model.n_layers = m.value("n_layers", model.n_layers);
        model.d_model = m.value("d_model", model.d_model);
        model.n_heads = m.value("n_heads", model.n_heads);
        model.d_ffn = m.value("d_ffn", model.d_ffn);
        model.max_seq_len = m.value("max_seq_len", model.max_seq_len);
        if (m.value("activation", "gelu") == std::string("relu")) model.activation = Activation::Relu;
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        train.epochs = t.value("epochs", train.epochs);
        train.batch_size = t.value("batch_size", train.batch_size);
        train.lr = t.value("lr", train.lr);
        train.mask_prob = t.value("mask_prob", train.mask_prob);
        train.holdout_fraction = t.value("holdout_fraction", train.holdout_fraction);
    }
    if (j.contains("edit")) {
        const json& e = j["edit"];
        if (e.contains("target_layer")) edit.target_layer = e["target_layer"].get<std::size_t>();
        edit.d_c = e.value("d_c", edit.d_c);
        edit.alpha = e.value("alpha", edit.alpha);
        edit.beta = e.value("beta", edit.beta);
        edit.lr = e.value("lr", edit.lr);
        edit.iters_per_batch = e.value("iters_per_batch", edit.iters_per_batch);
        edit.batch_size = e.value("batch_size", edit.batch_size);
        edit.prefix_count = e.value("prefix_count", edit.prefix_count);
        edit.prefix_on_fairness = e.value("prefix_on_fairness", edit.prefix_on_fairness);
    }
}

void print_metrics_table(const MetricsReport& base, const MetricsReport& edited) {
    auto line = [](const std::string& name, const MetricsReport& r) {
        std::cout << std::left << std::setw(8) << name << std::right << std::fixed
                  << std::setprecision(2) << std::setw(8) << r.ss << std::setw(8);
        if (r.ps.has_value()) std::cout << *r.ps;
        else std::cout << "-";
        std::cout << std::setw(8) << r.ds << std::setw(8) << r.lms << std::setw(8) << r.icat << "\n";
    };
    std::cout << std::left << std::setw(8) << "model" << std::right << std::setw(8) << "SS"
              << std::setw(8) << "PS" << std::setw(8) << "DS" << std::setw(8) << "LMS"
              << std::setw(8) << "ICAT" << "\n";
    line("base", base);
    line("edited", edited);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fast: desk-scale editable-fairness pipeline (corpus -> pre-train -> locate -> "
                 "edit -> evaluate)"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonFlags common;
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    EditConfig edit_cfg;
    try {
        apply_config_file(argc, argv, model_cfg, train_cfg, edit_cfg, common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file mirroring the flags");
    app.add_option("--seed", common.seed, "global random seed");
    app.add_option("--out", common.out, "output directory");

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic biased corpus and fixtures");
    std::string spec_path;
    gen->add_option("--spec", spec_path, "corpus spec JSON (defaults to the bundled demo spec)");

    // train-base
    auto* train = app.add_subcommand("train-base", "pre-train the micro masked LM on a corpus");
    std::string corpus_path, kb_path, resume_path;
    train->add_option("--corpus", corpus_path, "corpus.txt")->required();
    train->add_option("--knowledge", kb_path, "knowledge.jsonl")->required();
    train->add_option("--resume", resume_path, "checkpoint to continue training from");
    train->add_option("--epochs", train_cfg.epochs, "training epochs");
    train->add_option("--batch", train_cfg.batch_size, "sentences per optimizer step");
    train->add_option("--lr", train_cfg.lr, "learning rate");
    train->add_option("--mask-prob", train_cfg.mask_prob, "masking probability");
    train->add_option("--layers", model_cfg.n_layers, "transformer layers");
    train->add_option("--d-model", model_cfg.d_model, "model width");
    train->add_option("--heads", model_cfg.n_heads, "attention heads");
    train->add_option("--d-ffn", model_cfg.d_ffn, "FFN width");
    train->add_option("--max-seq-len", model_cfg.max_seq_len, "maximum sequence length");
    bool verbose = false;
    train->add_flag("--verbose", verbose, "log batch losses");

    // locate
    auto* locate = app.add_subcommand("locate", "causal-tracing localization of the decisive layer");
    std::string ckpt_path;
    locate->add_option("--checkpoint", ckpt_path, "base checkpoint")->required();
    locate->add_option("--knowledge", kb_path, "knowledge.jsonl")->required();

    // edit
    auto* edit = app.add_subcommand("edit", "train a fairness stamp on the biased pairs");
    long long layer_flag = -1;
    edit->add_option("--checkpoint", ckpt_path, "base checkpoint")->required();
    edit->add_option("--knowledge", kb_path, "knowledge.jsonl")->required();
    edit->add_option("--layer", layer_flag, "target layer (default: decisive layer from locate)");
    edit->add_option("--d-c", edit_cfg.d_c, "stamp hidden dimension");
    edit->add_option("--alpha", edit_cfg.alpha, "weight of the distribution-specificity loss");
    edit->add_option("--beta", edit_cfg.beta, "weight of the subject-specificity loss");
    edit->add_option("--lr", edit_cfg.lr, "stamp learning rate");
    edit->add_option("--iters", edit_cfg.iters_per_batch, "iterations per batch");
    edit->add_option("--batch", edit_cfg.batch_size, "pairs per batch");
    edit->add_option("--prefix-count", edit_cfg.prefix_count, "prefix variants per prompt");
    bool no_prefix_fairness = false;
    edit->add_flag("--no-prefix-fairness", no_prefix_fairness,
                   "restrict prefix variants to the specificity losses");

    // eval
    auto* eval = app.add_subcommand("eval", "score base and edited checkpoints with the metric suite");
    std::string base_path, edited_path, extra_pairs_path;
    eval->add_option("--base", base_path, "base checkpoint")->required();
    eval->add_option("--edited", edited_path, "edited checkpoint")->required();
    eval->add_option("--knowledge", kb_path, "knowledge.jsonl")->required();
    eval->add_option("--extra-pairs", extra_pairs_path,
                     "second pair file scored with SS alongside the main set");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "edit+eval per layer or per stamp dimension");
    std::string sweep_kind = "layer";
    std::vector<std::size_t> sweep_dims;
    sweep->add_option("--kind", sweep_kind, "layer or dim")
        ->check(CLI::IsMember({"layer", "dim"}));
    sweep->add_option("--checkpoint", ckpt_path, "base checkpoint")->required();
    sweep->add_option("--knowledge", kb_path, "knowledge.jsonl")->required();
    sweep->add_option("--dims", sweep_dims, "stamp dimensions for --kind dim");
    sweep->add_option("--layer", layer_flag, "fixed layer for --kind dim");
    sweep->add_option("--d-c", edit_cfg.d_c, "stamp hidden dimension for --kind layer");
    sweep->add_option("--alpha", edit_cfg.alpha, "weight of the distribution-specificity loss");
    sweep->add_option("--beta", edit_cfg.beta, "weight of the subject-specificity loss");
    sweep->add_option("--iters", edit_cfg.iters_per_batch, "iterations per batch");

    // demo
    auto* demo = app.add_subcommand("demo", "full pipeline with shipped defaults");
    double demo_rho = 0.9;
    std::size_t demo_sentences = 20000;
    demo->add_option("--rho", demo_rho, "bias co-occurrence ratio");
    demo->add_option("--sentences", demo_sentences, "corpus size");
    demo->add_option("--epochs", train_cfg.epochs, "pre-training epochs");

    CLI11_PARSE(app, argc, argv);

    try {
        train_cfg.seed = common.seed;
        edit_cfg.seed = common.seed;
        if (layer_flag >= 0) edit_cfg.target_layer = static_cast<std::size_t>(layer_flag);
        if (no_prefix_fairness) edit_cfg.prefix_on_fairness = false;
        train_cfg.verbose = verbose;
        const std::filesystem::path out_dir = common.out;

        if (gen->parsed()) {
            CorpusSpec spec = spec_path.empty() ? demo_corpus_spec() : parse_corpus_spec(spec_path);
            GenCorpusResult r = cmd_gen_corpus(spec, common.seed, out_dir);
            std::cout << "corpus: " << r.corpus_path.string() << " (" << r.stats.n_bias << " bias, "
                      << r.stats.n_paraphrase << " paraphrase, " << r.stats.n_fact << " fact, "
                      << r.stats.n_filler << " filler; empirical rho " << r.stats.empirical_rho
                      << ")\n";
        } else if (train->parsed()) {
            std::optional<std::filesystem::path> resume;
            if (!resume_path.empty()) resume = resume_path;
            TrainBaseResult r =
                cmd_train_base(corpus_path, kb_path, model_cfg, train_cfg, out_dir, resume);
            std::cout << "checkpoint: " << r.checkpoint_path.string() << "\n";
            std::cout << "vocab: " << r.vocab_size << " words\n";
            if (!r.stats.epoch_loss.empty()) {
                std::cout << "final epoch loss: " << r.stats.epoch_loss.back() << "\n";
            }
            std::cout << "holdout mask accuracy: " << r.stats.holdout_accuracy << "\n";
        } else if (locate->parsed()) {
            LocateResult r = cmd_locate(ckpt_path, kb_path, out_dir);
            std::cout << "aie per layer:";
            for (double v : r.profile.mean_ie) std::cout << " " << v;
            std::cout << "\ndecisive layer: " << r.decisive << "\n";
        } else if (edit->parsed()) {
            EditResult r = cmd_edit(ckpt_path, kb_path, edit_cfg, out_dir);
            std::cout << "edited checkpoint: " << r.checkpoint_path.string() << "\n";
            std::cout << "target layer: " << r.report.target_layer << "\n";
            std::cout << "stamp parameters: " << r.report.stamp_parameter_count << "\n";
            std::cout << "edit wall seconds: " << r.report.wall_seconds << "\n";
        } else if (eval->parsed()) {
            std::optional<std::filesystem::path> extra;
            if (!extra_pairs_path.empty()) extra = extra_pairs_path;
            EvalResult r = cmd_eval(base_path, edited_path, kb_path, out_dir, extra);
            print_metrics_table(r.base, r.edited);
            if (r.extra_ss.has_value()) {
                std::cout << "extra SS: base " << r.extra_ss->first << ", edited "
                          << r.extra_ss->second << "\n";
            }
        } else if (sweep->parsed()) {
            SweepResult r = cmd_sweep(sweep_kind == "layer" ? SweepKind::Layer : SweepKind::Dim,
                                      ckpt_path, kb_path, edit_cfg, sweep_dims, out_dir);
            std::cout << "sweep table: " << r.csv_path.string() << "\n";
            for (const SweepRow& row : r.rows) {
                std::cout << row.setting << ": ";
                if (row.ok) {
                    std::cout << "ss " << row.ss << " ds " << row.ds << " lms " << row.lms << " icat "
                              << row.icat << "\n";
                } else {
                    std::cout << "failed: " << row.error << "\n";
                }
            }
        } else if (demo->parsed()) {
            DemoOverrides overrides;
            CorpusSpec spec = demo_corpus_spec();
            spec.rho = demo_rho;
            spec.n_sentences = demo_sentences;
            overrides.corpus_spec = spec;
            if (demo->count("--epochs") > 0) {
                TrainConfig t = demo_train_preset();
                t.epochs = train_cfg.epochs;
                overrides.train = t;
            }
            DemoResult r = cmd_demo(out_dir, common.seed, overrides);
            std::cout << "decisive layer: " << r.locate.decisive << "\n";
            print_metrics_table(r.eval.base, r.eval.edited);
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
