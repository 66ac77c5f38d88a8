#include "fast/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "fast/rng.hpp"
#include "fast/svg.hpp"

namespace fast {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

// Wall-clock timings live here and only here, so identical runs differ in no
// other artifact.
void record_stage_seconds(const std::filesystem::path& out_dir, const std::string& stage,
                          double seconds) {
    const auto path = out_dir / "run_meta.json";
    json j = json::object();
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        try {
            in >> j;
        } catch (const json::exception&) {
            j = json::object();
        }
    }
    j["stage_seconds"][stage] = seconds;
    write_json_file(path, j);
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

json model_config_json(const ModelConfig& cfg) {
    return {{"n_layers", cfg.n_layers},     {"d_model", cfg.d_model},
            {"n_heads", cfg.n_heads},       {"d_ffn", cfg.d_ffn},
            {"vocab_size", cfg.vocab_size}, {"max_seq_len", cfg.max_seq_len},
            {"activation", cfg.activation == Activation::Relu ? "relu" : "gelu"}};
}

json train_config_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},        {"batch_size", cfg.batch_size},
            {"lr", cfg.lr},                {"mask_prob", cfg.mask_prob},
            {"holdout_fraction", cfg.holdout_fraction}, {"seed", cfg.seed}};
}

json edit_config_json(const EditConfig& cfg) {
    json j = {{"d_c", cfg.d_c},
              {"alpha", cfg.alpha},
              {"beta", cfg.beta},
              {"lr", cfg.lr},
              {"iters_per_batch", cfg.iters_per_batch},
              {"batch_size", cfg.batch_size},
              {"prefix_count", cfg.prefix_count},
              {"seed", cfg.seed},
              {"prefix_on_fairness", cfg.prefix_on_fairness}};
    if (cfg.target_layer.has_value()) j["target_layer"] = *cfg.target_layer;
    return j;
}

json metrics_json(const MetricsReport& report) {
    json j = {{"ss", report.ss}, {"ds", report.ds}, {"lms", report.lms}, {"icat", report.icat}};
    if (report.ps.has_value()) j["ps"] = *report.ps;
    else j["ps"] = nullptr;
    return j;
}

std::vector<std::string> kb_word_sources(const KnowledgeBase& kb) {
    std::vector<std::string> out;
    for (const BiasedPair& p : kb.pairs) {
        out.insert(out.end(), {p.k1.subject, p.k2.subject, p.k1.relation, p.k1.object, p.k2.object,
                               p.irrelevant_object});
    }
    for (const ParaphrasePair& pp : kb.paraphrases) out.push_back(pp.k1.relation);
    for (const DifferentiationFact& f : kb.facts) {
        out.insert(out.end(), {f.subject, f.relation, f.correct_object});
        out.insert(out.end(), f.distractors.begin(), f.distractors.end());
    }
    return out;
}

} // namespace

GenCorpusResult cmd_gen_corpus(const CorpusSpec& spec, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
    const auto t0 = Clock::now();
    ensure_dir(out_dir);
    GeneratedCorpus gen = generate_corpus(spec, seed);

    GenCorpusResult result;
    result.stats = gen.stats;
    result.corpus_path = out_dir / "corpus.txt";
    result.kb_path = out_dir / "knowledge.jsonl";
    result.spec_path = out_dir / "corpus_spec.json";
    result.stats_path = out_dir / "stats.json";

    save_corpus(gen.sentences, result.corpus_path);
    save_knowledge_file(gen.kb, result.kb_path);
    CorpusSpec resolved = spec;
    resolved.seed = seed;
    save_corpus_spec(resolved, result.spec_path);
    write_json_file(result.stats_path, {{"n_sentences", gen.sentences.size()},
                                        {"n_bias", gen.stats.n_bias},
                                        {"n_paraphrase", gen.stats.n_paraphrase},
                                        {"n_fact", gen.stats.n_fact},
                                        {"n_filler", gen.stats.n_filler},
                                        {"n_aligned", gen.stats.n_aligned},
                                        {"empirical_rho", gen.stats.empirical_rho},
                                        {"vocab_words", gen.stats.vocab_words},
                                        {"n_pairs", gen.kb.pairs.size()},
                                        {"n_paraphrase_pairs", gen.kb.paraphrases.size()},
                                        {"n_facts", gen.kb.facts.size()}});
    record_stage_seconds(out_dir, "gen_corpus", seconds_since(t0));
    return result;
}

TrainBaseResult cmd_train_base(const std::filesystem::path& corpus_path,
                               const std::filesystem::path& kb_path, ModelConfig model_cfg,
                               TrainConfig train_cfg, const std::filesystem::path& out_dir,
                               const std::optional<std::filesystem::path>& resume_from) {
    const auto t0 = Clock::now();
    ensure_dir(out_dir);
    const std::vector<std::string> sentences = load_corpus(corpus_path);
    if (sentences.empty()) throw ValidationError("train-base: corpus is empty");
    KnowledgeBase kb = parse_knowledge_file(kb_path);

    TrainBaseResult result;
    MicroTransformer model = MicroTransformer::init(ModelConfig{}, 0, 0.0);  // placeholder
    Tokenizer tok;
    if (resume_from.has_value()) {
        Checkpoint ck = load_checkpoint(*resume_from);
        model = std::move(ck.model);
        tok = std::move(ck.tokenizer);
    } else {
        std::vector<std::string> extra = kb_word_sources(kb);
        for (const std::string& w : simple_prompt_words()) extra.push_back(w);
        for (const std::string& p : default_prefix_pool()) extra.push_back(p);
        tok = Tokenizer::build(sentences, extra);
        model_cfg.vocab_size = tok.vocab_size();
        model_cfg.validate();
        model = MicroTransformer::init(model_cfg, Rng::mix(train_cfg.seed, 0x6d6f64656c));
    }
    validate_knowledge(kb, tok);

    result.stats = train_masked_lm(model, tok, sentences, train_cfg);
    result.vocab_size = tok.vocab_size();
    result.checkpoint_path = out_dir / "base.fstm";
    save_checkpoint(model, tok, result.checkpoint_path);

    write_json_file(out_dir / "resolved_config.json",
                    {{"command", "train-base"},
                     {"model", model_config_json(model.config())},
                     {"train", train_config_json(train_cfg)},
                     {"corpus", corpus_path.string()},
                     {"knowledge", kb_path.string()}});
    write_json_file(out_dir / "train_stats.json",
                    {{"epoch_loss", result.stats.epoch_loss},
                     {"holdout_accuracy", result.stats.holdout_accuracy},
                     {"train_sentences", result.stats.train_sentences},
                     {"holdout_sentences", result.stats.holdout_sentences}});
    result.wall_seconds = seconds_since(t0);
    record_stage_seconds(out_dir, "train_base", result.wall_seconds);
    return result;
}

LocateResult cmd_locate(const std::filesystem::path& checkpoint_path,
                        const std::filesystem::path& kb_path, const std::filesystem::path& out_dir) {
    const auto t0 = Clock::now();
    ensure_dir(out_dir);
    Checkpoint ck = load_checkpoint(checkpoint_path);
    KnowledgeBase kb = load_knowledge_base(kb_path, ck.tokenizer);
    if (kb.pairs.empty()) throw UsageError("locate: knowledge base has no pairs");

    LocateResult result;
    const std::size_t n_layers = ck.model.config().n_layers;
    std::vector<double> sums(n_layers, 0.0);
    std::size_t traced = 0;
    for (const BiasedPair& pair : kb.pairs) {
        try {
            TraceResult tr = trace_pair(ck.model, ck.tokenizer, pair);
            for (std::size_t l = 0; l < n_layers; ++l) sums[l] += tr.ie[l];
            ++traced;
        } catch (const UsageError& e) {
            result.skipped.push_back(pair.id());
            std::cerr << "locate: skipping untraceable pair " << pair.id() << ": " << e.what() << "\n";
        }
    }
    if (traced == 0) throw UsageError("locate: no traceable pair in the knowledge base");
    result.profile.mean_ie.resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        result.profile.mean_ie[l] = sums[l] / static_cast<double>(traced);
    }
    result.profile.pair_count = traced;
    result.profile.argmax_layer = decisive_layer(result.profile);
    result.decisive = result.profile.argmax_layer;

    result.csv_path = out_dir / "aie.csv";
    std::ostringstream csv;
    csv << "layer,aie\n";
    for (std::size_t l = 0; l < n_layers; ++l) csv << l << "," << fmt_double(result.profile.mean_ie[l]) << "\n";
    write_text(result.csv_path, csv.str());

    result.svg_path = out_dir / "aie.svg";
    std::vector<std::string> labels;
    for (std::size_t l = 0; l < n_layers; ++l) labels.push_back(std::to_string(l));
    write_text(result.svg_path, svg_bar_chart("average indirect effect per layer", labels,
                                              result.profile.mean_ie));

    result.json_path = out_dir / "locate.json";
    write_json_file(result.json_path, {{"decisive_layer", result.decisive},
                                       {"mean_ie", result.profile.mean_ie},
                                       {"pair_count", result.profile.pair_count},
                                       {"skipped", result.skipped}});
    result.wall_seconds = seconds_since(t0);
    record_stage_seconds(out_dir, "locate", result.wall_seconds);
    return result;
}

namespace {

std::size_t resolve_target_layer(const EditConfig& config, const std::filesystem::path& out_dir) {
    if (config.target_layer.has_value()) return *config.target_layer;
    const auto locate_path = out_dir / "locate.json";
    if (std::filesystem::exists(locate_path)) {
        std::ifstream in(locate_path);
        json j;
        in >> j;
        return j.at("decisive_layer").get<std::size_t>();
    }
    throw UsageError("edit: no --layer given and no locate.json in " + out_dir.string() +
                     "; run `fast locate` first or pass --layer");
}

json edit_report_json(const EditReport& report) {
    json history = json::array();
    for (const LossBreakdown& e : report.history) {
        history.push_back({{"fairness", e.fairness},
                           {"spec_dist", e.spec_dist},
                           {"spec_subject", e.spec_subject},
                           {"total", e.total}});
    }
    // Wall time goes to run_meta.json, keeping this file identical across
    // identical runs.
    return {{"target_layer", report.target_layer},
            {"stamp_parameter_count", report.stamp_parameter_count},
            {"iterations", report.history.size()},
            {"history", history},
            {"final_gaps", report.final_gaps}};
}

} // namespace

EditResult cmd_edit(const std::filesystem::path& base_checkpoint,
                    const std::filesystem::path& kb_path, EditConfig config,
                    const std::filesystem::path& out_dir) {
    ensure_dir(out_dir);
    Checkpoint ck = load_checkpoint(base_checkpoint);
    if (ck.model.stamped_layer().has_value()) {
        throw UsageError("edit: checkpoint already carries a stamp; edit from the base checkpoint");
    }
    KnowledgeBase kb = load_knowledge_base(kb_path, ck.tokenizer);
    if (kb.pairs.empty()) throw UsageError("edit: knowledge base has no pairs");
    config.target_layer = resolve_target_layer(config, out_dir);

    EditResult result;
    result.report = train_stamp(ck.model, ck.tokenizer, kb.pairs, config);

    result.checkpoint_path = out_dir / "edited.fstm";
    save_checkpoint(ck.model, ck.tokenizer, result.checkpoint_path);
    result.report_path = out_dir / "edit_report.json";
    write_json_file(result.report_path, edit_report_json(result.report));
    write_json_file(out_dir / "resolved_config.json",
                    {{"command", "edit"},
                     {"edit", edit_config_json(config)},
                     {"base_checkpoint", base_checkpoint.string()},
                     {"knowledge", kb_path.string()}});
    record_stage_seconds(out_dir, "edit", result.report.wall_seconds);
    return result;
}

namespace {

std::string csv_cell(double v) { return fmt_double(v); }

void write_audit_csv(const std::filesystem::path& path, const MetricsReport& base,
                     const MetricsReport& edited) {
    std::ostringstream os;
    os << "dataset,id,base_p_k1,base_p_k2,base_p_ir1,base_p_ir2,base_ss_verdict,base_lms_hits,"
          "edited_p_k1,edited_p_k2,edited_p_ir1,edited_p_ir2,edited_ss_verdict,edited_lms_hits,"
          "ds_agree,tie\n";
    for (std::size_t i = 0; i < edited.items.size(); ++i) {
        const ItemRecord& b = base.items[i];
        const ItemRecord& e = edited.items[i];
        os << e.dataset << "," << e.id << ",";
        if (e.dataset == "fact") {
            os << ",,,,,,,,,,,," << (e.ds_agree ? 1 : 0) << "," << (e.tie ? 1 : 0) << "\n";
        } else {
            os << csv_cell(b.p_k1) << "," << csv_cell(b.p_k2) << "," << csv_cell(b.p_ir1) << ","
               << csv_cell(b.p_ir2) << "," << b.ss_verdict << "," << b.lms_hits << ","
               << csv_cell(e.p_k1) << "," << csv_cell(e.p_k2) << "," << csv_cell(e.p_ir1) << ","
               << csv_cell(e.p_ir2) << "," << e.ss_verdict << "," << e.lms_hits << ",,"
               << (e.tie ? 1 : 0) << "\n";
        }
    }
    write_text(path, os.str());
}

} // namespace

EvalResult cmd_eval(const std::filesystem::path& base_checkpoint,
                    const std::filesystem::path& edited_checkpoint,
                    const std::filesystem::path& kb_path, const std::filesystem::path& out_dir,
                    const std::optional<std::filesystem::path>& extra_pairs) {
    const auto t0 = Clock::now();
    ensure_dir(out_dir);
    Checkpoint base = load_checkpoint(base_checkpoint);
    Checkpoint edited = load_checkpoint(edited_checkpoint);
    if (!(base.tokenizer == edited.tokenizer)) {
        throw ValidationError("eval: checkpoints embed different vocabularies; they are not comparable");
    }
    KnowledgeBase kb = load_knowledge_base(kb_path, base.tokenizer);

    EvalResult result;
    result.base = evaluate(base.model, base.model, base.tokenizer, kb);
    result.edited = evaluate(base.model, edited.model, base.tokenizer, kb);

    json report = {{"base", metrics_json(result.base)}, {"edited", metrics_json(result.edited)}};
    if (extra_pairs.has_value()) {
        KnowledgeBase kb2 = load_knowledge_base(*extra_pairs, base.tokenizer);
        if (kb2.pairs.empty()) throw UsageError("eval: second pair file has no pairs");
        ProbeTable t_base = probe_models(base.model, base.model, base.tokenizer, kb2);
        ProbeTable t_edit = probe_models(base.model, edited.model, base.tokenizer, kb2);
        result.extra_ss = {stereotype_score(t_base.pairs), stereotype_score(t_edit.pairs)};
        report["extra_ss"] = {{"base", result.extra_ss->first}, {"edited", result.extra_ss->second}};
    }

    result.report_path = out_dir / "metrics.json";
    write_json_file(result.report_path, report);
    result.audit_path = out_dir / "audit.csv";
    write_audit_csv(result.audit_path, result.base, result.edited);
    record_stage_seconds(out_dir, "eval", seconds_since(t0));
    return result;
}

SweepResult cmd_sweep(SweepKind kind, const std::filesystem::path& base_checkpoint,
                      const std::filesystem::path& kb_path, EditConfig config,
                      const std::vector<std::size_t>& dims, const std::filesystem::path& out_dir) {
    ensure_dir(out_dir);
    SweepResult result;

    std::vector<std::size_t> settings;
    std::string setting_name;
    {
        Checkpoint probe = load_checkpoint(base_checkpoint);
        if (kind == SweepKind::Layer) {
            setting_name = "layer";
            for (std::size_t l = 0; l < probe.model.config().n_layers; ++l) settings.push_back(l);
        } else {
            setting_name = "d_c";
            settings = dims;
            if (settings.empty()) settings = {16, 64, 256};
            config.target_layer = resolve_target_layer(config, out_dir);
        }
    }

    for (const std::size_t setting : settings) {
        SweepRow row;
        row.setting = std::to_string(setting);
        try {
            Checkpoint ck = load_checkpoint(base_checkpoint);
            KnowledgeBase kb = load_knowledge_base(kb_path, ck.tokenizer);
            EditConfig cfg = config;
            if (kind == SweepKind::Layer) cfg.target_layer = setting;
            else cfg.d_c = setting;
            EditReport report = train_stamp(ck.model, ck.tokenizer, kb.pairs, cfg);

            Checkpoint base = load_checkpoint(base_checkpoint);
            MetricsReport metrics = evaluate(base.model, ck.model, base.tokenizer, kb);
            row.ok = true;
            row.ss = metrics.ss;
            row.ps = metrics.ps;
            row.ds = metrics.ds;
            row.lms = metrics.lms;
            row.icat = metrics.icat;
            row.stamp_params = report.stamp_parameter_count;
            row.edit_seconds = report.wall_seconds;
        } catch (const Error& e) {
            row.ok = false;
            row.error = e.what();
            std::cerr << "sweep: setting " << row.setting << " failed: " << e.what() << "\n";
        }
        result.rows.push_back(std::move(row));
    }

    result.csv_path = out_dir / (setting_name + "_sweep.csv");
    std::ostringstream csv;
    csv << setting_name << ",ok,ss,ps,ds,lms,icat,stamp_params,error\n";
    for (const SweepRow& row : result.rows) {
        csv << row.setting << "," << (row.ok ? 1 : 0) << ",";
        if (row.ok) {
            csv << fmt_double(row.ss) << "," << (row.ps ? fmt_double(*row.ps) : "") << ","
                << fmt_double(row.ds) << "," << fmt_double(row.lms) << "," << fmt_double(row.icat)
                << "," << row.stamp_params << ",";
        } else {
            csv << ",,,,,,";
        }
        csv << row.error << "\n";
    }
    write_text(result.csv_path, csv.str());

    std::vector<std::string> labels;
    SvgSeries ss_close{"100-|SS-50|", {}}, ds{"DS", {}}, lms{"LMS", {}};
    for (const SweepRow& row : result.rows) {
        if (!row.ok) continue;
        labels.push_back(row.setting);
        ss_close.values.push_back(100.0 - std::abs(row.ss - 50.0));
        ds.values.push_back(row.ds);
        lms.values.push_back(row.lms);
    }
    result.svg_path = out_dir / (setting_name + "_sweep.svg");
    write_text(result.svg_path,
               svg_line_chart(setting_name + " sweep", labels, {ss_close, ds, lms}));

    write_json_file(out_dir / "resolved_config.json",
                    {{"command", "sweep"},
                     {"kind", kind == SweepKind::Layer ? "layer" : "dim"},
                     {"edit", edit_config_json(config)},
                     {"settings", settings},
                     {"base_checkpoint", base_checkpoint.string()},
                     {"knowledge", kb_path.string()}});
    return result;
}

TrainConfig demo_train_preset() {
    TrainConfig cfg;
    cfg.epochs = 2;
    return cfg;
}

EditConfig demo_edit_preset() {
    EditConfig cfg;
    cfg.alpha = 0.5;
    cfg.lr = 0.08;
    return cfg;
}

DemoResult cmd_demo(const std::filesystem::path& out_dir, std::uint64_t seed,
                    const DemoOverrides& overrides) {
    const auto t0 = Clock::now();
    ensure_dir(out_dir);
    DemoResult demo;
    demo.dir = out_dir;

    CorpusSpec spec = overrides.corpus_spec.value_or(demo_corpus_spec());
    ModelConfig model_cfg = overrides.model.value_or(ModelConfig{});
    TrainConfig train_cfg = overrides.train.value_or(demo_train_preset());
    EditConfig edit_cfg = overrides.edit.value_or(demo_edit_preset());
    train_cfg.seed = seed;
    edit_cfg.seed = seed;

    std::cerr << "demo: generating corpus\n";
    demo.corpus = cmd_gen_corpus(spec, seed, out_dir / "corpus");
    std::cerr << "demo: pre-training base model (" << spec.n_sentences << " sentences, "
              << train_cfg.epochs << " epochs)\n";
    demo.train = cmd_train_base(demo.corpus.corpus_path, demo.corpus.kb_path, model_cfg, train_cfg,
                                out_dir / "train");
    std::cerr << "demo: locating the decisive layer\n";
    demo.locate = cmd_locate(demo.train.checkpoint_path, demo.corpus.kb_path, out_dir / "locate");
    std::cerr << "demo: decisive layer " << demo.locate.decisive << "; training the fairness stamp\n";
    edit_cfg.target_layer = demo.locate.decisive;
    demo.edit = cmd_edit(demo.train.checkpoint_path, demo.corpus.kb_path, edit_cfg, out_dir / "edit");
    std::cerr << "demo: evaluating base vs edited\n";
    demo.eval = cmd_eval(demo.train.checkpoint_path, demo.edit.checkpoint_path, demo.corpus.kb_path,
                         out_dir / "eval");

    write_json_file(out_dir / "resolved_config.json",
                    {{"command", "demo"},
                     {"seed", seed},
                     {"model", model_config_json(model_cfg)},
                     {"train", train_config_json(train_cfg)},
                     {"edit", edit_config_json(edit_cfg)}});
    record_stage_seconds(out_dir, "train_base", demo.train.wall_seconds);
    record_stage_seconds(out_dir, "locate", demo.locate.wall_seconds);
    record_stage_seconds(out_dir, "edit", demo.edit.report.wall_seconds);
    record_stage_seconds(out_dir, "total", seconds_since(t0));
    return demo;
}

} // namespace fast
