#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fast/checkpoint.hpp"
#include "fast/corpus.hpp"
#include "fast/localization.hpp"
#include "fast/metrics.hpp"
#include "fast/stamp.hpp"
#include "fast/trainer.hpp"

namespace fast {

// Orchestration layer behind the CLI subcommands. Every command writes its
// artifacts (plus a resolved_config.json) into the given directory and is a
// pure function of (inputs, seed); wall-clock timings go only into
// run_meta.json so identical runs produce identical artifacts.

struct GenCorpusResult {
    std::filesystem::path corpus_path, kb_path, spec_path, stats_path;
    CorpusStats stats;
};
GenCorpusResult cmd_gen_corpus(const CorpusSpec& spec, std::uint64_t seed,
                               const std::filesystem::path& out_dir);

struct TrainBaseResult {
    std::filesystem::path checkpoint_path;
    TrainStats stats;
    std::size_t vocab_size = 0;
    double wall_seconds = 0.0;
};
TrainBaseResult cmd_train_base(const std::filesystem::path& corpus_path,
                               const std::filesystem::path& kb_path, ModelConfig model_cfg,
                               TrainConfig train_cfg, const std::filesystem::path& out_dir,
                               const std::optional<std::filesystem::path>& resume_from = std::nullopt);

struct LocateResult {
    AieProfile profile;
    std::size_t decisive = 0;
    std::vector<std::string> skipped;  // untraceable pair ids
    std::filesystem::path csv_path, svg_path, json_path;
    double wall_seconds = 0.0;
};
LocateResult cmd_locate(const std::filesystem::path& checkpoint_path,
                        const std::filesystem::path& kb_path, const std::filesystem::path& out_dir);

struct EditResult {
    std::filesystem::path checkpoint_path, report_path;
    EditReport report;
};
// When config.target_layer is unset, the decisive layer is read from a prior
// locate run in the same directory.
EditResult cmd_edit(const std::filesystem::path& base_checkpoint,
                    const std::filesystem::path& kb_path, EditConfig config,
                    const std::filesystem::path& out_dir);

struct EvalResult {
    MetricsReport base;
    MetricsReport edited;
    // SS over a second pair file, when one is supplied (same metric, second
    // dataset), for base and edited.
    std::optional<std::pair<double, double>> extra_ss;
    std::filesystem::path report_path, audit_path;
};
EvalResult cmd_eval(const std::filesystem::path& base_checkpoint,
                    const std::filesystem::path& edited_checkpoint,
                    const std::filesystem::path& kb_path, const std::filesystem::path& out_dir,
                    const std::optional<std::filesystem::path>& extra_pairs = std::nullopt);

struct SweepRow {
    std::string setting;
    bool ok = false;
    std::string error;
    double ss = 0.0, ds = 0.0, lms = 0.0, icat = 0.0;
    std::optional<double> ps;
    std::size_t stamp_params = 0;
    double edit_seconds = 0.0;
};
struct SweepResult {
    std::vector<SweepRow> rows;
    std::filesystem::path csv_path, svg_path;
};
enum class SweepKind { Layer, Dim };
SweepResult cmd_sweep(SweepKind kind, const std::filesystem::path& base_checkpoint,
                      const std::filesystem::path& kb_path, EditConfig config,
                      const std::vector<std::size_t>& dims, const std::filesystem::path& out_dir);

struct DemoResult {
    std::filesystem::path dir;
    GenCorpusResult corpus;
    TrainBaseResult train;
    LocateResult locate;
    EditResult edit;
    EvalResult eval;
};
struct DemoOverrides {
    std::optional<CorpusSpec> corpus_spec;
    std::optional<ModelConfig> model;
    std::optional<TrainConfig> train;
    std::optional<EditConfig> edit;
};

// Demo presets. Pre-training runs two epochs; the edit keeps the stock
// objective but rescales alpha and the stamp learning rate to the desk
// regime, where the skewed corpus saturates the pair probabilities and the
// stock alpha would veto any equalization.
TrainConfig demo_train_preset();
EditConfig demo_edit_preset();

// gen-corpus -> train-base -> locate -> edit -> eval with shipped defaults.
DemoResult cmd_demo(const std::filesystem::path& out_dir, std::uint64_t seed,
                    const DemoOverrides& overrides = {});

} // namespace fast
