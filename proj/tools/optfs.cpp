#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "optfs/data.hpp"
#include "optfs/fsio.hpp"
#include "optfs/gating.hpp"
#include "optfs/kernels.hpp"
#include "optfs/metrics.hpp"
#include "optfs/models.hpp"
#include "optfs/runconfig.hpp"
#include "optfs/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace optfs;

namespace {

constexpr const char* kVersion = "0.1.0";

struct FlagOverrides {
    std::string config_path;
    std::string model;
    double gamma = -1.0;
    double lambda = -1.0;
    int epochs = -1;
    int rewind_epoch = -1;
    int batch_size = -1;
    int embed_dim = -1;
    std::string mlp_dims;
    long long seed = -1;
    std::string retrain_init;
};

void add_override_flags(CLI::App* cmd, FlagOverrides& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--model", f.model, "backbone: fm|deepfm|dcn|ipnn");
    cmd->add_option("--gamma", f.gamma, "final temperature (> 1)");
    cmd->add_option("--lambda", f.lambda, "L1 penalty weight on the gate")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--epochs", f.epochs, "search epochs T")->check(CLI::PositiveNumber);
    cmd->add_option("--rewind-epoch", f.rewind_epoch, "snapshot epoch T_c (1..T-1)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", f.batch_size, "mini-batch size")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--embed-dim", f.embed_dim, "embedding dimension D")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--mlp-dims", f.mlp_dims, "comma-separated MLP hidden sizes, e.g. 64,32,16");
    cmd->add_option("--seed", f.seed, "run seed")->check(CLI::NonNegativeNumber);
    cmd->add_option("--retrain-init", f.retrain_init, "retrain initialization: co|wo|ri|lth");
}

std::vector<int> parse_dims(const std::string& s) {
    std::vector<int> dims;
    size_t start = 0;
    while (start <= s.size()) {
        const size_t comma = s.find(',', start);
        const std::string tok =
            comma == std::string::npos ? s.substr(start) : s.substr(start, comma - start);
        if (!tok.empty()) {
            const int v = std::atoi(tok.c_str());
            if (v < 1) throw ConfigError("--mlp-dims: sizes must be positive integers");
            dims.push_back(v);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (dims.empty()) throw ConfigError("--mlp-dims: no sizes given");
    return dims;
}

RunConfig resolve_config(const FlagOverrides& f) {
    RunConfig cfg;
    if (!f.config_path.empty()) cfg = RunConfig::load(f.config_path);
    if (!f.model.empty()) cfg.model.backbone = backbone_from_string(f.model);
    if (f.gamma > 0.0) cfg.train.gamma = f.gamma;
    if (f.lambda >= 0.0) cfg.train.lambda = f.lambda;
    if (f.epochs > 0) cfg.train.total_epochs = f.epochs;
    if (f.rewind_epoch > 0) cfg.train.rewind_epoch = f.rewind_epoch;
    if (f.batch_size > 0) cfg.train.batch_size = f.batch_size;
    if (f.embed_dim > 0) cfg.model.embed_dim = f.embed_dim;
    if (!f.mlp_dims.empty()) cfg.model.mlp_dims = parse_dims(f.mlp_dims);
    if (f.seed >= 0) cfg.train.seed = static_cast<uint64_t>(f.seed);
    if (!f.retrain_init.empty()) {
        retrain_init_from_string(f.retrain_init);
        cfg.retrain_init = f.retrain_init;
    }
    cfg.model.seed = cfg.train.seed;
    return cfg;
}

uint64_t file_hash(const std::string& path) { return fnv1a64(read_file(path)); }

// Written before any work starts; the id is deterministic (command + resolved
// config + input hashes, no timestamps) and every run-dir output carries it.
uint64_t write_manifest(const std::string& out_dir, const std::string& command,
                        const std::string& resolved_config_json,
                        const std::vector<std::string>& input_paths,
                        const std::vector<std::string>& output_names) {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["config"] = json::parse(resolved_config_json);
    json inputs = json::object();
    std::string id_src = command + "|" + resolved_config_json;
    for (const auto& p : input_paths) {
        const std::string h = hash_to_hex(file_hash(p));
        inputs[p] = h;
        id_src += "|" + p + ":" + h;
    }
    const uint64_t id = fnv1a64(id_src);
    j["inputs"] = inputs;
    j["outputs"] = output_names;
    j["manifest_id"] = hash_to_hex(id);
    // wall-clock stamp; everything content-hashed lives in the other outputs
    j["timestamp"] = static_cast<int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    // retrain may share the search run directory; keep both manifests
    const std::string name = command == "retrain" ? "retrain_manifest.json" : "manifest.json";
    write_file(out_dir + "/" + name, j.dump(2) + "\n");
    return id;
}

struct DataDir {
    FeatureVocabulary vocab;
    EncodedDataset train, valid, test;
};

DataDir load_data_dir(const std::string& dir, bool need_test = true) {
    DataDir d{FeatureVocabulary::load(dir + "/vocab.tsv"), EncodedDataset::load(dir + "/train.bin"),
              EncodedDataset::load(dir + "/valid.bin"), EncodedDataset()};
    if (need_test) d.test = EncodedDataset::load(dir + "/test.bin");
    for (const EncodedDataset* ds : {&d.train, &d.valid}) {
        if (ds->vocab_hash != d.vocab.content_hash())
            throw DataError("data dir " + dir + ": encoded split does not match vocab.tsv "
                            "(vocabulary hash mismatch)");
    }
    if (need_test && d.test.vocab_hash != d.vocab.content_hash())
        throw DataError("data dir " + dir + ": test split does not match vocab.tsv");
    return d;
}

int cmd_preprocess(const std::string& schema_path, const std::string& train_tsv,
                   const std::string& valid_tsv, const std::string& test_tsv,
                   const std::string& raw_tsv, uint64_t seed, const std::string& out_dir) {
    DatasetSchema schema = DatasetSchema::load(schema_path);
    std::vector<RawRow> train, valid, test;
    std::vector<std::string> inputs = {schema_path};
    if (!raw_tsv.empty()) {
        auto rows = parse_tsv(raw_tsv, schema);
        for (size_t i = 0; i < rows.size(); ++i) {
            switch (split_assign(seed, i)) {
                case 0: train.push_back(std::move(rows[i])); break;
                case 1: valid.push_back(std::move(rows[i])); break;
                default: test.push_back(std::move(rows[i])); break;
            }
        }
        inputs.push_back(raw_tsv);
    } else {
        if (train_tsv.empty() || valid_tsv.empty() || test_tsv.empty())
            throw ConfigError("preprocess: pass either --raw or all of --train/--valid/--test");
        train = parse_tsv(train_tsv, schema);
        valid = parse_tsv(valid_tsv, schema);
        test = parse_tsv(test_tsv, schema);
        inputs.insert(inputs.end(), {train_tsv, valid_tsv, test_tsv});
    }
    if (train.empty() || valid.empty() || test.empty())
        throw DataError("preprocess: a split came out empty");

    fs::create_directories(out_dir);
    json cfg = {{"schema", schema_path}, {"seed", seed}};
    write_manifest(out_dir, "preprocess", cfg.dump(), inputs,
                   {"vocab.tsv", "train.bin", "valid.bin", "test.bin", "schema.json"});

    FeatureVocabulary vocab = FeatureVocabulary::build(train, schema);
    vocab.save(out_dir + "/vocab.tsv");
    encode_rows(train, vocab).save(out_dir + "/train.bin");
    encode_rows(valid, vocab).save(out_dir + "/valid.bin");
    encode_rows(test, vocab).save(out_dir + "/test.bin");
    schema.save(out_dir + "/schema.json");

    std::vector<uint32_t> per_field(vocab.n(), 0);
    for (uint32_t i = 0; i < vocab.m(); ++i) ++per_field[vocab.field_of(i)];
    std::printf("vocabulary: m=%u features over n=%d fields (hash %s)\n", vocab.m(), vocab.n(),
                hash_to_hex(vocab.content_hash()).c_str());
    for (int f = 0; f < vocab.n(); ++f)
        std::printf("  field %d (%s): %u features incl. OOV\n", f,
                    vocab.field_names()[f].c_str(), per_field[f]);
    std::printf("rows: train=%zu valid=%zu test=%zu\n", train.size(), valid.size(), test.size());
    return 0;
}

int cmd_gen_synthetic(const std::string& spec_path, uint64_t seed, const std::string& out_dir) {
    SyntheticSpec spec = spec_path.empty() ? SyntheticSpec() : SyntheticSpec::load(spec_path);
    fs::create_directories(out_dir);
    json cfg = json::parse(spec.to_json());
    cfg["seed"] = seed;
    std::vector<std::string> inputs;
    if (!spec_path.empty()) inputs.push_back(spec_path);
    write_manifest(out_dir, "gen-synthetic", cfg.dump(), inputs,
                   {"train.tsv", "valid.tsv", "test.tsv", "schema.json", "truth.json"});

    SyntheticData data = generate_synthetic(spec, seed);
    write_tsv(data.train, out_dir + "/train.tsv");
    write_tsv(data.valid, out_dir + "/valid.tsv");
    write_tsv(data.test, out_dir + "/test.tsv");
    data.schema.save(out_dir + "/schema.json");
    write_file(out_dir + "/truth.json", data.truth_json() + "\n");
    write_file(out_dir + "/synthetic_spec.json", spec.to_json() + "\n");
    std::printf("synthetic: %d fields x %d features, %zu informative, rows %d/%d/%d\n",
                spec.n_fields, spec.features_per_field, data.informative.size(), spec.rows_train,
                spec.rows_valid, spec.rows_test);
    return 0;
}

int cmd_search(const FlagOverrides& flags, const std::string& data_dir,
               const std::string& out_dir) {
    RunConfig cfg = resolve_config(flags);
    cfg.train.validate();
    DataDir data = load_data_dir(data_dir, false);

    fs::create_directories(out_dir);
    const uint64_t run_id = write_manifest(
        out_dir, "search", cfg.to_json(),
        {data_dir + "/vocab.tsv", data_dir + "/train.bin", data_dir + "/valid.bin"},
        {"config.json", "mask.json", "snapshot.bin", "history.csv", "search_model.bin"});
    cfg.manifest_id = hash_to_hex(run_id);
    cfg.save(out_dir + "/config.json");

    Model model(cfg.model, data.vocab.m(), data.vocab.n(), data.vocab.content_hash());
    GateState gates = GateState::make(data.vocab.m(), cfg.train.gamma, cfg.train.total_epochs,
                                      cfg.train.lambda);

    std::printf("search: %s, m=%u, D=%d, T=%d, T_c=%d, gamma=%g, lambda=%g, seed=%llu\n",
                backbone_to_string(cfg.model.backbone).c_str(), data.vocab.m(),
                cfg.model.embed_dim, cfg.train.total_epochs, cfg.train.rewind_epoch,
                cfg.train.gamma, cfg.train.lambda,
                static_cast<unsigned long long>(cfg.train.seed));

    SearchResult result = search(data.train, data.valid, model, gates, cfg.train,
                                 [&](int done, Model&, GateState&, double tau) {
                                     std::printf("  epoch %d/%d done (tau=%.4g)\n", done,
                                                 cfg.train.total_epochs, tau);
                                     std::fflush(stdout);
                                 });
    for (const auto& e : result.history)
        std::printf("epoch %d: loss=%.6f (ce=%.6f l1=%.6g) valid_auc=%.6f soft_ratio=%.4f\n",
                    e.epoch, e.train_loss, e.ce_loss, e.l1_loss, e.valid_auc, e.soft_ratio);
    std::printf("mask: ratio=%.6f (%zu features kept)\n", result.mask.ratio,
                static_cast<size_t>(result.mask.ratio * data.vocab.m() + 0.5));

    result.mask.manifest_id = cfg.manifest_id;
    result.mask.save(out_dir + "/mask.json");
    result.snapshot.run_id = run_id;
    result.snapshot.save(out_dir + "/snapshot.bin");
    write_file(out_dir + "/history.csv", history_csv(result.history));
    model.save(out_dir + "/search_model.bin", run_id);
    return 0;
}

int cmd_retrain(const FlagOverrides& flags, const std::string& run_dir,
                const std::string& data_dir, const std::string& mask_path,
                const std::string& out_dir_opt) {
    FlagOverrides f = flags;
    if (f.config_path.empty()) f.config_path = run_dir + "/config.json";
    RunConfig cfg = resolve_config(f);
    cfg.train.validate();
    const std::string out_dir = out_dir_opt.empty() ? run_dir : out_dir_opt;
    fs::create_directories(out_dir);

    DataDir data = load_data_dir(data_dir);
    const std::string mask_file = mask_path.empty() ? run_dir + "/mask.json" : mask_path;
    const uint64_t run_id = write_manifest(
        out_dir, "retrain", cfg.to_json(),
        {data_dir + "/vocab.tsv", data_dir + "/train.bin", data_dir + "/valid.bin",
         data_dir + "/test.bin", mask_file},
        {"final_model.bin", "final_model.json", "metrics.json"});
    BinaryGate mask = BinaryGate::load(mask_file);
    const RetrainInit init = retrain_init_from_string(cfg.retrain_init);

    Model model = init == RetrainInit::WithoutRetrain
                      ? Model::load(run_dir + "/search_model.bin")
                      : Model(cfg.model, data.vocab.m(), data.vocab.n(),
                              data.vocab.content_hash());
    TrainSnapshot snapshot;
    const TrainSnapshot* snap_ptr = nullptr;
    if (init == RetrainInit::Customized) {
        snapshot = TrainSnapshot::load(run_dir + "/snapshot.bin");
        snap_ptr = &snapshot;
    }

    std::printf("retrain: %s init=%s mask_ratio=%.4f\n",
                backbone_to_string(cfg.model.backbone).c_str(), cfg.retrain_init.c_str(),
                mask.ratio);
    RetrainResult result = retrain(data.train, data.valid, data.test, model, mask, snap_ptr,
                                   cfg.train, init);
    std::printf("retrain done: epochs=%d best_epoch=%d best_valid_auc=%.6f\n", result.epochs_run,
                result.best_epoch, result.best_valid_auc);
    std::printf("test: auc=%.6f logloss=%.6f ratio=%.6f\n", result.test_report.auc,
                result.test_report.logloss, result.test_report.ratio);

    model.save(out_dir + "/final_model.bin", run_id);
    json sidecar = json::parse(model.sidecar_json());
    sidecar["manifest_id"] = hash_to_hex(run_id);
    write_file(out_dir + "/final_model.json", sidecar.dump(2) + "\n");
    result.test_report.manifest_id = hash_to_hex(run_id);
    write_file(out_dir + "/metrics.json", result.test_report.to_json() + "\n");
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir,
             const std::string& split, const std::string& mask_path, const std::string& out) {
    Model model = Model::load(model_path);
    DataDir data = load_data_dir(data_dir);
    const EncodedDataset* ds = nullptr;
    if (split == "train")
        ds = &data.train;
    else if (split == "valid")
        ds = &data.valid;
    else if (split == "test")
        ds = &data.test;
    else
        throw ConfigError("eval: --split must be train|valid|test");
    if (model.vocab_hash() != data.vocab.content_hash())
        throw DataError("eval: model was trained on a different vocabulary");

    BinaryGate mask = mask_path.empty() ? BinaryGate::all_ones(model.m(), model.vocab_hash())
                                        : BinaryGate::load(mask_path);
    if (mask.vocab_hash != model.vocab_hash())
        throw DataError("eval: mask vocabulary hash does not match the model");
    Tensor gate = mask.as_tensor();
    EvalReport report = evaluate(model, *ds, gate, mask.ratio);
    std::printf("%s\n", report.to_json().c_str());
    if (!out.empty()) write_file(out, report.to_json() + "\n");
    return 0;
}

int cmd_report_mi(const std::string& data_dir, const std::string& mask_path,
                  const std::string& out) {
    FeatureVocabulary vocab = FeatureVocabulary::load(data_dir + "/vocab.tsv");
    EncodedDataset train = EncodedDataset::load(data_dir + "/train.bin");
    if (train.vocab_hash != vocab.content_hash())
        throw DataError("report-mi: train.bin does not match vocab.tsv");
    BinaryGate mask = mask_path.empty()
                          ? BinaryGate::all_ones(vocab.m(), vocab.content_hash())
                          : BinaryGate::load(mask_path);
    if (mask.vocab_hash != vocab.content_hash())
        throw DataError("report-mi: mask vocabulary hash does not match the data");

    std::vector<uint32_t> field_total(vocab.n(), 0), field_kept(vocab.n(), 0);
    for (uint32_t i = 0; i < vocab.m(); ++i) {
        ++field_total[vocab.field_of(i)];
        field_kept[vocab.field_of(i)] += mask.bits[i];
    }

    std::string csv = "field_id,mi,kept_ratio\n";
    std::vector<uint32_t> column(train.size());
    for (int f = 0; f < vocab.n(); ++f) {
        for (size_t r = 0; r < train.size(); ++r) column[r] = train.row(r)[f];
        const double mi = mutual_information(column, train.labels);
        char line[128];
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", f, mi,
                      static_cast<double>(field_kept[f]) / field_total[f]);
        csv += line;
    }
    if (out.empty())
        std::printf("%s", csv.c_str());
    else
        write_file(out, csv);
    return 0;
}

// cartesian product over the grid file's value lists; each combo runs
// "search" then "retrain" in its own subprocess
int cmd_grid(const std::string& base_config, const std::string& grid_path,
             const std::string& data_dir, const std::string& out_dir, int parallel) {
    if (parallel < 1) throw ConfigError("grid: --parallel must be >= 1");
    json grid;
    try {
        grid = json::parse(read_file(grid_path));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("grid: invalid JSON: ") + e.what());
    }
    std::vector<std::pair<std::string, std::vector<json>>> axes;
    for (auto it = grid.begin(); it != grid.end(); ++it) {
        if (!it.value().is_array() || it.value().empty())
            throw ConfigError("grid: key '" + it.key() + "' must map to a non-empty array");
        axes.emplace_back(it.key(), std::vector<json>(it.value().begin(), it.value().end()));
    }
    size_t total = 1;
    for (auto& [k, vals] : axes) total *= vals.size();

    const std::string self = fs::read_symlink("/proc/self/exe").string();
    fs::create_directories(out_dir);

    std::vector<std::string> run_dirs(total);
    std::vector<std::string> commands(total);
    for (size_t combo = 0; combo < total; ++combo) {
        size_t rem = combo;
        std::string run_dir = out_dir + "/run" + std::to_string(combo);
        std::string flags;
        for (auto& [key, vals] : axes) {
            const json& v = vals[rem % vals.size()];
            rem /= vals.size();
            flags += " --" + key + " " + (v.is_string() ? v.get<std::string>() : v.dump());
        }
        std::string cmd = "\"" + self + "\" search" + flags + " --data-dir \"" + data_dir +
                          "\" --out-dir \"" + run_dir + "\"";
        if (!base_config.empty()) cmd += " --config \"" + base_config + "\"";
        cmd += " > \"" + run_dir + ".search.log\" 2>&1";
        cmd += " && \"" + self + "\" retrain --run-dir \"" + run_dir + "\" --data-dir \"" +
               data_dir + "\" > \"" + run_dir + ".retrain.log\" 2>&1";
        commands[combo] = cmd;
        run_dirs[combo] = run_dir;
        fs::create_directories(run_dir);
    }

    std::atomic<size_t> next{0};
    std::atomic<int> failures{0};
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= total) return;
            const int rc = std::system(commands[i].c_str());
            if (rc != 0) ++failures;
            std::printf("grid: run%zu finished (rc=%d)\n", i, rc);
            std::fflush(stdout);
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::min<int>(parallel, static_cast<int>(total));
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::string summary = "run,auc,logloss,ratio\n";
    for (size_t i = 0; i < total; ++i) {
        const std::string metrics_path = run_dirs[i] + "/metrics.json";
        if (!file_exists(metrics_path)) {
            summary += "run" + std::to_string(i) + ",,,\n";
            continue;
        }
        json m = json::parse(read_file(metrics_path));
        char line[160];
        std::snprintf(line, sizeof(line), "run%zu,%.6f,%.6f,%.6f\n", i,
                      m["auc"].get<double>(), m["logloss"].get<double>(),
                      m["ratio"].get<double>());
        summary += line;
    }
    write_file(out_dir + "/grid_summary.csv", summary);
    std::printf("grid: %zu runs, %d failures; summary at %s/grid_summary.csv\n", total,
                failures.load(), out_dir.c_str());
    return failures.load() == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"optfs: feature-set optimization for CTR models"};
    app.require_subcommand(1);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "build vocabulary and encode TSV splits");
    std::string schema_path, train_tsv, valid_tsv, test_tsv, raw_tsv, out_dir, data_dir;
    long long seed_ll = 1;
    pre->add_option("--schema", schema_path, "dataset schema JSON")->required();
    pre->add_option("--train", train_tsv, "training TSV");
    pre->add_option("--valid", valid_tsv, "validation TSV");
    pre->add_option("--test", test_tsv, "test TSV");
    pre->add_option("--raw", raw_tsv, "single TSV to split 8:1:1 by row hash");
    pre->add_option("--seed", seed_ll, "split seed");
    pre->add_option("--out-dir", out_dir, "output directory")->required();

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "generate a planted-feature dataset");
    std::string spec_path;
    gen->add_option("--spec", spec_path, "synthetic spec JSON (defaults when omitted)");
    gen->add_option("--seed", seed_ll, "generator seed");
    gen->add_option("--out-dir", out_dir, "output directory")->required();

    // search
    auto* sea = app.add_subcommand("search", "searching stage: learn gates, write mask/snapshot");
    FlagOverrides sflags;
    add_override_flags(sea, sflags);
    sea->add_option("--data-dir", data_dir, "encoded data directory")->required();
    sea->add_option("--out-dir", out_dir, "run directory")->required();

    // retrain
    auto* ret = app.add_subcommand("retrain", "retraining stage from a run directory");
    FlagOverrides rflags;
    std::string run_dir, mask_path, model_path, split = "test", out_file;
    add_override_flags(ret, rflags);
    ret->add_option("--run-dir", run_dir, "search run directory")->required();
    ret->add_option("--data-dir", data_dir, "encoded data directory")->required();
    ret->add_option("--mask", mask_path, "external mask.json (e.g. from another backbone)");
    ret->add_option("--out-dir", out_dir, "output directory (defaults to run dir)");

    // eval
    auto* eva = app.add_subcommand("eval", "evaluate a model checkpoint on a split");
    eva->add_option("--model", model_path, "model checkpoint")->required();
    eva->add_option("--data-dir", data_dir, "encoded data directory")->required();
    eva->add_option("--split", split, "train|valid|test");
    eva->add_option("--mask", mask_path, "gate mask to apply");
    eva->add_option("--out", out_file, "also write metrics.json here");

    // report-mi
    auto* mi = app.add_subcommand("report-mi", "per-field mutual information report");
    mi->add_option("--data-dir", data_dir, "encoded data directory")->required();
    mi->add_option("--mask", mask_path, "mask for per-field kept ratios");
    mi->add_option("--out", out_file, "CSV output path (stdout when omitted)");

    // grid
    auto* gri = app.add_subcommand("grid", "fan out search+retrain over a config grid");
    std::string grid_path, base_config;
    int parallel = 1;
    gri->add_option("--config", base_config, "base config JSON");
    gri->add_option("--grid", grid_path, "grid JSON: flag name -> list of values")->required();
    gri->add_option("--data-dir", data_dir, "encoded data directory")->required();
    gri->add_option("--out-dir", out_dir, "grid output directory")->required();
    gri->add_option("--parallel", parallel, "max concurrent runs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (pre->parsed())
            return cmd_preprocess(schema_path, train_tsv, valid_tsv, test_tsv, raw_tsv,
                                  static_cast<uint64_t>(seed_ll), out_dir);
        if (gen->parsed())
            return cmd_gen_synthetic(spec_path, static_cast<uint64_t>(seed_ll), out_dir);
        if (sea->parsed()) return cmd_search(sflags, data_dir, out_dir);
        if (ret->parsed()) return cmd_retrain(rflags, run_dir, data_dir, mask_path, out_dir);
        if (eva->parsed()) return cmd_eval(model_path, data_dir, split, mask_path, out_file);
        if (mi->parsed()) return cmd_report_mi(data_dir, mask_path, out_file);
        if (gri->parsed()) return cmd_grid(base_config, grid_path, data_dir, out_dir, parallel);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
