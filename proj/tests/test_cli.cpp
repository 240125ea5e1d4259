#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "optfs/data.hpp"
#include "optfs/fsio.hpp"
#include "optfs/gating.hpp"

using namespace optfs;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string bin() {
    const char* p = std::getenv("OPTFS_BIN");
    REQUIRE(p != nullptr);
    return p;
}

int run(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = "\"" + bin() + "\" " + args + " > " + log + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

struct Workspace {
    std::string root;
    Workspace() {
        root = (fs::temp_directory_path() / "optfs_cli_test").string();
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string path(const std::string& rel) const { return root + "/" + rel; }
};

void write_small_spec(const std::string& path) {
    write_file(path, R"({
  "n_fields": 3, "features_per_field": 10, "informative_per_field": 2,
  "main_effect": 2.0, "pair_effect": 1.0,
  "rows_train": 3000, "rows_valid": 400, "rows_test": 400
})");
}

void write_run_config(const std::string& path) {
    write_file(path, R"({
  "model": {"backbone": "fm", "embed_dim": 4},
  "search": {"learning_rate": 0.003, "lambda": 1e-5, "epochs": 4, "rewind_epoch": 2,
             "gamma": 200.0, "batch_size": 256, "seed": 7},
  "retrain": {"init": "co", "epochs": 3, "patience": 1}
})");
}

}  // namespace

TEST_CASE("full pipeline: gen-synthetic, preprocess, search, retrain, eval, report-mi") {
    Workspace ws;
    write_small_spec(ws.path("spec.json"));
    write_run_config(ws.path("config.json"));

    CHECK(run("gen-synthetic --spec " + ws.path("spec.json") + " --seed 3 --out-dir " +
              ws.path("raw")) == 0);
    CHECK(fs::exists(ws.path("raw/train.tsv")));
    CHECK(fs::exists(ws.path("raw/truth.json")));

    CHECK(run("preprocess --schema " + ws.path("raw/schema.json") + " --train " +
              ws.path("raw/train.tsv") + " --valid " + ws.path("raw/valid.tsv") + " --test " +
              ws.path("raw/test.tsv") + " --out-dir " + ws.path("enc"),
              ws.path("pre.log")) == 0);
    const std::string pre_log = read_file(ws.path("pre.log"));
    CHECK(pre_log.find("m=") != std::string::npos);
    CHECK(pre_log.find("n=3") != std::string::npos);

    CHECK(run("search --config " + ws.path("config.json") + " --data-dir " + ws.path("enc") +
              " --out-dir " + ws.path("run")) == 0);
    for (const char* f : {"config.json", "mask.json", "snapshot.bin", "history.csv",
                          "search_model.bin", "manifest.json"})
        CHECK(fs::exists(ws.path("run/") + f));

    const std::string history = read_file(ws.path("run/history.csv"));
    CHECK(history.rfind("epoch,train_loss,ce_loss,l1_loss,valid_auc,soft_ratio\n", 0) == 0);

    // run outputs reference the manifest that produced them
    json manifest = json::parse(read_file(ws.path("run/manifest.json")));
    const std::string run_id = manifest["manifest_id"].get<std::string>();
    json run_cfg = json::parse(read_file(ws.path("run/config.json")));
    CHECK(run_cfg["manifest_id"].get<std::string>() == run_id);
    CHECK(BinaryGate::load(ws.path("run/mask.json")).manifest_id == run_id);

    CHECK(run("retrain --run-dir " + ws.path("run") + " --data-dir " + ws.path("enc")) == 0);
    CHECK(fs::exists(ws.path("run/final_model.bin")));
    CHECK(fs::exists(ws.path("run/final_model.json")));
    json metrics = json::parse(read_file(ws.path("run/metrics.json")));
    CHECK(metrics["auc"].get<double>() > 0.5);
    CHECK(metrics["log_base"] == "e");
    CHECK(metrics["ratio"].get<double>() ==
          BinaryGate::load(ws.path("run/mask.json")).ratio);
    json retrain_manifest = json::parse(read_file(ws.path("run/retrain_manifest.json")));
    CHECK(metrics["manifest_id"].get<std::string>() ==
          retrain_manifest["manifest_id"].get<std::string>());

    CHECK(run("eval --model " + ws.path("run/final_model.bin") + " --data-dir " + ws.path("enc") +
              " --split test --mask " + ws.path("run/mask.json") + " --out " +
              ws.path("eval.json")) == 0);
    json eval_out = json::parse(read_file(ws.path("eval.json")));
    CHECK(eval_out["auc"].get<double>() == metrics["auc"].get<double>());

    CHECK(run("report-mi --data-dir " + ws.path("enc") + " --mask " + ws.path("run/mask.json") +
              " --out " + ws.path("mi.csv")) == 0);
    const std::string mi = read_file(ws.path("mi.csv"));
    CHECK(mi.rfind("field_id,mi,kept_ratio\n", 0) == 0);
    // one line per field plus header
    CHECK(std::count(mi.begin(), mi.end(), '\n') == 4);
}

TEST_CASE("search reruns byte-identically; gen-synthetic is seed-deterministic") {
    Workspace ws;
    write_small_spec(ws.path("spec.json"));
    write_run_config(ws.path("config.json"));
    REQUIRE(run("gen-synthetic --spec " + ws.path("spec.json") + " --seed 5 --out-dir " +
                ws.path("raw")) == 0);
    REQUIRE(run("gen-synthetic --spec " + ws.path("spec.json") + " --seed 5 --out-dir " +
                ws.path("raw2")) == 0);
    CHECK(read_file(ws.path("raw/train.tsv")) == read_file(ws.path("raw2/train.tsv")));
    CHECK(read_file(ws.path("raw/truth.json")) == read_file(ws.path("raw2/truth.json")));

    REQUIRE(run("preprocess --schema " + ws.path("raw/schema.json") + " --train " +
                ws.path("raw/train.tsv") + " --valid " + ws.path("raw/valid.tsv") + " --test " +
                ws.path("raw/test.tsv") + " --out-dir " + ws.path("enc")) == 0);

    REQUIRE(run("search --config " + ws.path("config.json") + " --data-dir " + ws.path("enc") +
                " --out-dir " + ws.path("runA")) == 0);
    REQUIRE(run("search --config " + ws.path("config.json") + " --data-dir " + ws.path("enc") +
                " --out-dir " + ws.path("runB")) == 0);
    CHECK(read_file(ws.path("runA/mask.json")) == read_file(ws.path("runB/mask.json")));
    CHECK(read_file(ws.path("runA/history.csv")) == read_file(ws.path("runB/history.csv")));
    CHECK(read_file(ws.path("runA/snapshot.bin")) == read_file(ws.path("runB/snapshot.bin")));
}

TEST_CASE("exit codes: 2 for config errors, 3 for data errors") {
    Workspace ws;
    write_small_spec(ws.path("spec.json"));
    REQUIRE(run("gen-synthetic --spec " + ws.path("spec.json") + " --seed 3 --out-dir " +
                ws.path("raw")) == 0);
    REQUIRE(run("preprocess --schema " + ws.path("raw/schema.json") + " --train " +
                ws.path("raw/train.tsv") + " --valid " + ws.path("raw/valid.tsv") + " --test " +
                ws.path("raw/test.tsv") + " --out-dir " + ws.path("enc")) == 0);

    // gamma <= 1 is a config error
    CHECK(run("search --gamma 0.5 --data-dir " + ws.path("enc") + " --out-dir " +
              ws.path("bad")) == 2);
    // unknown backbone
    CHECK(run("search --model opnn --data-dir " + ws.path("enc") + " --out-dir " +
              ws.path("bad")) == 2);
    // unknown flag is a usage (config) error
    CHECK(run("search --no-such-flag 1 --data-dir " + ws.path("enc") + " --out-dir " +
              ws.path("bad")) == 2);
    // missing data dir
    CHECK(run("search --data-dir " + ws.path("nowhere") + " --out-dir " + ws.path("bad")) == 3);
    // help is not an error
    CHECK(run("--help") == 0);

    // mask/vocab mismatch is refused with exit 3
    write_run_config(ws.path("config.json"));
    REQUIRE(run("search --config " + ws.path("config.json") + " --data-dir " + ws.path("enc") +
                " --out-dir " + ws.path("run")) == 0);
    BinaryGate mask = BinaryGate::load(ws.path("run/mask.json"));
    mask.vocab_hash ^= 0xdeadbeef;
    mask.save(ws.path("tampered_mask.json"));
    CHECK(run("retrain --run-dir " + ws.path("run") + " --data-dir " + ws.path("enc") +
              " --mask " + ws.path("tampered_mask.json")) == 3);
}

TEST_CASE("transferability: a mask searched on one backbone retrains another") {
    Workspace ws;
    write_small_spec(ws.path("spec.json"));
    write_run_config(ws.path("config.json"));
    REQUIRE(run("gen-synthetic --spec " + ws.path("spec.json") + " --seed 11 --out-dir " +
                ws.path("raw")) == 0);
    REQUIRE(run("preprocess --schema " + ws.path("raw/schema.json") + " --train " +
                ws.path("raw/train.tsv") + " --valid " + ws.path("raw/valid.tsv") + " --test " +
                ws.path("raw/test.tsv") + " --out-dir " + ws.path("enc")) == 0);

    // source: fm search; target: deepfm search + retrain under the fm mask
    REQUIRE(run("search --config " + ws.path("config.json") + " --data-dir " + ws.path("enc") +
                " --out-dir " + ws.path("src")) == 0);
    REQUIRE(run("search --config " + ws.path("config.json") + " --model deepfm --mlp-dims 8,4" +
                " --data-dir " + ws.path("enc") + " --out-dir " + ws.path("tgt")) == 0);
    CHECK(run("retrain --run-dir " + ws.path("tgt") + " --data-dir " + ws.path("enc") +
              " --mask " + ws.path("src/mask.json") + " --out-dir " + ws.path("tgt_xfer"),
              ws.path("xfer.log")) == 0);
    json metrics = json::parse(read_file(ws.path("tgt_xfer/metrics.json")));
    CHECK(metrics["ratio"].get<double>() ==
          BinaryGate::load(ws.path("src/mask.json")).ratio);
}

TEST_CASE("retrain ablation arms run via --retrain-init") {
    Workspace ws;
    write_small_spec(ws.path("spec.json"));
    write_run_config(ws.path("config.json"));
    REQUIRE(run("gen-synthetic --spec " + ws.path("spec.json") + " --seed 13 --out-dir " +
                ws.path("raw")) == 0);
    REQUIRE(run("preprocess --schema " + ws.path("raw/schema.json") + " --train " +
                ws.path("raw/train.tsv") + " --valid " + ws.path("raw/valid.tsv") + " --test " +
                ws.path("raw/test.tsv") + " --out-dir " + ws.path("enc")) == 0);
    REQUIRE(run("search --config " + ws.path("config.json") + " --data-dir " + ws.path("enc") +
                " --out-dir " + ws.path("run")) == 0);
    for (const std::string arm : {"co", "wo", "ri", "lth"}) {
        CHECK(run("retrain --run-dir " + ws.path("run") + " --data-dir " + ws.path("enc") +
                  " --retrain-init " + arm + " --out-dir " + ws.path("out_" + arm)) == 0);
        CHECK(fs::exists(ws.path("out_" + arm + "/metrics.json")));
    }
}

TEST_CASE("grid fans out over lambda values and writes a summary") {
    Workspace ws;
    write_small_spec(ws.path("spec.json"));
    write_run_config(ws.path("config.json"));
    REQUIRE(run("gen-synthetic --spec " + ws.path("spec.json") + " --seed 17 --out-dir " +
                ws.path("raw")) == 0);
    REQUIRE(run("preprocess --schema " + ws.path("raw/schema.json") + " --train " +
                ws.path("raw/train.tsv") + " --valid " + ws.path("raw/valid.tsv") + " --test " +
                ws.path("raw/test.tsv") + " --out-dir " + ws.path("enc")) == 0);
    write_file(ws.path("grid.json"), R"({"lambda": [1e-5, 1e-6]})");
    CHECK(run("grid --config " + ws.path("config.json") + " --grid " + ws.path("grid.json") +
              " --data-dir " + ws.path("enc") + " --out-dir " + ws.path("grid") +
              " --parallel 2") == 0);
    const std::string summary = read_file(ws.path("grid/grid_summary.csv"));
    CHECK(summary.rfind("run,auc,logloss,ratio\n", 0) == 0);
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
    CHECK(fs::exists(ws.path("grid/run0/metrics.json")));
    CHECK(fs::exists(ws.path("grid/run1/metrics.json")));
}
