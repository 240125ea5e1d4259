#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "optfs/gating.hpp"
#include "optfs/metrics.hpp"
#include "optfs/models.hpp"

namespace optfs {

struct TrainConfig {
    double learning_rate = 1e-3;
    double l2_reg = 0.0;       // applied to E and W, never to g_c
    double lambda = 1e-6;      // L1 penalty weight on the effective gate
    int total_epochs = 10;     // T
    int rewind_epoch = 1;      // T_c, snapshot taken when this many epochs completed
    double gamma = 1e3;
    int batch_size = 512;
    uint64_t seed = 1;
    int patience = 1;          // retraining early stop
    int retrain_epochs = 15;
    bool rewind_optimizer = true;  // restore Adam moments + BN stats from the snapshot
    bool per_step_tau = false;     // anneal within epochs by fractional epoch
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

// Standard Adam with bias correction. Slots are positional: the caller must
// pass the same parameter list (same order) on every step.
class Adam {
public:
    Adam(size_t n_params, double beta1, double beta2, double eps);

    void step(std::vector<Tensor>& params, double lr);

    int64_t step_count() const { return step_; }
    const std::vector<std::vector<double>>& moment1() const { return m_; }
    const std::vector<std::vector<double>>& moment2() const { return v_; }
    void restore(int64_t step, std::vector<std::vector<double>> m1,
                 std::vector<std::vector<double>> m2);

private:
    double beta1_, beta2_, eps_;
    int64_t step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Deep copy of {E, W, Adam moments, batch-norm running stats} captured when
// rewind_epoch search epochs have completed. Immutable once taken.
struct TrainSnapshot {
    uint64_t arch_hash = 0;
    uint64_t config_hash = 0;
    uint64_t run_id = 0;  // manifest id of the producing run, 0 outside a run dir
    int epoch = 0;
    int64_t adam_step = 0;
    std::vector<std::vector<double>> param_values;
    std::vector<std::vector<double>> adam_m;
    std::vector<std::vector<double>> adam_v;
    std::vector<std::vector<double>> bn_running_mean;
    std::vector<std::vector<double>> bn_running_var;

    void save(const std::string& path) const;
    static TrainSnapshot load(const std::string& path);
};

TrainSnapshot take_snapshot(Model& model, const Adam& adam, int epoch, uint64_t config_hash);
void restore_snapshot(const TrainSnapshot& snap, Model& model, Adam* adam, bool restore_optimizer);

struct EpochStats {
    int epoch = 0;      // 1-based epoch number in the history
    double tau = 0.0;
    double train_loss = 0.0;  // ce + l1
    double ce_loss = 0.0;
    double l1_loss = 0.0;
    double valid_auc = 0.0;
    double soft_ratio = 0.0;  // mean effective gate
};

std::string history_csv(const std::vector<EpochStats>& history);

struct SearchResult {
    BinaryGate mask;
    TrainSnapshot snapshot;
    std::vector<EpochStats> history;
};

// Observer called after each search epoch with the completed-epoch count, the
// model (post-update), the gate state, and the epoch's tau. Used by the CLI
// for logging and by tests to probe intermediate state.
using EpochObserver =
    std::function<void(int epochs_done, Model& model, GateState& gates, double tau)>;

// Searching stage: T epochs of joint Adam over {g_c, E, W} minimizing
// CE + lambda*||g||_1, temperature gamma^(t/T) with t = completed epochs (the
// first epoch runs at tau = 1, so its first forward pass equals the ungated
// backbone). Snapshot at rewind_epoch, discretization after the last epoch.
SearchResult search(const EncodedDataset& train, const EncodedDataset& valid, Model& model,
                    GateState& gates, const TrainConfig& config,
                    const EpochObserver& observer = nullptr);

enum class RetrainInit { Customized, WithoutRetrain, RandomInit, LotteryTicket };

RetrainInit retrain_init_from_string(const std::string& name);
std::string retrain_init_to_string(RetrainInit mode);

struct RetrainResult {
    EvalReport test_report;
    double best_valid_auc = 0.0;
    int best_epoch = 0;           // 0 = pre-training state was never improved on
    int epochs_run = 0;
    std::vector<double> valid_auc_history;
};

// Retraining stage with frozen binary gates. Initialization:
//   Customized     — parameters (and, by default, Adam moments and BN stats)
//                    from the snapshot
//   WithoutRetrain — evaluate the final searched model as-is, no training
//   RandomInit     — fresh Xavier init from a different seed
//   LotteryTicket  — fresh init from the original search seed
// Early stopping on validation AUC; the best-validation parameters are
// restored into `model` before the test evaluation.
RetrainResult retrain(const EncodedDataset& train, const EncodedDataset& valid,
                      const EncodedDataset& test, Model& model, const BinaryGate& mask,
                      const TrainSnapshot* snapshot, const TrainConfig& config,
                      RetrainInit init);

// Stop once AUC has failed to improve on the best for `patience` consecutive
// epochs. Best epoch is the argmax, earliest on ties (1-based).
struct EarlyStopDecision {
    bool stop = false;
    int best_epoch = 0;
};
EarlyStopDecision early_stop(const std::vector<double>& valid_auc_history, int patience);

EvalReport evaluate(Model& model, const EncodedDataset& data, const Tensor& gate, double ratio);

uint64_t config_hash(const TrainConfig& config, const Model& model);

}  // namespace optfs
