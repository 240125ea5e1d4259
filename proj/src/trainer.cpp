#include "optfs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "optfs/fsio.hpp"
#include "optfs/kernels.hpp"

namespace optfs {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("config: learning_rate must be > 0");
    if (l2_reg < 0.0) throw ConfigError("config: l2_reg must be >= 0");
    if (lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
    if (total_epochs < 2) throw ConfigError("config: total_epochs must be >= 2");
    if (rewind_epoch < 1 || rewind_epoch >= total_epochs)
        throw ConfigError("config: rewind_epoch must satisfy 1 <= T_c <= T-1, got T_c=" +
                          std::to_string(rewind_epoch) + ", T=" + std::to_string(total_epochs));
    if (gamma <= 1.0) throw ConfigError("config: gamma must be > 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (patience < 1) throw ConfigError("config: patience must be >= 1");
    if (retrain_epochs < 1) throw ConfigError("config: retrain_epochs must be >= 1");
}

Adam::Adam(size_t n_params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n_params), v_(n_params) {}

void Adam::step(std::vector<Tensor>& params, double lr) {
    if (params.size() != m_.size())
        throw ContractError("adam: parameter count changed between steps");
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& t = params[p];
        if (m_[p].empty()) {
            m_[p].assign(t.size(), 0.0);
            v_[p].assign(t.size(), 0.0);
        }
        if (m_[p].size() != t.size())
            throw ContractError("adam: parameter shape changed between steps");
        double* w = t.data();
        const double* g = t.grad();
        double* m = m_[p].data();
        double* v = v_[p].data();
        for (size_t i = 0; i < t.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::restore(int64_t step, std::vector<std::vector<double>> m1,
                   std::vector<std::vector<double>> m2) {
    if (m1.size() != m_.size() || m2.size() != v_.size())
        throw ContractError("adam restore: slot count mismatch");
    step_ = step;
    m_ = std::move(m1);
    v_ = std::move(m2);
}

namespace {
constexpr char kSnapshotMagic[4] = {'O', 'F', 'S', 'S'};
constexpr uint32_t kSnapshotVersion = 1;

void put_vecs(std::string& buf, const std::vector<std::vector<double>>& vv) {
    put_le<uint32_t>(buf, static_cast<uint32_t>(vv.size()));
    for (const auto& v : vv) {
        put_le<uint64_t>(buf, v.size());
        for (double x : v) put_f64(buf, x);
    }
}

std::vector<std::vector<double>> get_vecs(const std::string& buf, size_t& off) {
    std::vector<std::vector<double>> vv(get_le<uint32_t>(buf, off));
    for (auto& v : vv) {
        v.resize(get_le<uint64_t>(buf, off));
        for (auto& x : v) x = get_f64(buf, off);
    }
    return vv;
}

}  // namespace

void TrainSnapshot::save(const std::string& path) const {
    std::string buf;
    buf.append(kSnapshotMagic, 4);
    put_le<uint32_t>(buf, kSnapshotVersion);
    put_le<uint64_t>(buf, arch_hash);
    put_le<uint64_t>(buf, config_hash);
    put_le<uint64_t>(buf, run_id);
    put_le<uint32_t>(buf, static_cast<uint32_t>(epoch));
    put_le<uint64_t>(buf, static_cast<uint64_t>(adam_step));
    put_vecs(buf, param_values);
    put_vecs(buf, adam_m);
    put_vecs(buf, adam_v);
    put_vecs(buf, bn_running_mean);
    put_vecs(buf, bn_running_var);
    write_file(path, buf);
}

TrainSnapshot TrainSnapshot::load(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 4 || std::memcmp(buf.data(), kSnapshotMagic, 4) != 0)
        throw DataError("not a training snapshot: " + path);
    size_t off = 4;
    const uint32_t version = get_le<uint32_t>(buf, off);
    if (version != kSnapshotVersion)
        throw DataError("snapshot version " + std::to_string(version) + " unsupported");
    TrainSnapshot s;
    s.arch_hash = get_le<uint64_t>(buf, off);
    s.config_hash = get_le<uint64_t>(buf, off);
    s.run_id = get_le<uint64_t>(buf, off);
    s.epoch = static_cast<int>(get_le<uint32_t>(buf, off));
    s.adam_step = static_cast<int64_t>(get_le<uint64_t>(buf, off));
    s.param_values = get_vecs(buf, off);
    s.adam_m = get_vecs(buf, off);
    s.adam_v = get_vecs(buf, off);
    s.bn_running_mean = get_vecs(buf, off);
    s.bn_running_var = get_vecs(buf, off);
    return s;
}

TrainSnapshot take_snapshot(Model& model, const Adam& adam, int epoch, uint64_t cfg_hash) {
    TrainSnapshot s;
    s.arch_hash = model.arch_hash();
    s.config_hash = cfg_hash;
    s.epoch = epoch;
    s.adam_step = adam.step_count();
    for (auto& t : model.parameters()) s.param_values.push_back(t.values());
    // search optimizes [model params..., g_c]; only the model slots are kept
    const size_t n_model = s.param_values.size();
    for (size_t p = 0; p < n_model; ++p) {
        s.adam_m.push_back(p < adam.moment1().size() ? adam.moment1()[p] : std::vector<double>{});
        s.adam_v.push_back(p < adam.moment2().size() ? adam.moment2()[p] : std::vector<double>{});
    }
    for (auto* bn : model.batch_norm_states()) {
        s.bn_running_mean.push_back(bn->running_mean);
        s.bn_running_var.push_back(bn->running_var);
    }
    return s;
}

void restore_snapshot(const TrainSnapshot& snap, Model& model, Adam* adam,
                      bool restore_optimizer) {
    if (snap.arch_hash != model.arch_hash())
        throw DataError("snapshot refers to a different model architecture or vocabulary");
    auto params = model.parameters();
    if (params.size() != snap.param_values.size())
        throw DataError("snapshot parameter count mismatch");
    for (size_t p = 0; p < params.size(); ++p) {
        if (params[p].size() != snap.param_values[p].size())
            throw DataError("snapshot parameter shape mismatch");
        params[p].values() = snap.param_values[p];
    }
    auto bns = model.batch_norm_states();
    if (bns.size() != snap.bn_running_mean.size())
        throw DataError("snapshot batch-norm state mismatch");
    for (size_t i = 0; i < bns.size(); ++i) {
        bns[i]->running_mean = snap.bn_running_mean[i];
        bns[i]->running_var = snap.bn_running_var[i];
    }
    if (adam && restore_optimizer) {
        adam->restore(snap.adam_step, snap.adam_m, snap.adam_v);
    }
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,train_loss,ce_loss,l1_loss,valid_auc,soft_ratio\n";
    char line[256];
    for (const auto& e : history) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                      e.train_loss, e.ce_loss, e.l1_loss, e.valid_auc, e.soft_ratio);
        out += line;
    }
    return out;
}

uint64_t config_hash(const TrainConfig& config, const Model& model) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%.17g|%.17g|%.17g|%d|%d|%.17g|%d|%llu|%.17g|%.17g|%.17g",
                  config.learning_rate, config.l2_reg, config.lambda, config.total_epochs,
                  config.rewind_epoch, config.gamma, config.batch_size,
                  static_cast<unsigned long long>(config.seed), config.beta1, config.beta2,
                  config.adam_eps);
    return fnv1a64(std::string(buf) + "|" + std::to_string(model.arch_hash()));
}

namespace {

// grad += l2 * theta for every model parameter; g_c is never in this list
void apply_l2(std::vector<Tensor>& model_params, double l2) {
    if (l2 == 0.0) return;
    for (auto& t : model_params) kernels::axpy(l2, t.data(), t.grad_values().data(), t.size());
}

double dataset_auc(Model& model, const EncodedDataset& data, const Tensor& gate) {
    auto scores = model.predict_dataset(data, gate);
    return auc(scores, data.labels);
}

std::vector<uint32_t> shuffled_order(size_t n, Rng& rng) {
    std::vector<uint32_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = static_cast<uint32_t>(i);
    rng.shuffle(order);
    return order;
}

}  // namespace

SearchResult search(const EncodedDataset& train, const EncodedDataset& valid, Model& model,
                    GateState& gates, const TrainConfig& config, const EpochObserver& observer) {
    config.validate();
    if (gates.current_epoch != 0)
        throw ContractError("search: gate state is not fresh (t != 0)");
    if (static_cast<uint32_t>(gates.g_c.rows()) != model.m())
        throw ContractError("search: gate length does not match vocabulary");
    if (train.vocab_hash != model.vocab_hash())
        throw DataError("search: training data vocabulary hash does not match the model");
    gates.gamma = config.gamma;
    gates.total_epochs = config.total_epochs;
    gates.lambda = config.lambda;

    const uint64_t cfg_hash = config_hash(config, model);
    auto model_params = model.parameters();
    std::vector<Tensor> all_params = model_params;
    all_params.push_back(gates.g_c);
    Adam adam(all_params.size(), config.beta1, config.beta2, config.adam_eps);

    Rng shuffle_rng(config.seed ^ 0x5deece66dull);

    SearchResult result;
    TrainSnapshot snapshot;
    bool have_snapshot = false;

    for (int epoch = 0; epoch < config.total_epochs; ++epoch) {
        // t counts completed epochs: the first epoch runs at tau = 1
        gates.current_epoch = epoch;
        const double tau = gates.tau();
        auto order = shuffled_order(train.size(), shuffle_rng);

        double ce_sum = 0.0;
        double l1_sum = 0.0;
        size_t seen = 0;
        for (size_t start = 0; start < train.size(); start += config.batch_size) {
            const size_t count = std::min<size_t>(config.batch_size, train.size() - start);
            Batch batch = make_batch(train, order, start, count);
            double batch_tau = tau;
            if (config.per_step_tau) {
                const double frac = static_cast<double>(start) / train.size();
                batch_tau = std::pow(config.gamma, (epoch + frac) / config.total_epochs);
            }
            for (auto& t : all_params) t.zero_grad();
            Tape tape;
            Tensor gate;
            Tensor total;
            double ce_val = 0.0, l1_val = 0.0;
            try {
                gate = effective_gate(tape, gates, batch_tau);
                Tensor logits = model.forward(tape, batch, gate, true);
                Tensor ce = tape.bce_with_logits(logits, batch.labels);
                Tensor l1 = l1_penalty(tape, gate, config.lambda);
                total = tape.add(ce, l1);
                ce_val = ce.scalar();
                l1_val = l1.scalar();
                tape.backward(total);
            } catch (const NumericError& e) {
                throw NumericError("search aborted at epoch " + std::to_string(epoch + 1) +
                                   ", batch " + std::to_string(start / config.batch_size + 1) +
                                   ": " + e.what());
            }
            apply_l2(model_params, config.l2_reg);
            adam.step(all_params, config.learning_rate);
            ce_sum += ce_val * static_cast<double>(count);
            l1_sum += l1_val * static_cast<double>(count);
            seen += count;
        }

        gates.current_epoch = epoch + 1;
        if (epoch + 1 == config.rewind_epoch) {
            snapshot = take_snapshot(model, adam, epoch + 1, cfg_hash);
            have_snapshot = true;
        }

        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.tau = tau;
        stats.ce_loss = ce_sum / static_cast<double>(seen);
        stats.l1_loss = l1_sum / static_cast<double>(seen);
        stats.train_loss = stats.ce_loss + stats.l1_loss;
        {
            Tape tape;
            Tensor gate = effective_gate(tape, gates, tau);
            stats.soft_ratio = kernels::reduce_sum(gate.data(), gate.size()) /
                               static_cast<double>(gate.size());
            stats.valid_auc = dataset_auc(model, valid, gate);
        }
        result.history.push_back(stats);
        if (observer) observer(epoch + 1, model, gates, tau);
    }

    if (!have_snapshot) throw ContractError("search: snapshot was never taken");
    result.snapshot = std::move(snapshot);
    result.mask = discretize(gates, model.vocab_hash());
    result.mask.search_config.seed = config.seed;
    return result;
}

RetrainInit retrain_init_from_string(const std::string& name) {
    if (name == "co" || name == "ci") return RetrainInit::Customized;
    if (name == "wo") return RetrainInit::WithoutRetrain;
    if (name == "ri") return RetrainInit::RandomInit;
    if (name == "lth") return RetrainInit::LotteryTicket;
    throw ConfigError("unknown retrain init '" + name + "' (expected co|wo|ri|lth)");
}

std::string retrain_init_to_string(RetrainInit mode) {
    switch (mode) {
        case RetrainInit::Customized: return "co";
        case RetrainInit::WithoutRetrain: return "wo";
        case RetrainInit::RandomInit: return "ri";
        case RetrainInit::LotteryTicket: return "lth";
    }
    throw ContractError("retrain_init_to_string: bad enum");
}

EvalReport evaluate(Model& model, const EncodedDataset& data, const Tensor& gate, double ratio) {
    EvalReport r;
    auto scores = model.predict_dataset(data, gate);
    r.auc = auc(scores, data.labels);
    r.logloss = logloss(scores, data.labels);
    r.ratio = ratio;
    r.n_samples = data.size();
    return r;
}

RetrainResult retrain(const EncodedDataset& train, const EncodedDataset& valid,
                      const EncodedDataset& test, Model& model, const BinaryGate& mask,
                      const TrainSnapshot* snapshot, const TrainConfig& config,
                      RetrainInit init) {
    config.validate();
    if (mask.bits.size() != model.m())
        throw DataError("retrain: mask length does not match vocabulary");
    if (mask.vocab_hash != model.vocab_hash())
        throw DataError("retrain: mask vocabulary hash does not match the model (refusing to "
                        "mix masks across vocabularies)");
    if (train.vocab_hash != model.vocab_hash())
        throw DataError("retrain: training data vocabulary hash does not match the model");

    Tensor gate = mask.as_tensor();
    RetrainResult result;

    if (init == RetrainInit::WithoutRetrain) {
        // keep the searched parameters as they are, only harden the gate
        result.test_report = evaluate(model, test, gate, mask.ratio);
        result.best_valid_auc = dataset_auc(model, valid, gate);
        return result;
    }

    auto model_params = model.parameters();
    Adam adam(model_params.size(), config.beta1, config.beta2, config.adam_eps);

    switch (init) {
        case RetrainInit::Customized: {
            if (!snapshot) throw ConfigError("retrain: customized init requires a snapshot");
            const uint64_t expect = config_hash(config, model);
            if (snapshot->config_hash != expect)
                throw DataError("retrain: snapshot was produced under a different search config "
                                "(refusing to rewind)");
            restore_snapshot(*snapshot, model, &adam, config.rewind_optimizer);
            break;
        }
        case RetrainInit::RandomInit: {
            ModelConfig mc = model.config();
            mc.seed = config.seed + 7919;  // any seed other than the search one
            Model fresh(mc, model.m(), model.n_fields(), model.vocab_hash());
            auto src = fresh.parameters();
            for (size_t p = 0; p < model_params.size(); ++p)
                model_params[p].values() = src[p].values();
            auto dst_bn = model.batch_norm_states();
            auto src_bn = fresh.batch_norm_states();
            for (size_t i = 0; i < dst_bn.size(); ++i) {
                dst_bn[i]->running_mean = src_bn[i]->running_mean;
                dst_bn[i]->running_var = src_bn[i]->running_var;
            }
            break;
        }
        case RetrainInit::LotteryTicket: {
            Model fresh(model.config(), model.m(), model.n_fields(), model.vocab_hash());
            auto src = fresh.parameters();
            for (size_t p = 0; p < model_params.size(); ++p)
                model_params[p].values() = src[p].values();
            auto dst_bn = model.batch_norm_states();
            auto src_bn = fresh.batch_norm_states();
            for (size_t i = 0; i < dst_bn.size(); ++i) {
                dst_bn[i]->running_mean = src_bn[i]->running_mean;
                dst_bn[i]->running_var = src_bn[i]->running_var;
            }
            break;
        }
        case RetrainInit::WithoutRetrain:
            break;  // unreachable
    }

    Rng shuffle_rng(config.seed ^ 0x2545f4914f6cdd1dull);

    // best-so-far params, refreshed whenever validation AUC improves
    std::vector<std::vector<double>> best_params;
    std::vector<std::vector<double>> best_bn_mean, best_bn_var;
    auto save_best = [&]() {
        best_params.clear();
        for (auto& t : model_params) best_params.push_back(t.values());
        best_bn_mean.clear();
        best_bn_var.clear();
        for (auto* bn : model.batch_norm_states()) {
            best_bn_mean.push_back(bn->running_mean);
            best_bn_var.push_back(bn->running_var);
        }
    };

    for (int epoch = 0; epoch < config.retrain_epochs; ++epoch) {
        auto order = shuffled_order(train.size(), shuffle_rng);
        for (size_t start = 0; start < train.size(); start += config.batch_size) {
            const size_t count = std::min<size_t>(config.batch_size, train.size() - start);
            Batch batch = make_batch(train, order, start, count);
            for (auto& t : model_params) t.zero_grad();
            Tape tape;
            try {
                Tensor logits = model.forward(tape, batch, gate, true);
                Tensor ce = tape.bce_with_logits(logits, batch.labels);
                tape.backward(ce);
            } catch (const NumericError& e) {
                throw NumericError("retrain aborted at epoch " + std::to_string(epoch + 1) +
                                   ", batch " + std::to_string(start / config.batch_size + 1) +
                                   ": " + e.what());
            }
            apply_l2(model_params, config.l2_reg);
            adam.step(model_params, config.learning_rate);
        }
        result.epochs_run = epoch + 1;
        const double vauc = dataset_auc(model, valid, gate);
        result.valid_auc_history.push_back(vauc);
        auto decision = early_stop(result.valid_auc_history, config.patience);
        if (decision.best_epoch == epoch + 1) save_best();
        if (decision.stop) break;
    }

    auto final_decision = early_stop(result.valid_auc_history, config.patience);
    result.best_epoch = final_decision.best_epoch;
    result.best_valid_auc = result.valid_auc_history.empty()
                                ? 0.0
                                : result.valid_auc_history[final_decision.best_epoch - 1];
    if (!best_params.empty()) {
        for (size_t p = 0; p < model_params.size(); ++p) model_params[p].values() = best_params[p];
        auto bns = model.batch_norm_states();
        for (size_t i = 0; i < bns.size(); ++i) {
            bns[i]->running_mean = best_bn_mean[i];
            bns[i]->running_var = best_bn_var[i];
        }
    }
    result.test_report = evaluate(model, test, gate, mask.ratio);
    return result;
}

EarlyStopDecision early_stop(const std::vector<double>& valid_auc_history, int patience) {
    if (valid_auc_history.empty())
        throw ContractError("early_stop: history must be non-empty");
    EarlyStopDecision d;
    double best = valid_auc_history[0];
    d.best_epoch = 1;
    int since_best = 0;
    for (size_t i = 1; i < valid_auc_history.size(); ++i) {
        if (valid_auc_history[i] > best) {
            best = valid_auc_history[i];
            d.best_epoch = static_cast<int>(i + 1);
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= patience) {
                d.stop = true;
                return d;
            }
        }
    }
    return d;
}

}  // namespace optfs
