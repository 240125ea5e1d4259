#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optfs/autodiff.hpp"
#include "optfs/tensor.hpp"

namespace optfs {

// Continuous per-feature gates with an exponentially annealed temperature.
// The effective gate is sigmoid(g_c * tau) / sigmoid(g_c_init), so it starts
// at exactly 1 and hardens toward {0, 1/sigmoid(g_c_init)} as tau grows from
// 1 to gamma over the search epochs.
struct GateState {
    Tensor g_c;                      // m x 1, trainable
    std::vector<double> g_c_init;    // frozen initial values, never updated
    std::vector<double> init_denom;  // sigmoid(g_c_init), the constant denominator
    double gamma = 1e3;
    int total_epochs = 10;   // T
    int current_epoch = 0;   // t, counts completed epochs
    double lambda = 0.0;

    static GateState make(uint32_t m, double gamma, int total_epochs, double lambda,
                          double init_value = 0.01);
    // random g_c, used by tests; denominator still captured from the same values
    static GateState make_random(uint32_t m, double gamma, int total_epochs, double lambda,
                                 uint64_t seed);

    double tau() const;
};

// tau = gamma^(t/T); gamma must exceed 1, t in [0, T]
double temperature(int t, int total_epochs, double gamma);

// m x 1 tensor, differentiable w.r.t. g_c only; the denominator is constant
Tensor effective_gate(Tape& tape, GateState& state);
Tensor effective_gate(Tape& tape, GateState& state, double tau);

// lambda * sum(g); gradient reaches g_c through the gate transform
Tensor l1_penalty(Tape& tape, const Tensor& gate, double lambda);

struct BinaryGate {
    std::vector<uint8_t> bits;
    uint64_t vocab_hash = 0;
    double ratio = 0.0;
    std::string manifest_id;  // id of the run that produced the mask, when known

    struct SearchConfig {
        double gamma = 0.0;
        int total_epochs = 0;
        double lambda = 0.0;
        uint64_t seed = 0;
    } search_config;

    static BinaryGate all_ones(uint32_t m, uint64_t vocab_hash);

    // constant (non-trainable) m x 1 gate tensor for retraining
    Tensor as_tensor() const;

    std::string to_json() const;  // bits run-length encoded
    static BinaryGate from_json(const std::string& text);
    void save(const std::string& path) const;
    static BinaryGate load(const std::string& path);
};

// unit step on g_c: bit = 0 where g_c <= 0, else 1
BinaryGate discretize(const GateState& state, uint64_t vocab_hash);

}  // namespace optfs
