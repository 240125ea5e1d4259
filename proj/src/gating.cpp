#include "optfs/gating.hpp"

#include <cmath>

#include <json.hpp>

#include "optfs/data.hpp"
#include "optfs/fsio.hpp"

namespace optfs {

using nlohmann::json;

GateState GateState::make(uint32_t m, double gamma, int total_epochs, double lambda,
                          double init_value) {
    if (gamma <= 1.0) throw ConfigError("gate schedule: gamma must be > 1");
    if (lambda < 0.0) throw ConfigError("gate schedule: lambda must be >= 0");
    if (total_epochs < 1) throw ConfigError("gate schedule: total_epochs must be >= 1");
    GateState s;
    s.g_c = Tensor::zeros(static_cast<int>(m), 1, true);
    for (uint32_t i = 0; i < m; ++i) s.g_c.data()[i] = init_value;
    s.g_c_init.assign(s.g_c.data(), s.g_c.data() + m);
    s.init_denom.resize(m);
    for (uint32_t i = 0; i < m; ++i) s.init_denom[i] = sigmoid_scalar(s.g_c_init[i]);
    s.gamma = gamma;
    s.total_epochs = total_epochs;
    s.lambda = lambda;
    return s;
}

GateState GateState::make_random(uint32_t m, double gamma, int total_epochs, double lambda,
                                 uint64_t seed) {
    GateState s = make(m, gamma, total_epochs, lambda);
    Rng rng(seed);
    for (uint32_t i = 0; i < m; ++i) s.g_c.data()[i] = rng.uniform(-1.0, 1.0);
    s.g_c_init.assign(s.g_c.data(), s.g_c.data() + m);
    for (uint32_t i = 0; i < m; ++i) s.init_denom[i] = sigmoid_scalar(s.g_c_init[i]);
    return s;
}

double GateState::tau() const { return temperature(current_epoch, total_epochs, gamma); }

double temperature(int t, int total_epochs, double gamma) {
    if (gamma <= 1.0) throw ConfigError("temperature: gamma must be > 1");
    if (t < 0 || t > total_epochs)
        throw ContractError("temperature: epoch " + std::to_string(t) + " outside [0, " +
                            std::to_string(total_epochs) + "]");
    if (t == 0) return 1.0;
    if (t == total_epochs) return gamma;
    return std::pow(gamma, static_cast<double>(t) / static_cast<double>(total_epochs));
}

Tensor effective_gate(Tape& tape, GateState& state) {
    return effective_gate(tape, state, state.tau());
}

Tensor effective_gate(Tape& tape, GateState& state, double tau) {
    const int m = state.g_c.rows();
    Tensor denom = Tensor::from(state.init_denom, m, 1, false);
    Tensor scaled = tape.mul_scalar(state.g_c, tau);
    Tensor num = tape.sigmoid(scaled);
    return tape.div_const(num, denom);
}

Tensor l1_penalty(Tape& tape, const Tensor& gate, double lambda) {
    if (lambda < 0.0) throw ConfigError("l1_penalty: lambda must be >= 0");
    return tape.mul_scalar(tape.sum(gate), lambda);
}

BinaryGate discretize(const GateState& state, uint64_t vocab_hash) {
    BinaryGate g;
    const int m = state.g_c.rows();
    g.bits.resize(m);
    size_t kept = 0;
    for (int i = 0; i < m; ++i) {
        g.bits[i] = state.g_c.data()[i] > 0.0 ? 1 : 0;
        kept += g.bits[i];
    }
    g.vocab_hash = vocab_hash;
    g.ratio = m == 0 ? 0.0 : static_cast<double>(kept) / m;
    g.search_config.gamma = state.gamma;
    g.search_config.total_epochs = state.total_epochs;
    g.search_config.lambda = state.lambda;
    return g;
}

BinaryGate BinaryGate::all_ones(uint32_t m, uint64_t vocab_hash) {
    BinaryGate g;
    g.bits.assign(m, 1);
    g.vocab_hash = vocab_hash;
    g.ratio = 1.0;
    return g;
}

Tensor BinaryGate::as_tensor() const {
    Tensor t = Tensor::zeros(static_cast<int>(bits.size()), 1, false);
    for (size_t i = 0; i < bits.size(); ++i) t.data()[i] = bits[i];
    return t;
}

std::string BinaryGate::to_json() const {
    // run-length encoding: first_bit, then run lengths alternating value
    json j;
    j["vocabulary_hash"] = hash_to_hex(vocab_hash);
    j["m"] = bits.size();
    j["ratio"] = ratio;
    json runs = json::array();
    int first_bit = bits.empty() ? 0 : bits[0];
    size_t i = 0;
    while (i < bits.size()) {
        size_t j2 = i;
        while (j2 + 1 < bits.size() && bits[j2 + 1] == bits[i]) ++j2;
        runs.push_back(j2 - i + 1);
        i = j2 + 1;
    }
    j["first_bit"] = first_bit;
    j["runs"] = runs;
    j["search_config"] = {{"gamma", search_config.gamma},
                          {"T", search_config.total_epochs},
                          {"lambda", search_config.lambda},
                          {"seed", search_config.seed}};
    if (!manifest_id.empty()) j["manifest_id"] = manifest_id;
    return j.dump(2);
}

BinaryGate BinaryGate::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("gate mask: invalid JSON: ") + e.what());
    }
    BinaryGate g;
    g.vocab_hash = hex_to_hash(j.at("vocabulary_hash").get<std::string>());
    const size_t m = j.at("m").get<size_t>();
    g.ratio = j.at("ratio").get<double>();
    uint8_t bit = static_cast<uint8_t>(j.at("first_bit").get<int>());
    for (const auto& run : j.at("runs")) {
        const size_t len = run.get<size_t>();
        g.bits.insert(g.bits.end(), len, bit);
        bit = 1 - bit;
    }
    if (g.bits.size() != m)
        throw DataError("gate mask: run lengths sum to " + std::to_string(g.bits.size()) +
                        ", header says m=" + std::to_string(m));
    size_t kept = 0;
    for (uint8_t b : g.bits) kept += b;
    const double expect = m == 0 ? 0.0 : static_cast<double>(kept) / m;
    if (std::fabs(expect - g.ratio) > 1e-9)
        throw DataError("gate mask: stored ratio does not match bits");
    if (j.contains("search_config")) {
        const auto& sc = j["search_config"];
        g.search_config.gamma = sc.value("gamma", 0.0);
        g.search_config.total_epochs = sc.value("T", 0);
        g.search_config.lambda = sc.value("lambda", 0.0);
        g.search_config.seed = sc.value("seed", 0ull);
    }
    g.manifest_id = j.value("manifest_id", "");
    return g;
}

void BinaryGate::save(const std::string& path) const {
    write_file(path, to_json() + "\n");
}

BinaryGate BinaryGate::load(const std::string& path) {
    return from_json(read_file(path));
}

}  // namespace optfs
