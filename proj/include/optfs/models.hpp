#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optfs/autodiff.hpp"
#include "optfs/data.hpp"
#include "optfs/tensor.hpp"

namespace optfs {

enum class Backbone { FM, DeepFM, DCN, IPNN };

Backbone backbone_from_string(const std::string& name);
std::string backbone_to_string(Backbone b);

// The G / O / H decomposition. Only the four combinations below are valid:
//   fm     = (null, inner_product, null)
//   deepfm = (mlp,  inner_product, average)
//   dcn    = (mlp,  cross_network, average)
//   ipnn   = (null, inner_product, mlp)
struct InteractionSpec {
    enum class GFn { Null, Mlp };
    enum class OFn { InnerProduct, CrossNetwork };
    enum class HFn { Null, Average, Mlp };

    GFn g_fn = GFn::Null;
    OFn o_fn = OFn::InnerProduct;
    HFn h_fn = HFn::Null;

    static InteractionSpec for_backbone(Backbone b);
    Backbone backbone() const;  // throws ConfigError on an out-of-scope combination
    std::string to_json() const;
};

struct ModelConfig {
    Backbone backbone = Backbone::FM;
    int embed_dim = 16;
    std::vector<int> mlp_dims = {64, 32, 16};
    int cross_depth = 3;
    uint64_t seed = 1;
};

struct EmbeddingTable {
    Tensor weights;  // m x D, Xavier-uniform rows with fan_in=1, fan_out=D
    Tensor linear;   // m x 1 first-order weights
    Tensor bias;     // 1 x 1 global bias
    int dim = 0;
};

struct DenseLayer {
    Tensor w;
    Tensor b;
};

// Packed mini-batch: flat (batch*n) feature indices plus labels.
struct Batch {
    int size = 0;
    int n = 0;
    std::vector<uint32_t> flat_indices;
    std::vector<double> labels;
    std::vector<uint8_t> labels_u8;
};

Batch make_batch(const EncodedDataset& data, const std::vector<uint32_t>& order,
                 size_t start, size_t count);

// x_{l+1} = x_0 * (x_l . w_l) + b_l + x_l, returns x_L
Tensor cross_network(Tape& tape, const Tensor& x0, const std::vector<DenseLayer>& layers);

class Model {
public:
    Model(const ModelConfig& config, uint32_t m, int n_fields, uint64_t vocab_hash);

    // logits, batch x 1; gate is an m x 1 vector (soft during search, binary
    // or all-ones otherwise)
    Tensor forward(Tape& tape, const Batch& batch, const Tensor& gate, bool training);

    // sigmoid(logits) in eval mode; every value lands strictly inside (0,1)
    std::vector<double> predict(const Batch& batch, const Tensor& gate);
    std::vector<double> predict_dataset(const EncodedDataset& data, const Tensor& gate,
                                        int batch_size = 4096);

    // trainable tensors in a fixed order (embedding, linear, bias, mlp, bn, cross)
    std::vector<Tensor> parameters();
    std::vector<std::pair<std::string, Tensor>> named_parameters();
    std::vector<BatchNormState*> batch_norm_states();

    const ModelConfig& config() const { return config_; }
    const InteractionSpec& interaction_spec() const { return spec_; }
    uint32_t m() const { return m_; }
    int n_fields() const { return n_fields_; }
    uint64_t vocab_hash() const { return vocab_hash_; }

    // identity of the architecture (backbone, sizes, vocabulary); snapshots
    // and checkpoints refuse to load into a different one
    uint64_t arch_hash() const;

    // run_id: manifest id of the producing run (0 outside a run directory)
    void save(const std::string& path, uint64_t run_id = 0) const;
    static Model load(const std::string& path);
    uint64_t run_id() const { return run_id_; }
    std::string sidecar_json() const;

    EmbeddingTable& embedding() { return embedding_; }

private:
    ModelConfig config_;
    InteractionSpec spec_;
    uint32_t m_ = 0;
    int n_fields_ = 0;
    uint64_t vocab_hash_ = 0;
    uint64_t run_id_ = 0;

    EmbeddingTable embedding_;
    std::vector<DenseLayer> mlp_;             // hidden layers + final logit layer
    std::vector<BatchNormState> mlp_bn_;      // one per hidden layer
    std::vector<DenseLayer> cross_;           // w: K x 1, b: 1 x K
    DenseLayer cross_head_;                   // K -> 1 logit

    void init_params(Rng& rng);
    Tensor mlp_forward(Tape& tape, const Tensor& x, bool training);
    int mlp_input_dim() const;

    Model() = default;
};

}  // namespace optfs
