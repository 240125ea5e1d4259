#include "optfs/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "optfs/fsio.hpp"

namespace optfs {

using nlohmann::json;

Backbone backbone_from_string(const std::string& name) {
    if (name == "fm") return Backbone::FM;
    if (name == "deepfm") return Backbone::DeepFM;
    if (name == "dcn") return Backbone::DCN;
    if (name == "ipnn") return Backbone::IPNN;
    throw ConfigError("unknown model '" + name + "' (expected fm|deepfm|dcn|ipnn)");
}

std::string backbone_to_string(Backbone b) {
    switch (b) {
        case Backbone::FM: return "fm";
        case Backbone::DeepFM: return "deepfm";
        case Backbone::DCN: return "dcn";
        case Backbone::IPNN: return "ipnn";
    }
    throw ContractError("backbone_to_string: bad enum");
}

InteractionSpec InteractionSpec::for_backbone(Backbone b) {
    InteractionSpec s;
    switch (b) {
        case Backbone::FM:
            s = {GFn::Null, OFn::InnerProduct, HFn::Null};
            break;
        case Backbone::DeepFM:
            s = {GFn::Mlp, OFn::InnerProduct, HFn::Average};
            break;
        case Backbone::DCN:
            s = {GFn::Mlp, OFn::CrossNetwork, HFn::Average};
            break;
        case Backbone::IPNN:
            s = {GFn::Null, OFn::InnerProduct, HFn::Mlp};
            break;
    }
    return s;
}

Backbone InteractionSpec::backbone() const {
    if (g_fn == GFn::Null && o_fn == OFn::InnerProduct && h_fn == HFn::Null) return Backbone::FM;
    if (g_fn == GFn::Mlp && o_fn == OFn::InnerProduct && h_fn == HFn::Average)
        return Backbone::DeepFM;
    if (g_fn == GFn::Mlp && o_fn == OFn::CrossNetwork && h_fn == HFn::Average)
        return Backbone::DCN;
    if (g_fn == GFn::Null && o_fn == OFn::InnerProduct && h_fn == HFn::Mlp) return Backbone::IPNN;
    throw ConfigError("interaction spec: combination is not one of fm/deepfm/dcn/ipnn");
}

std::string InteractionSpec::to_json() const {
    auto gs = g_fn == GFn::Null ? "null" : "mlp";
    auto os = o_fn == OFn::InnerProduct ? "inner_product" : "cross_network";
    auto hs = h_fn == HFn::Null ? "null" : (h_fn == HFn::Average ? "average" : "mlp");
    json j = {{"g_fn", gs}, {"o_fn", os}, {"h_fn", hs}};
    return j.dump();
}

Batch make_batch(const EncodedDataset& data, const std::vector<uint32_t>& order,
                 size_t start, size_t count) {
    Batch b;
    b.n = data.n;
    b.size = static_cast<int>(count);
    b.flat_indices.reserve(count * data.n);
    b.labels.reserve(count);
    b.labels_u8.reserve(count);
    for (size_t i = start; i < start + count; ++i) {
        const uint32_t r = order[i];
        const uint32_t* row = data.row(r);
        b.flat_indices.insert(b.flat_indices.end(), row, row + data.n);
        b.labels.push_back(static_cast<double>(data.labels[r]));
        b.labels_u8.push_back(data.labels[r]);
    }
    return b;
}

Model::Model(const ModelConfig& config, uint32_t m, int n_fields, uint64_t vocab_hash)
    : config_(config),
      spec_(InteractionSpec::for_backbone(config.backbone)),
      m_(m),
      n_fields_(n_fields),
      vocab_hash_(vocab_hash) {
    if (m == 0) throw ConfigError("model: empty vocabulary");
    if (n_fields < 1) throw ConfigError("model: need at least one field");
    if (config.embed_dim < 1) throw ConfigError("model: embed_dim must be >= 1");
    if (config.backbone == Backbone::DCN && config.cross_depth < 1)
        throw ConfigError("model: cross_depth must be >= 1");
    Rng rng(config.seed);
    init_params(rng);
}

int Model::mlp_input_dim() const {
    const int k = n_fields_ * config_.embed_dim;
    if (config_.backbone == Backbone::IPNN) return k + n_fields_ * (n_fields_ - 1) / 2;
    return k;
}

void Model::init_params(Rng& rng) {
    const int d = config_.embed_dim;
    embedding_.dim = d;
    embedding_.weights = Tensor::zeros(static_cast<int>(m_), d, true);
    const double ebound = std::sqrt(6.0 / (1.0 + d));
    for (size_t i = 0; i < embedding_.weights.size(); ++i)
        embedding_.weights.data()[i] = rng.uniform(-ebound, ebound);
    embedding_.linear = Tensor::zeros(static_cast<int>(m_), 1, true);
    embedding_.bias = Tensor::zeros(1, 1, true);

    const bool has_mlp = spec_.g_fn == InteractionSpec::GFn::Mlp ||
                         spec_.h_fn == InteractionSpec::HFn::Mlp;
    if (has_mlp) {
        int in = mlp_input_dim();
        std::vector<int> dims = config_.mlp_dims;
        dims.push_back(1);
        for (size_t l = 0; l < dims.size(); ++l) {
            const int out = dims[l];
            DenseLayer layer;
            layer.w = Tensor::zeros(in, out, true);
            const double bound = std::sqrt(6.0 / (in + out));
            for (size_t i = 0; i < layer.w.size(); ++i)
                layer.w.data()[i] = rng.uniform(-bound, bound);
            layer.b = Tensor::zeros(1, out, true);
            mlp_.push_back(std::move(layer));
            if (l + 1 < dims.size()) mlp_bn_.push_back(BatchNormState::make(out));
            in = out;
        }
    }

    if (config_.backbone == Backbone::DCN) {
        const int k = n_fields_ * d;
        const double bound = std::sqrt(6.0 / (k + 1));
        for (int l = 0; l < config_.cross_depth; ++l) {
            DenseLayer layer;
            layer.w = Tensor::zeros(k, 1, true);
            for (size_t i = 0; i < layer.w.size(); ++i)
                layer.w.data()[i] = rng.uniform(-bound, bound);
            layer.b = Tensor::zeros(1, k, true);
            cross_.push_back(std::move(layer));
        }
        cross_head_.w = Tensor::zeros(k, 1, true);
        for (size_t i = 0; i < cross_head_.w.size(); ++i)
            cross_head_.w.data()[i] = rng.uniform(-bound, bound);
        cross_head_.b = Tensor::zeros(1, 1, true);
    }
}

Tensor cross_network(Tape& tape, const Tensor& x0, const std::vector<DenseLayer>& layers) {
    Tensor xl = x0;
    for (const auto& layer : layers) {
        Tensor s = tape.matmul(xl, layer.w);  // batch x 1
        Tensor t = tape.scale_rows(x0, s);
        xl = tape.add(tape.add_rowvec(t, layer.b), xl);
    }
    return xl;
}

Tensor Model::mlp_forward(Tape& tape, const Tensor& x, bool training) {
    Tensor h = x;
    for (size_t l = 0; l < mlp_.size(); ++l) {
        h = tape.add_rowvec(tape.matmul(h, mlp_[l].w), mlp_[l].b);
        if (l + 1 < mlp_.size()) {
            h = tape.batch_norm(h, mlp_bn_[l], training);
            h = tape.relu(h);
        }
    }
    return h;
}

Tensor Model::forward(Tape& tape, const Batch& batch, const Tensor& gate, bool training) {
    if (batch.n != n_fields_)
        throw ContractError("model forward: batch has " + std::to_string(batch.n) +
                            " fields, model expects " + std::to_string(n_fields_));
    if (gate.rows() != static_cast<int>(m_) || gate.cols() != 1)
        throw ContractError("model forward: gate must be m x 1");
    const int b = batch.size;
    const int n = n_fields_;
    const int d = config_.embed_dim;

    // gated embeddings: e_g[b,i] = g[k_i] * E[k_i]
    Tensor emb = tape.lookup_rows(embedding_.weights, batch.flat_indices);   // (b*n) x d
    Tensor gvals = tape.lookup_rows(gate, batch.flat_indices);               // (b*n) x 1
    Tensor gated = tape.scale_rows(emb, gvals);
    Tensor e_flat = tape.reshape(gated, b, n * d);

    auto fm_logit = [&]() {
        Tensor wvals = tape.lookup_rows(embedding_.linear, batch.flat_indices);  // (b*n) x 1
        Tensor gated_w = tape.mul(wvals, gvals);
        Tensor lin = tape.row_sum(tape.reshape(gated_w, b, n));                  // b x 1
        Tensor inter = tape.row_sum(tape.pairwise_inner(e_flat, n, d));          // b x 1
        return tape.add_rowvec(tape.add(lin, inter), embedding_.bias);
    };

    switch (config_.backbone) {
        case Backbone::FM:
            return fm_logit();
        case Backbone::DeepFM: {
            Tensor deep = mlp_forward(tape, e_flat, training);
            return tape.mul_scalar(tape.add(fm_logit(), deep), 0.5);
        }
        case Backbone::DCN: {
            Tensor x0 = e_flat;
            Tensor xl = cross_network(tape, x0, cross_);
            Tensor cross_logit = tape.add_rowvec(tape.matmul(xl, cross_head_.w), cross_head_.b);
            Tensor deep = mlp_forward(tape, x0, training);
            return tape.mul_scalar(tape.add(cross_logit, deep), 0.5);
        }
        case Backbone::IPNN: {
            Tensor v = tape.pairwise_inner(e_flat, n, d);
            Tensor in = n > 1 ? tape.concat_cols(e_flat, v) : e_flat;
            return mlp_forward(tape, in, training);
        }
    }
    throw ContractError("model forward: bad backbone enum");
}

std::vector<double> Model::predict(const Batch& batch, const Tensor& gate) {
    Tape tape;
    Tensor logits = forward(tape, batch, gate, false);
    std::vector<double> out(batch.size);
    for (int i = 0; i < batch.size; ++i) out[i] = sigmoid_scalar(logits.data()[i]);
    return out;
}

std::vector<double> Model::predict_dataset(const EncodedDataset& data, const Tensor& gate,
                                           int batch_size) {
    std::vector<uint32_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<uint32_t>(i);
    std::vector<double> scores;
    scores.reserve(data.size());
    for (size_t start = 0; start < data.size(); start += batch_size) {
        const size_t count = std::min<size_t>(batch_size, data.size() - start);
        Batch b = make_batch(data, order, start, count);
        auto p = predict(b, gate);
        scores.insert(scores.end(), p.begin(), p.end());
    }
    return scores;
}

std::vector<Tensor> Model::parameters() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embedding", embedding_.weights);
    out.emplace_back("linear", embedding_.linear);
    out.emplace_back("bias", embedding_.bias);
    for (size_t l = 0; l < mlp_.size(); ++l) {
        out.emplace_back("mlp" + std::to_string(l) + ".w", mlp_[l].w);
        out.emplace_back("mlp" + std::to_string(l) + ".b", mlp_[l].b);
    }
    for (size_t l = 0; l < mlp_bn_.size(); ++l) {
        out.emplace_back("bn" + std::to_string(l) + ".gamma", mlp_bn_[l].gamma);
        out.emplace_back("bn" + std::to_string(l) + ".beta", mlp_bn_[l].beta);
    }
    for (size_t l = 0; l < cross_.size(); ++l) {
        out.emplace_back("cross" + std::to_string(l) + ".w", cross_[l].w);
        out.emplace_back("cross" + std::to_string(l) + ".b", cross_[l].b);
    }
    if (cross_head_.w.defined()) {
        out.emplace_back("cross_head.w", cross_head_.w);
        out.emplace_back("cross_head.b", cross_head_.b);
    }
    return out;
}

std::vector<BatchNormState*> Model::batch_norm_states() {
    std::vector<BatchNormState*> out;
    for (auto& bn : mlp_bn_) out.push_back(&bn);
    return out;
}

uint64_t Model::arch_hash() const {
    std::string desc = backbone_to_string(config_.backbone) + ":" +
                       std::to_string(config_.embed_dim) + ":" + std::to_string(m_) + ":" +
                       std::to_string(n_fields_) + ":" + std::to_string(config_.cross_depth) + ":";
    for (int dimension : config_.mlp_dims) desc += std::to_string(dimension) + ",";
    desc += ":" + hash_to_hex(vocab_hash_);
    return fnv1a64(desc);
}

namespace {
constexpr char kModelMagic[4] = {'O', 'F', 'S', 'M'};
constexpr uint32_t kModelVersion = 1;
}  // namespace

void Model::save(const std::string& path, uint64_t run_id) const {
    std::string buf;
    buf.append(kModelMagic, 4);
    put_le<uint32_t>(buf, kModelVersion);
    put_le<uint64_t>(buf, run_id);
    put_le<uint64_t>(buf, vocab_hash_);
    put_string(buf, backbone_to_string(config_.backbone));
    put_le<uint32_t>(buf, static_cast<uint32_t>(config_.embed_dim));
    put_le<uint32_t>(buf, m_);
    put_le<uint32_t>(buf, static_cast<uint32_t>(n_fields_));
    put_le<uint32_t>(buf, static_cast<uint32_t>(config_.cross_depth));
    put_le<uint64_t>(buf, config_.seed);
    put_le<uint32_t>(buf, static_cast<uint32_t>(config_.mlp_dims.size()));
    for (int dimension : config_.mlp_dims) put_le<uint32_t>(buf, static_cast<uint32_t>(dimension));

    auto named = const_cast<Model*>(this)->named_parameters();
    // running stats ride along as extra named buffers
    std::vector<std::pair<std::string, std::vector<double>>> extra;
    for (size_t l = 0; l < mlp_bn_.size(); ++l) {
        extra.emplace_back("bn" + std::to_string(l) + ".running_mean", mlp_bn_[l].running_mean);
        extra.emplace_back("bn" + std::to_string(l) + ".running_var", mlp_bn_[l].running_var);
    }
    put_le<uint32_t>(buf, static_cast<uint32_t>(named.size() + extra.size()));
    for (auto& [name, t] : named) {
        put_string(buf, name);
        put_le<uint32_t>(buf, static_cast<uint32_t>(t.rows()));
        put_le<uint32_t>(buf, static_cast<uint32_t>(t.cols()));
        for (size_t i = 0; i < t.size(); ++i) put_f64(buf, t.data()[i]);
    }
    for (auto& [name, v] : extra) {
        put_string(buf, name);
        put_le<uint32_t>(buf, 1u);
        put_le<uint32_t>(buf, static_cast<uint32_t>(v.size()));
        for (double x : v) put_f64(buf, x);
    }
    write_file(path, buf);
}

Model Model::load(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 4 || std::memcmp(buf.data(), kModelMagic, 4) != 0)
        throw DataError("not a model checkpoint: " + path);
    size_t off = 4;
    const uint32_t version = get_le<uint32_t>(buf, off);
    if (version != kModelVersion)
        throw DataError("model checkpoint version " + std::to_string(version) + " unsupported");
    const uint64_t run_id = get_le<uint64_t>(buf, off);
    const uint64_t vocab_hash = get_le<uint64_t>(buf, off);
    ModelConfig cfg;
    cfg.backbone = backbone_from_string(get_string(buf, off));
    cfg.embed_dim = static_cast<int>(get_le<uint32_t>(buf, off));
    const uint32_t m = get_le<uint32_t>(buf, off);
    const int n_fields = static_cast<int>(get_le<uint32_t>(buf, off));
    cfg.cross_depth = static_cast<int>(get_le<uint32_t>(buf, off));
    cfg.seed = get_le<uint64_t>(buf, off);
    cfg.mlp_dims.clear();
    const uint32_t ndims = get_le<uint32_t>(buf, off);
    for (uint32_t i = 0; i < ndims; ++i)
        cfg.mlp_dims.push_back(static_cast<int>(get_le<uint32_t>(buf, off)));

    Model model(cfg, m, n_fields, vocab_hash);
    model.run_id_ = run_id;
    auto named = model.named_parameters();
    const uint32_t count = get_le<uint32_t>(buf, off);
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = get_string(buf, off);
        const int rows = static_cast<int>(get_le<uint32_t>(buf, off));
        const int cols = static_cast<int>(get_le<uint32_t>(buf, off));
        std::vector<double> values(static_cast<size_t>(rows) * cols);
        for (auto& x : values) x = get_f64(buf, off);

        bool found = false;
        for (auto& [pname, t] : named) {
            if (pname == name) {
                if (t.rows() != rows || t.cols() != cols)
                    throw DataError("model checkpoint: tensor '" + name + "' shape mismatch");
                std::copy(values.begin(), values.end(), t.data());
                found = true;
                break;
            }
        }
        if (!found) {
            // running stats
            for (size_t l = 0; l < model.mlp_bn_.size(); ++l) {
                const std::string pre = "bn" + std::to_string(l);
                if (name == pre + ".running_mean") {
                    model.mlp_bn_[l].running_mean = values;
                    found = true;
                } else if (name == pre + ".running_var") {
                    model.mlp_bn_[l].running_var = values;
                    found = true;
                }
            }
        }
        if (!found) throw DataError("model checkpoint: unknown tensor '" + name + "'");
    }
    return model;
}

std::string Model::sidecar_json() const {
    json j;
    j["backbone"] = backbone_to_string(config_.backbone);
    j["interaction_spec"] = json::parse(spec_.to_json());
    j["embed_dim"] = config_.embed_dim;
    j["mlp_dims"] = config_.mlp_dims;
    j["cross_depth"] = config_.cross_depth;
    j["m"] = m_;
    j["n_fields"] = n_fields_;
    j["vocabulary_hash"] = hash_to_hex(vocab_hash_);
    j["seed"] = config_.seed;
    return j.dump(2);
}

}  // namespace optfs
