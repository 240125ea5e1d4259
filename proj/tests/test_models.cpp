#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "optfs/common.hpp"
#include "optfs/models.hpp"

using namespace optfs;
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kVocabHash = 0xabcdef;

// batch over a tiny 3-field vocabulary with 3 features per field
Batch toy_batch(int n_fields, int features_per_field, int size, uint64_t seed) {
    Rng rng(seed);
    Batch b;
    b.n = n_fields;
    b.size = size;
    for (int r = 0; r < size; ++r) {
        for (int f = 0; f < n_fields; ++f)
            b.flat_indices.push_back(
                static_cast<uint32_t>(f * features_per_field + rng.uniform_index(features_per_field)));
        const double y = static_cast<double>(rng.uniform_index(2));
        b.labels.push_back(y);
        b.labels_u8.push_back(static_cast<uint8_t>(y));
    }
    return b;
}

ModelConfig small_config(Backbone b, uint64_t seed = 5) {
    ModelConfig c;
    c.backbone = b;
    c.embed_dim = 4;
    c.mlp_dims = {8, 4};
    c.cross_depth = 2;
    c.seed = seed;
    return c;
}

Tensor ones_gate(uint32_t m) {
    Tensor g = Tensor::zeros(static_cast<int>(m), 1, false);
    for (size_t i = 0; i < g.size(); ++i) g.data()[i] = 1.0;
    return g;
}

}  // namespace

TEST_CASE("interaction spec combinations map to backbones") {
    for (Backbone b : {Backbone::FM, Backbone::DeepFM, Backbone::DCN, Backbone::IPNN}) {
        CHECK(InteractionSpec::for_backbone(b).backbone() == b);
        CHECK(backbone_from_string(backbone_to_string(b)) == b);
    }
    InteractionSpec bad;
    bad.g_fn = InteractionSpec::GFn::Mlp;
    bad.o_fn = InteractionSpec::OFn::InnerProduct;
    bad.h_fn = InteractionSpec::HFn::Null;
    CHECK_THROWS_AS(bad.backbone(), ConfigError);
    CHECK_THROWS_AS(backbone_from_string("opnn"), ConfigError);
}

TEST_CASE("all-zero parameters predict exactly 0.5") {
    for (Backbone b : {Backbone::FM, Backbone::DeepFM, Backbone::DCN, Backbone::IPNN}) {
        Model model(small_config(b), 9, 3, kVocabHash);
        for (auto& p : model.parameters())
            if (&p.values() != nullptr)
                for (auto& x : p.values()) x = 0.0;
        // batch-norm gammas were zeroed too; on zero inputs the output stays zero
        Batch batch = toy_batch(3, 3, 6, 3);
        auto scores = model.predict(batch, ones_gate(9));
        for (double s : scores) CHECK(s == 0.5);
    }
}

TEST_CASE("fm logit on a hand-set 2-field example") {
    ModelConfig cfg = small_config(Backbone::FM);
    cfg.embed_dim = 2;
    Model model(cfg, 4, 2, kVocabHash);  // field 0: features 0,1; field 1: features 2,3
    auto& emb = model.embedding();
    const std::vector<double> e = {0.5, -1.0,   // feature 0
                                   0.0, 0.0,    // feature 1
                                   2.0, 0.25,   // feature 2
                                   0.0, 0.0};   // feature 3
    emb.weights.values() = e;
    emb.linear.values() = {0.3, 0.0, -0.8, 0.0};
    emb.bias.values() = {0.15};

    Batch batch;
    batch.n = 2;
    batch.size = 1;
    batch.flat_indices = {0, 2};
    batch.labels = {1.0};
    batch.labels_u8 = {1};

    Tape tape;
    Tensor logit = model.forward(tape, batch, ones_gate(4), false);
    const double inner = 0.5 * 2.0 + (-1.0) * 0.25;
    const double expect = 0.15 + 0.3 + (-0.8) + inner;
    CHECK(logit.data()[0] == doctest::Approx(expect).epsilon(1e-15));
    CHECK(model.predict(batch, ones_gate(4))[0] ==
          doctest::Approx(sigmoid_scalar(expect)).epsilon(1e-15));
}

TEST_CASE("fm with a single field has no interactions") {
    ModelConfig cfg = small_config(Backbone::FM);
    Model model(cfg, 3, 1, kVocabHash);
    model.embedding().linear.values() = {0.4, -0.2, 0.1};
    model.embedding().bias.values() = {0.05};
    Batch batch;
    batch.n = 1;
    batch.size = 3;
    batch.flat_indices = {0, 1, 2};
    batch.labels = {1, 0, 1};
    batch.labels_u8 = {1, 0, 1};
    auto scores = model.predict(batch, ones_gate(3));
    CHECK(scores[0] == doctest::Approx(sigmoid_scalar(0.05 + 0.4)).epsilon(1e-15));
    CHECK(scores[1] == doctest::Approx(sigmoid_scalar(0.05 - 0.2)).epsilon(1e-15));
    CHECK(scores[2] == doctest::Approx(sigmoid_scalar(0.05 + 0.1)).epsilon(1e-15));
}

TEST_CASE("identity gate equals plain lookup; zero gate kills the feature") {
    Model model(small_config(Backbone::FM), 9, 3, kVocabHash);
    Batch batch = toy_batch(3, 3, 8, 11);

    // g == 1 reproduces the ungated forward bit for bit
    auto base = model.predict(batch, ones_gate(9));
    auto again = model.predict(batch, ones_gate(9));
    CHECK(base == again);

    // orthogonal embeddings: all pairwise interactions vanish
    ModelConfig cfg = small_config(Backbone::FM);
    cfg.embed_dim = 3;
    Model ortho(cfg, 3, 3, kVocabHash);
    ortho.embedding().weights.values() = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    ortho.embedding().linear.values() = {0, 0, 0};
    ortho.embedding().bias.values() = {0};
    Batch one;
    one.n = 3;
    one.size = 1;
    one.flat_indices = {0, 1, 2};
    one.labels = {1};
    one.labels_u8 = {1};
    CHECK(ortho.predict(one, ones_gate(3))[0] == 0.5);
}

TEST_CASE("masking equivalence: gate zero equals physically zeroed rows") {
    for (Backbone b : {Backbone::FM, Backbone::DeepFM, Backbone::DCN, Backbone::IPNN}) {
        const uint32_t m = 9;
        Model gated(small_config(b, 21), m, 3, kVocabHash);
        Model zeroed(small_config(b, 21), m, 3, kVocabHash);  // identical init

        const uint32_t k = 4;  // feature to remove (field 1)
        Tensor gate = ones_gate(m);
        gate.data()[k] = 0.0;
        for (int c = 0; c < zeroed.embedding().weights.cols(); ++c)
            zeroed.embedding().weights.at(static_cast<int>(k), c) = 0.0;
        zeroed.embedding().linear.at(static_cast<int>(k), 0) = 0.0;

        Batch batch = toy_batch(3, 3, 16, 77);  // plenty of rows hit feature 4
        auto a = gated.predict(batch, gate);
        auto c = zeroed.predict(batch, ones_gate(m));
        for (int i = 0; i < batch.size; ++i) CHECK(std::fabs(a[i] - c[i]) <= 1e-12);
    }
}

TEST_CASE("bilinear decomposition: one gate application equals explicit g_i g_j") {
    Rng rng(13);
    const int d = 6;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> ei(d), ej(d);
        for (auto& x : ei) x = rng.uniform(-2.0, 2.0);
        for (auto& x : ej) x = rng.uniform(-2.0, 2.0);
        const double gi = rng.uniform(0.0, 2.0), gj = rng.uniform(0.0, 2.0);
        double gated = 0.0, plain = 0.0;
        for (int t = 0; t < d; ++t) {
            gated += (gi * ei[t]) * (gj * ej[t]);
            plain += ei[t] * ej[t];
        }
        CHECK(std::fabs(gated - gi * gj * plain) <= 1e-12);
    }
}

TEST_CASE("pairwise interactions vanish for a zero-gated field") {
    ModelConfig cfg = small_config(Backbone::FM);
    cfg.embed_dim = 2;
    Model model(cfg, 6, 3, kVocabHash);
    model.embedding().linear.values().assign(6, 0.0);
    model.embedding().bias.values() = {0.0};
    Tensor gate = ones_gate(6);
    for (uint32_t k = 0; k < 2; ++k) gate.data()[k] = 0.0;  // kill field 0 entirely

    Batch batch;
    batch.n = 3;
    batch.size = 1;
    batch.flat_indices = {0, 2, 4};
    batch.labels = {1};
    batch.labels_u8 = {1};

    Tape tape;
    Tensor e = tape.lookup_rows(model.embedding().weights, batch.flat_indices);
    Tensor gv = tape.lookup_rows(gate, batch.flat_indices);
    Tensor flat = tape.reshape(tape.scale_rows(e, gv), 1, 6);
    Tensor v = tape.pairwise_inner(flat, 3, 2);  // pairs (0,1), (0,2), (1,2)
    CHECK(v.data()[0] == 0.0);
    CHECK(v.data()[1] == 0.0);
    CHECK(v.data()[2] != 0.0);
}

TEST_CASE("cross network: zero weights pass x0 through the residual path") {
    Tape tape;
    Tensor x0 = Tensor::from({1.0, -2.0, 0.5, 3.0}, 2, 2, false);
    std::vector<DenseLayer> layers(3);
    for (auto& l : layers) {
        l.w = Tensor::zeros(2, 1, false);
        l.b = Tensor::zeros(1, 2, false);
    }
    Tensor out = cross_network(tape, x0, layers);
    for (size_t i = 0; i < x0.size(); ++i) CHECK(out.data()[i] == x0.data()[i]);
}

TEST_CASE("cross network depth 1 matches the closed form on a 2-dim example") {
    Tape tape;
    Tensor x0 = Tensor::from({1.5, -0.5}, 1, 2, false);
    std::vector<DenseLayer> layers(1);
    layers[0].w = Tensor::from({0.4, -1.2}, 2, 1, false);
    layers[0].b = Tensor::from({0.1, 0.2}, 1, 2, false);
    Tensor out = cross_network(tape, x0, layers);
    const double dot = 1.5 * 0.4 + (-0.5) * (-1.2);  // = 1.2
    CHECK(out.data()[0] == doctest::Approx(1.5 * dot + 0.1 + 1.5).epsilon(1e-15));
    CHECK(out.data()[1] == doctest::Approx(-0.5 * dot + 0.2 + (-0.5)).epsilon(1e-15));
}

TEST_CASE("cross network on zero input accumulates biases") {
    Tape tape;
    Tensor x0 = Tensor::zeros(1, 2, false);
    std::vector<DenseLayer> layers(3);
    for (auto& l : layers) {
        l.w = Tensor::from({0.7, -0.3}, 2, 1, false);
        l.b = Tensor::from({0.25, -0.5}, 1, 2, false);
    }
    Tensor out = cross_network(tape, x0, layers);
    // x0 = 0: x_{l+1} = b + x_l, so x_L = L * b
    CHECK(out.data()[0] == doctest::Approx(3 * 0.25).epsilon(1e-15));
    CHECK(out.data()[1] == doctest::Approx(3 * -0.5).epsilon(1e-15));
}

TEST_CASE("outputs live strictly inside (0,1) with finite logits") {
    for (Backbone b : {Backbone::FM, Backbone::DeepFM, Backbone::DCN, Backbone::IPNN}) {
        Model model(small_config(b, 3), 9, 3, kVocabHash);
        Batch batch = toy_batch(3, 3, 12, 5);
        auto scores = model.predict(batch, ones_gate(9));
        for (double s : scores) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
    }
}

TEST_CASE("fm prediction is invariant under field permutation") {
    Model model(small_config(Backbone::FM), 9, 3, kVocabHash);
    Batch batch = toy_batch(3, 3, 10, 9);
    Batch permuted = batch;
    for (int r = 0; r < batch.size; ++r) {
        // swap field order 0,1,2 -> 2,0,1; global indices are unchanged
        permuted.flat_indices[r * 3 + 0] = batch.flat_indices[r * 3 + 2];
        permuted.flat_indices[r * 3 + 1] = batch.flat_indices[r * 3 + 0];
        permuted.flat_indices[r * 3 + 2] = batch.flat_indices[r * 3 + 1];
    }
    auto a = model.predict(batch, ones_gate(9));
    auto b = model.predict(permuted, ones_gate(9));
    for (int i = 0; i < batch.size; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("out-of-range feature index is rejected") {
    Model model(small_config(Backbone::FM), 9, 3, kVocabHash);
    Batch batch;
    batch.n = 3;
    batch.size = 1;
    batch.flat_indices = {0, 4, 9};  // 9 >= m
    batch.labels = {1};
    batch.labels_u8 = {1};
    CHECK_THROWS_AS(model.predict(batch, ones_gate(9)), DataError);
}

TEST_CASE("checkpoint round trip preserves predictions bit for bit") {
    const std::string dir = (fs::temp_directory_path() / "optfs_model_test").string();
    fs::create_directories(dir);
    for (Backbone b : {Backbone::FM, Backbone::DeepFM, Backbone::DCN, Backbone::IPNN}) {
        Model model(small_config(b, 31), 9, 3, kVocabHash);
        Batch batch = toy_batch(3, 3, 8, 2);
        // move running stats off their defaults so the round trip covers them
        Tape tape;
        model.forward(tape, batch, ones_gate(9), true);
        auto before = model.predict(batch, ones_gate(9));
        const std::string path = dir + "/" + backbone_to_string(b) + ".bin";
        model.save(path);
        Model back = Model::load(path);
        CHECK(back.arch_hash() == model.arch_hash());
        auto after = back.predict(batch, ones_gate(9));
        CHECK(before == after);
    }
    fs::remove_all(dir);
}
