#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "optfs/autodiff.hpp"
#include "optfs/common.hpp"

using namespace optfs;

namespace {

// central finite differences over every element of every parameter
void check_gradients(std::vector<Tensor> params, const std::function<double()>& loss_fn,
                     const std::function<Tensor(Tape&)>& forward, double h = 1e-4,
                     double tol = 1e-5) {
    for (auto& p : params) p.zero_grad();
    Tape tape;
    Tensor loss = forward(tape);
    tape.backward(loss);

    for (auto& p : params) {
        for (size_t i = 0; i < p.size(); ++i) {
            const double saved = p.data()[i];
            p.data()[i] = saved + h;
            const double up = loss_fn();
            p.data()[i] = saved - h;
            const double down = loss_fn();
            p.data()[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = p.grad()[i];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            CHECK(std::fabs(fd - an) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("sigmoid(0) = 0.5 and matmul identity") {
    Tape tape;
    Tensor z = Tensor::zeros(1, 1, false);
    CHECK(tape.sigmoid(z).scalar() == 0.5);

    Tensor eye = Tensor::from({1, 0, 0, 1}, 2, 2, false);
    Tensor a = Tensor::from({1, 2, 3, 4}, 2, 2, false);
    Tensor out = tape.matmul(eye, a);
    for (size_t i = 0; i < 4; ++i) CHECK(out.data()[i] == a.data()[i]);
}

TEST_CASE("d/dx (x*x) at x=3 is 6") {
    Tensor x = Tensor::from({3.0}, 1, 1, true);
    Tape tape;
    Tensor y = tape.mul(x, x);
    tape.backward(y);
    CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("fan-out accumulates: y = x + x") {
    Tensor x = Tensor::from({1.5, -2.0}, 2, 1, true);
    Tape tape;
    Tensor y = tape.sum(tape.add(x, x));
    tape.backward(y);
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("gradient of sum(sigmoid(x)) is s(x)(1-s(x))") {
    Rng rng(5);
    Tensor x = Tensor::zeros(7, 1, true);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-3.0, 3.0);
    Tape tape;
    Tensor s = tape.sigmoid(x);
    Tensor total = tape.sum(s);
    tape.backward(total);
    for (size_t i = 0; i < x.size(); ++i) {
        const double sv = sigmoid_scalar(x.data()[i]);
        CHECK(x.grad()[i] == doctest::Approx(sv * (1.0 - sv)).epsilon(1e-12));
    }
}

TEST_CASE("batch_norm with zero variance stays finite via epsilon") {
    BatchNormState bn = BatchNormState::make(2);
    Tensor x = Tensor::from({3.0, 1.0, 3.0, 1.0, 3.0, 1.0}, 3, 2, false);
    Tape tape;
    Tensor y = tape.batch_norm(x, bn, true);
    // zero variance: xhat = 0 / sqrt(eps), so output is beta = 0 exactly
    for (size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.0);
    // direct formula at eps = 1e-5
    const double direct = (3.0 - 3.0) / std::sqrt(0.0 + 1e-5);
    CHECK(y.data()[0] == doctest::Approx(direct));
}

TEST_CASE("batch_norm running stats update with momentum 0.1") {
    BatchNormState bn = BatchNormState::make(1);
    Tensor x = Tensor::from({1.0, 2.0, 3.0, 6.0}, 4, 1, false);
    Tape tape;
    tape.batch_norm(x, bn, true);
    const double mean = 3.0;
    const double var_biased = (4.0 + 1.0 + 0.0 + 9.0) / 4.0;
    const double var_unbiased = var_biased * 4.0 / 3.0;
    CHECK(bn.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * mean).epsilon(1e-14));
    CHECK(bn.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * var_unbiased).epsilon(1e-14));
}

TEST_CASE("finite differences: composite graph with every op") {
    Rng rng(21);
    const int b = 5, n = 3, d = 2;
    Tensor table = Tensor::zeros(6, d, true);
    for (size_t i = 0; i < table.size(); ++i) table.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor gate = Tensor::zeros(6, 1, true);
    for (size_t i = 0; i < gate.size(); ++i) gate.data()[i] = rng.uniform(0.1, 1.2);
    Tensor w = Tensor::zeros(n * d, 4, true);
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-0.8, 0.8);
    Tensor bias = Tensor::zeros(1, 4, true);
    Tensor head = Tensor::zeros(4 + n * (n - 1) / 2, 1, true);
    for (size_t i = 0; i < head.size(); ++i) head.data()[i] = rng.uniform(-0.5, 0.5);
    BatchNormState bn = BatchNormState::make(4);

    std::vector<uint32_t> idx;
    for (int i = 0; i < b * n; ++i) idx.push_back(static_cast<uint32_t>(rng.uniform_index(6)));
    std::vector<double> labels;
    for (int i = 0; i < b; ++i) labels.push_back(static_cast<double>(rng.uniform_index(2)));

    auto forward = [&](Tape& tape) {
        Tensor rows = tape.lookup_rows(table, idx);
        Tensor gvals = tape.lookup_rows(gate, idx);
        Tensor gated = tape.scale_rows(rows, gvals);
        Tensor flat = tape.reshape(gated, b, n * d);
        Tensor hidden = tape.relu(tape.batch_norm(
            tape.add_rowvec(tape.matmul(flat, w), bias), bn, true));
        Tensor inter = tape.pairwise_inner(flat, n, d);
        Tensor both = tape.concat_cols(hidden, inter);
        Tensor logits = tape.matmul(both, head);
        return tape.bce_with_logits(logits, labels);
    };
    auto loss_fn = [&]() {
        // fresh running stats so repeated forwards do not drift the loss path
        BatchNormState scratch = bn;
        Tape tape;
        Tensor rows = tape.lookup_rows(table, idx);
        Tensor gvals = tape.lookup_rows(gate, idx);
        Tensor gated = tape.scale_rows(rows, gvals);
        Tensor flat = tape.reshape(gated, b, n * d);
        Tensor hidden = tape.relu(tape.batch_norm(
            tape.add_rowvec(tape.matmul(flat, w), bias), scratch, true));
        Tensor inter = tape.pairwise_inner(flat, n, d);
        Tensor both = tape.concat_cols(hidden, inter);
        Tensor logits = tape.matmul(both, head);
        return tape.bce_with_logits(logits, labels).scalar();
    };

    check_gradients({table, gate, w, bias, head, bn.gamma, bn.beta}, loss_fn, forward);
}

TEST_CASE("unreachable parameters keep zero gradient") {
    Tensor used = Tensor::from({2.0}, 1, 1, true);
    Tensor unused = Tensor::from({5.0}, 1, 1, true);
    Tape tape;
    Tensor y = tape.mul(used, used);
    tape.backward(y);
    CHECK(unused.grad()[0] == 0.0);
    CHECK(used.grad()[0] == 4.0);
}

TEST_CASE("backward twice without a new forward throws") {
    Tensor x = Tensor::from({1.0}, 1, 1, true);
    Tape tape;
    Tensor y = tape.mul(x, x);
    tape.backward(y);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("shape mismatch raises a contract error naming the op") {
    Tensor a = Tensor::zeros(2, 3, false);
    Tensor b = Tensor::zeros(2, 2, false);
    Tape tape;
    try {
        tape.add(a, b);
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("2x2") != std::string::npos);
    }
}

TEST_CASE("non-finite forward output raises NumericError") {
    Tensor a = Tensor::from({1e308}, 1, 1, false);
    Tensor b = Tensor::from({1e308}, 1, 1, false);
    Tape tape;
    CHECK_THROWS_AS(tape.add(a, b), NumericError);
}

TEST_CASE("bce_with_logits equals the naive cross entropy") {
    Rng rng(9);
    const int b = 16;
    Tensor logits = Tensor::zeros(b, 1, true);
    std::vector<double> labels(b);
    for (int i = 0; i < b; ++i) {
        logits.data()[i] = rng.uniform(-4.0, 4.0);
        labels[i] = static_cast<double>(rng.uniform_index(2));
    }
    Tape tape;
    const double got = tape.bce_with_logits(logits, labels).scalar();
    double want = 0.0;
    for (int i = 0; i < b; ++i) {
        const double p = sigmoid_scalar(logits.data()[i]);
        want += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    want /= b;
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("determinism: identical forwards produce identical gradients") {
    Rng rng(33);
    Tensor x = Tensor::zeros(8, 3, true);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor w = Tensor::zeros(3, 1, true);
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
    std::vector<double> labels(8, 1.0);

    auto run = [&]() {
        x.zero_grad();
        w.zero_grad();
        Tape tape;
        Tensor loss = tape.bce_with_logits(tape.matmul(x, w), labels);
        tape.backward(loss);
        std::vector<double> out(w.grad(), w.grad() + w.size());
        out.push_back(loss.scalar());
        return out;
    };
    CHECK(run() == run());
}
