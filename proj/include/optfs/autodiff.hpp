#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "optfs/tensor.hpp"

namespace optfs {

// Per-feature batch-norm state. gamma/beta are trainable; running stats are
// plain buffers updated in training mode and consumed in eval mode.
struct BatchNormState {
    Tensor gamma;
    Tensor beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNormState make(int channels) {
        BatchNormState s;
        s.gamma = Tensor::zeros(1, channels, true);
        for (int c = 0; c < channels; ++c) s.gamma.at(0, c) = 1.0;
        s.beta = Tensor::zeros(1, channels, true);
        s.running_mean.assign(channels, 0.0);
        s.running_var.assign(channels, 1.0);
        return s;
    }
};

// Reverse-mode tape. One tape per forward pass, confined to one thread.
// Recording happens only when an input requires gradients; backward() walks
// the record once in reverse, accumulating additively on fan-out.
class Tape {
public:
    Tensor lookup_rows(const Tensor& table, const std::vector<uint32_t>& idx);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor div_const(const Tensor& a, const Tensor& denom);  // denom: no grad

    Tensor add_scalar(const Tensor& a, double c);
    Tensor mul_scalar(const Tensor& a, double c);

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor scale_rows(const Tensor& x, const Tensor& s);    // s: rows x 1
    Tensor add_rowvec(const Tensor& x, const Tensor& v);    // v: 1 x cols
    Tensor concat_cols(const Tensor& a, const Tensor& b);
    Tensor reshape(const Tensor& x, int rows, int cols);

    Tensor sigmoid(const Tensor& x);
    Tensor relu(const Tensor& x);
    Tensor batch_norm(const Tensor& x, BatchNormState& state, bool training);

    Tensor sum(const Tensor& x);
    Tensor mean(const Tensor& x);
    Tensor row_sum(const Tensor& x);  // rows x cols -> rows x 1

    Tensor pairwise_inner(const Tensor& x, int fields, int d);

    // mean over rows of [softplus(z) - y*z]; labels constant
    Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels);

    void backward(const Tensor& loss);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::function<void()> back;
    };
    std::vector<Node> nodes_;
    bool backward_done_ = false;

    void record(std::function<void()> back) { nodes_.push_back({std::move(back)}); }
    static void check_finite(const char* op, const Tensor& t);
};

}  // namespace optfs
