#pragma once

#include <memory>
#include <string>
#include <vector>

#include "optfs/common.hpp"

namespace optfs {

// Dense row-major 2-D tensor of doubles. Handle with shared ownership: copies
// alias the same storage, which is what the tape needs. Use clone() for a deep
// copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(int rows, int cols, bool requires_grad = false) {
        Tensor t;
        t.p_ = std::make_shared<Data>();
        t.p_->rows = rows;
        t.p_->cols = cols;
        t.p_->v.assign(static_cast<size_t>(rows) * cols, 0.0);
        t.p_->requires_grad = requires_grad;
        if (requires_grad) t.p_->g.assign(t.p_->v.size(), 0.0);
        return t;
    }

    static Tensor from(std::vector<double> values, int rows, int cols,
                       bool requires_grad = false) {
        if (values.size() != static_cast<size_t>(rows) * cols)
            throw ContractError("Tensor::from: value count does not match shape");
        Tensor t = zeros(rows, cols, requires_grad);
        t.p_->v = std::move(values);
        return t;
    }

    static Tensor scalar_tensor(double v, bool requires_grad = false) {
        return from({v}, 1, 1, requires_grad);
    }

    bool defined() const { return static_cast<bool>(p_); }
    int rows() const { return p_->rows; }
    int cols() const { return p_->cols; }
    size_t size() const { return p_->v.size(); }
    bool requires_grad() const { return p_->requires_grad; }

    double* data() { return p_->v.data(); }
    const double* data() const { return p_->v.data(); }
    std::vector<double>& values() { return p_->v; }
    const std::vector<double>& values() const { return p_->v; }

    double* grad() { return p_->g.data(); }
    const double* grad() const { return p_->g.data(); }
    std::vector<double>& grad_values() { return p_->g; }

    double at(int r, int c) const { return p_->v[static_cast<size_t>(r) * p_->cols + c]; }
    double& at(int r, int c) { return p_->v[static_cast<size_t>(r) * p_->cols + c]; }
    double grad_at(int r, int c) const { return p_->g[static_cast<size_t>(r) * p_->cols + c]; }

    double scalar() const {
        if (size() != 1) throw ContractError("Tensor::scalar: tensor is not 1x1");
        return p_->v[0];
    }

    void zero_grad() {
        if (p_->requires_grad) p_->g.assign(p_->v.size(), 0.0);
    }

    Tensor clone() const {
        Tensor t = zeros(rows(), cols(), requires_grad());
        t.p_->v = p_->v;
        return t;
    }

    bool same_storage(const Tensor& o) const { return p_ == o.p_; }

private:
    struct Data {
        int rows = 0;
        int cols = 0;
        bool requires_grad = false;
        std::vector<double> v;
        std::vector<double> g;
    };
    std::shared_ptr<Data> p_;
};

}  // namespace optfs
