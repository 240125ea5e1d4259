#include "optfs/autodiff.hpp"

#include <cmath>

#include "optfs/kernels.hpp"

namespace optfs {

namespace {

std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

void Tape::check_finite(const char* op, const Tensor& t) {
    if (!kernels::all_finite(t.data(), t.size()))
        throw NumericError(std::string(op) + ": non-finite value in forward output");
}

Tensor Tape::lookup_rows(const Tensor& table, const std::vector<uint32_t>& idx) {
    const int cols = table.cols();
    const auto m = static_cast<uint32_t>(table.rows());
    for (uint32_t k : idx) {
        if (k >= m)
            throw DataError("lookup_rows: index " + std::to_string(k) +
                            " out of range for table with " + std::to_string(m) + " rows");
    }
    Tensor out = Tensor::zeros(static_cast<int>(idx.size()), cols, table.requires_grad());
    kernels::gather_rows(table.data(), idx.data(), out.data(), static_cast<int>(idx.size()), cols);
    check_finite("lookup_rows", out);
    if (table.requires_grad()) {
        Tensor tcap = table;
        Tensor ocap = out;
        std::vector<uint32_t> icap = idx;
        record([tcap, ocap, icap]() mutable {
            kernels::scatter_add_rows(ocap.grad(), icap.data(), tcap.grad(),
                                      static_cast<int>(icap.size()), ocap.cols());
        });
    }
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ContractError("add: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor out = Tensor::zeros(a.rows(), a.cols(), rg);
    kernels::add(a.data(), b.data(), out.data(), a.size());
    check_finite("add", out);
    if (rg) {
        Tensor ac = a, bc = b, oc = out;
        record([ac, bc, oc]() mutable {
            if (ac.requires_grad()) kernels::axpy(1.0, oc.grad(), ac.grad(), ac.size());
            if (bc.requires_grad()) kernels::axpy(1.0, oc.grad(), bc.grad(), bc.size());
        });
    }
    return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ContractError("sub: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor out = Tensor::zeros(a.rows(), a.cols(), rg);
    for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    check_finite("sub", out);
    if (rg) {
        Tensor ac = a, bc = b, oc = out;
        record([ac, bc, oc]() mutable {
            if (ac.requires_grad()) kernels::axpy(1.0, oc.grad(), ac.grad(), ac.size());
            if (bc.requires_grad()) kernels::axpy(-1.0, oc.grad(), bc.grad(), bc.size());
        });
    }
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ContractError("mul: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor out = Tensor::zeros(a.rows(), a.cols(), rg);
    kernels::mul(a.data(), b.data(), out.data(), a.size());
    check_finite("mul", out);
    if (rg) {
        Tensor ac = a, bc = b, oc = out;
        record([ac, bc, oc]() mutable {
            if (ac.requires_grad()) {
                for (size_t i = 0; i < ac.size(); ++i)
                    ac.grad()[i] += oc.grad()[i] * bc.data()[i];
            }
            if (bc.requires_grad()) {
                for (size_t i = 0; i < bc.size(); ++i)
                    bc.grad()[i] += oc.grad()[i] * ac.data()[i];
            }
        });
    }
    return out;
}

Tensor Tape::div_const(const Tensor& a, const Tensor& denom) {
    if (a.rows() != denom.rows() || a.cols() != denom.cols())
        throw ContractError("div_const: shape mismatch " + shape_str(a) + " vs " + shape_str(denom));
    if (denom.requires_grad())
        throw ContractError("div_const: denominator must be a constant");
    Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
    for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] / denom.data()[i];
    check_finite("div_const", out);
    if (a.requires_grad()) {
        Tensor ac = a, dc = denom, oc = out;
        record([ac, dc, oc]() mutable {
            for (size_t i = 0; i < ac.size(); ++i)
                ac.grad()[i] += oc.grad()[i] / dc.data()[i];
        });
    }
    return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
    for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + c;
    check_finite("add_scalar", out);
    if (a.requires_grad()) {
        Tensor ac = a, oc = out;
        record([ac, oc]() mutable { kernels::axpy(1.0, oc.grad(), ac.grad(), ac.size()); });
    }
    return out;
}

Tensor Tape::mul_scalar(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
    kernels::scale(a.data(), c, out.data(), a.size());
    check_finite("mul_scalar", out);
    if (a.requires_grad()) {
        Tensor ac = a, oc = out;
        record([ac, oc, c]() mutable { kernels::axpy(c, oc.grad(), ac.grad(), ac.size()); });
    }
    return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ContractError("matmul: shape mismatch " + shape_str(a) + " * " + shape_str(b));
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor out = Tensor::zeros(a.rows(), b.cols(), rg);
    kernels::matmul(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
    check_finite("matmul", out);
    if (rg) {
        Tensor ac = a, bc = b, oc = out;
        record([ac, bc, oc]() mutable {
            if (ac.requires_grad())
                kernels::matmul_grad_a(oc.grad(), bc.data(), ac.grad(),
                                       ac.rows(), ac.cols(), bc.cols());
            if (bc.requires_grad())
                kernels::matmul_grad_b(oc.grad(), ac.data(), bc.grad(),
                                       ac.rows(), ac.cols(), bc.cols());
        });
    }
    return out;
}

Tensor Tape::scale_rows(const Tensor& x, const Tensor& s) {
    if (s.cols() != 1 || s.rows() != x.rows())
        throw ContractError("scale_rows: scales must be " + std::to_string(x.rows()) +
                            "x1, got " + shape_str(s));
    const bool rg = x.requires_grad() || s.requires_grad();
    Tensor out = Tensor::zeros(x.rows(), x.cols(), rg);
    kernels::scale_rows(x.data(), s.data(), out.data(), x.rows(), x.cols());
    check_finite("scale_rows", out);
    if (rg) {
        Tensor xc = x, sc = s, oc = out;
        record([xc, sc, oc]() mutable {
            std::vector<double> dx_dummy, ds_dummy;
            double* dx = xc.requires_grad() ? xc.grad() : nullptr;
            double* ds = sc.requires_grad() ? sc.grad() : nullptr;
            if (!dx) {
                dx_dummy.assign(xc.size(), 0.0);
                dx = dx_dummy.data();
            }
            if (!ds) {
                ds_dummy.assign(sc.size(), 0.0);
                ds = ds_dummy.data();
            }
            kernels::scale_rows_grad(oc.grad(), xc.data(), sc.data(), dx, ds,
                                     xc.rows(), xc.cols());
        });
    }
    return out;
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& v) {
    if (v.rows() != 1 || v.cols() != x.cols())
        throw ContractError("add_rowvec: bias must be 1x" + std::to_string(x.cols()) +
                            ", got " + shape_str(v));
    const bool rg = x.requires_grad() || v.requires_grad();
    Tensor out = Tensor::zeros(x.rows(), x.cols(), rg);
    kernels::add_rowvec(x.data(), v.data(), out.data(), x.rows(), x.cols());
    check_finite("add_rowvec", out);
    if (rg) {
        Tensor xc = x, vc = v, oc = out;
        record([xc, vc, oc]() mutable {
            if (xc.requires_grad()) kernels::axpy(1.0, oc.grad(), xc.grad(), xc.size());
            if (vc.requires_grad()) {
                for (int r = 0; r < oc.rows(); ++r)
                    for (int c = 0; c < oc.cols(); ++c)
                        vc.grad()[c] += oc.grad()[static_cast<size_t>(r) * oc.cols() + c];
            }
        });
    }
    return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows())
        throw ContractError("concat_cols: row mismatch " + shape_str(a) + " vs " + shape_str(b));
    const bool rg = a.requires_grad() || b.requires_grad();
    const int ca = a.cols(), cb = b.cols();
    Tensor out = Tensor::zeros(a.rows(), ca + cb, rg);
    for (int r = 0; r < a.rows(); ++r) {
        double* o = out.data() + static_cast<size_t>(r) * (ca + cb);
        const double* pa = a.data() + static_cast<size_t>(r) * ca;
        const double* pb = b.data() + static_cast<size_t>(r) * cb;
        for (int c = 0; c < ca; ++c) o[c] = pa[c];
        for (int c = 0; c < cb; ++c) o[ca + c] = pb[c];
    }
    check_finite("concat_cols", out);
    if (rg) {
        Tensor ac = a, bc = b, oc = out;
        record([ac, bc, oc, ca, cb]() mutable {
            for (int r = 0; r < ac.rows(); ++r) {
                const double* og = oc.grad() + static_cast<size_t>(r) * (ca + cb);
                if (ac.requires_grad()) {
                    double* ag = ac.grad() + static_cast<size_t>(r) * ca;
                    for (int c = 0; c < ca; ++c) ag[c] += og[c];
                }
                if (bc.requires_grad()) {
                    double* bg = bc.grad() + static_cast<size_t>(r) * cb;
                    for (int c = 0; c < cb; ++c) bg[c] += og[ca + c];
                }
            }
        });
    }
    return out;
}

Tensor Tape::reshape(const Tensor& x, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols != x.size())
        throw ContractError("reshape: cannot view " + shape_str(x) + " as " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    Tensor out = Tensor::zeros(rows, cols, x.requires_grad());
    out.values() = x.values();
    if (x.requires_grad()) {
        Tensor xc = x, oc = out;
        record([xc, oc]() mutable { kernels::axpy(1.0, oc.grad(), xc.grad(), xc.size()); });
    }
    return out;
}

Tensor Tape::sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols(), x.requires_grad());
    kernels::sigmoid(x.data(), out.data(), x.size());
    check_finite("sigmoid", out);
    if (x.requires_grad()) {
        Tensor xc = x, oc = out;
        record([xc, oc]() mutable {
            for (size_t i = 0; i < xc.size(); ++i) {
                const double s = oc.data()[i];
                xc.grad()[i] += oc.grad()[i] * s * (1.0 - s);
            }
        });
    }
    return out;
}

Tensor Tape::relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols(), x.requires_grad());
    kernels::relu(x.data(), out.data(), x.size());
    check_finite("relu", out);
    if (x.requires_grad()) {
        Tensor xc = x, oc = out;
        record([xc, oc]() mutable {
            for (size_t i = 0; i < xc.size(); ++i)
                if (xc.data()[i] > 0.0) xc.grad()[i] += oc.grad()[i];
        });
    }
    return out;
}

Tensor Tape::batch_norm(const Tensor& x, BatchNormState& state, bool training) {
    const int B = x.rows(), C = x.cols();
    if (state.gamma.cols() != C)
        throw ContractError("batch_norm: state has " + std::to_string(state.gamma.cols()) +
                            " channels, input is " + shape_str(x));
    const bool rg = x.requires_grad() || state.gamma.requires_grad() || state.beta.requires_grad();
    Tensor out = Tensor::zeros(B, C, rg);

    if (training) {
        if (B < 2) throw ContractError("batch_norm: training mode needs batch size >= 2");
        std::vector<double> mean(C, 0.0), var(C, 0.0), invstd(C, 0.0);
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int r = 0; r < B; ++r) acc += x.at(r, c);
            mean[c] = acc / B;
        }
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int r = 0; r < B; ++r) {
                const double d = x.at(r, c) - mean[c];
                acc += d * d;
            }
            var[c] = acc / B;
            invstd[c] = 1.0 / std::sqrt(var[c] + state.eps);
        }
        // xhat saved for backward
        auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(B) * C);
        for (int r = 0; r < B; ++r) {
            for (int c = 0; c < C; ++c) {
                const double h = (x.at(r, c) - mean[c]) * invstd[c];
                (*xhat)[static_cast<size_t>(r) * C + c] = h;
                out.at(r, c) = state.gamma.at(0, c) * h + state.beta.at(0, c);
            }
        }
        // running stats use the unbiased variance
        const double mom = state.momentum;
        const double unbias = static_cast<double>(B) / (B - 1);
        for (int c = 0; c < C; ++c) {
            state.running_mean[c] = (1.0 - mom) * state.running_mean[c] + mom * mean[c];
            state.running_var[c] = (1.0 - mom) * state.running_var[c] + mom * var[c] * unbias;
        }
        check_finite("batch_norm", out);
        if (rg) {
            Tensor xc = x, gc = state.gamma, bc = state.beta, oc = out;
            std::vector<double> istd = invstd;
            record([xc, gc, bc, oc, xhat, istd, B, C]() mutable {
                std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
                for (int r = 0; r < B; ++r) {
                    for (int c = 0; c < C; ++c) {
                        const double dy = oc.grad()[static_cast<size_t>(r) * C + c];
                        sum_dy[c] += dy;
                        sum_dy_xhat[c] += dy * (*xhat)[static_cast<size_t>(r) * C + c];
                    }
                }
                if (gc.requires_grad())
                    for (int c = 0; c < C; ++c) gc.grad()[c] += sum_dy_xhat[c];
                if (bc.requires_grad())
                    for (int c = 0; c < C; ++c) bc.grad()[c] += sum_dy[c];
                if (xc.requires_grad()) {
                    for (int r = 0; r < B; ++r) {
                        for (int c = 0; c < C; ++c) {
                            const size_t i = static_cast<size_t>(r) * C + c;
                            const double dxhat = oc.grad()[i] * gc.data()[c];
                            xc.grad()[i] += istd[c] / B *
                                            (B * dxhat - sum_dy[c] * gc.data()[c] -
                                             (*xhat)[i] * sum_dy_xhat[c] * gc.data()[c]);
                        }
                    }
                }
            });
        }
        return out;
    }

    // eval mode: normalize with running averages
    std::vector<double> inv_r(C);
    for (int c = 0; c < C; ++c) inv_r[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    for (int r = 0; r < B; ++r)
        for (int c = 0; c < C; ++c)
            out.at(r, c) = state.gamma.at(0, c) * (x.at(r, c) - state.running_mean[c]) * inv_r[c] +
                           state.beta.at(0, c);
    check_finite("batch_norm", out);
    if (rg) {
        Tensor xc = x, gc = state.gamma, bc = state.beta, oc = out;
        std::vector<double> rm = state.running_mean;
        record([xc, gc, bc, oc, inv_r, rm, B, C]() mutable {
            for (int r = 0; r < B; ++r) {
                for (int c = 0; c < C; ++c) {
                    const size_t i = static_cast<size_t>(r) * C + c;
                    const double dy = oc.grad()[i];
                    if (xc.requires_grad()) xc.grad()[i] += dy * gc.data()[c] * inv_r[c];
                    if (gc.requires_grad())
                        gc.grad()[c] += dy * (xc.data()[i] - rm[c]) * inv_r[c];
                    if (bc.requires_grad()) bc.grad()[c] += dy;
                }
            }
        });
    }
    return out;
}

Tensor Tape::sum(const Tensor& x) {
    Tensor out = Tensor::zeros(1, 1, x.requires_grad());
    out.data()[0] = kernels::reduce_sum(x.data(), x.size());
    check_finite("sum", out);
    if (x.requires_grad()) {
        Tensor xc = x, oc = out;
        record([xc, oc]() mutable {
            const double g = oc.grad()[0];
            for (size_t i = 0; i < xc.size(); ++i) xc.grad()[i] += g;
        });
    }
    return out;
}

Tensor Tape::mean(const Tensor& x) {
    Tensor out = Tensor::zeros(1, 1, x.requires_grad());
    out.data()[0] = kernels::reduce_sum(x.data(), x.size()) / static_cast<double>(x.size());
    check_finite("mean", out);
    if (x.requires_grad()) {
        Tensor xc = x, oc = out;
        record([xc, oc]() mutable {
            const double g = oc.grad()[0] / static_cast<double>(xc.size());
            for (size_t i = 0; i < xc.size(); ++i) xc.grad()[i] += g;
        });
    }
    return out;
}

Tensor Tape::row_sum(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), 1, x.requires_grad());
    for (int r = 0; r < x.rows(); ++r) {
        double acc = 0.0;
        for (int c = 0; c < x.cols(); ++c) acc += x.at(r, c);
        out.at(r, 0) = acc;
    }
    check_finite("row_sum", out);
    if (x.requires_grad()) {
        Tensor xc = x, oc = out;
        record([xc, oc]() mutable {
            for (int r = 0; r < xc.rows(); ++r) {
                const double g = oc.grad()[r];
                for (int c = 0; c < xc.cols(); ++c)
                    xc.grad()[static_cast<size_t>(r) * xc.cols() + c] += g;
            }
        });
    }
    return out;
}

Tensor Tape::pairwise_inner(const Tensor& x, int fields, int d) {
    if (x.cols() != fields * d)
        throw ContractError("pairwise_inner: input " + shape_str(x) + " is not batch x (" +
                            std::to_string(fields) + "*" + std::to_string(d) + ")");
    const int npairs = fields * (fields - 1) / 2;
    Tensor out = Tensor::zeros(x.rows(), npairs, x.requires_grad());
    if (npairs > 0)
        kernels::pairwise_inner(x.data(), out.data(), x.rows(), fields, d);
    check_finite("pairwise_inner", out);
    if (x.requires_grad() && npairs > 0) {
        Tensor xc = x, oc = out;
        record([xc, oc, fields, d]() mutable {
            kernels::pairwise_inner_grad(oc.grad(), xc.data(), xc.grad(),
                                         xc.rows(), fields, d);
        });
    }
    return out;
}

Tensor Tape::bce_with_logits(const Tensor& logits, const std::vector<double>& labels) {
    if (logits.cols() != 1 || static_cast<size_t>(logits.rows()) != labels.size())
        throw ContractError("bce_with_logits: logits " + shape_str(logits) + " vs " +
                            std::to_string(labels.size()) + " labels");
    const int B = logits.rows();
    Tensor out = Tensor::zeros(1, 1, logits.requires_grad());
    double acc = 0.0;
    for (int r = 0; r < B; ++r) {
        const double z = logits.data()[r];
        const double y = labels[r];
        acc += (z > 0.0 ? z : 0.0) - y * z + std::log1p(std::exp(-std::fabs(z)));
    }
    out.data()[0] = acc / B;
    check_finite("bce_with_logits", out);
    if (logits.requires_grad()) {
        Tensor lc = logits, oc = out;
        std::vector<double> ycap = labels;
        record([lc, oc, ycap, B]() mutable {
            const double g = oc.grad()[0] / B;
            for (int r = 0; r < B; ++r)
                lc.grad()[r] += g * (sigmoid_scalar(lc.data()[r]) - ycap[r]);
        });
    }
    return out;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
    if (nodes_.empty()) throw ContractError("backward: tape is empty");
    if (backward_done_) throw ContractError("backward: called twice without a new forward");
    backward_done_ = true;
    if (!loss.requires_grad())
        throw ContractError("backward: loss does not depend on any tracked tensor");
    Tensor l = loss;
    l.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
}

}  // namespace optfs
