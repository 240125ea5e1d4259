#include "optfs/kernels.hpp"

#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "optfs/common.hpp"

namespace optfs::kernels {

namespace {

Mode g_mode = Mode::Parallel;

inline bool par() {
#ifdef _OPENMP
    return g_mode == Mode::Parallel;
#else
    return false;
#endif
}

constexpr size_t kReduceChunk = 4096;

}  // namespace

void set_mode(Mode m) { g_mode = m; }
Mode mode() { return g_mode; }

bool openmp_available() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul(const double* a, const double* b, double* out, int rows, int inner, int cols) {
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            double* orow = out + static_cast<size_t>(r) * cols;
            const double* arow = a + static_cast<size_t>(r) * inner;
            for (int c = 0; c < cols; ++c) orow[c] = 0.0;
            for (int k = 0; k < inner; ++k) {
                const double av = arow[k];
                const double* brow = b + static_cast<size_t>(k) * cols;
                for (int c = 0; c < cols; ++c) orow[c] += av * brow[c];
            }
        }
        return;
    }
    for (int r = 0; r < rows; ++r) {
        double* orow = out + static_cast<size_t>(r) * cols;
        const double* arow = a + static_cast<size_t>(r) * inner;
        for (int c = 0; c < cols; ++c) orow[c] = 0.0;
        for (int k = 0; k < inner; ++k) {
            const double av = arow[k];
            const double* brow = b + static_cast<size_t>(k) * cols;
            for (int c = 0; c < cols; ++c) orow[c] += av * brow[c];
        }
    }
}

void matmul_grad_a(const double* dout, const double* b, double* da, int rows, int inner, int cols) {
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const double* drow = dout + static_cast<size_t>(r) * cols;
            double* darow = da + static_cast<size_t>(r) * inner;
            for (int k = 0; k < inner; ++k) {
                const double* brow = b + static_cast<size_t>(k) * cols;
                double acc = 0.0;
                for (int c = 0; c < cols; ++c) acc += drow[c] * brow[c];
                darow[k] += acc;
            }
        }
        return;
    }
    for (int r = 0; r < rows; ++r) {
        const double* drow = dout + static_cast<size_t>(r) * cols;
        double* darow = da + static_cast<size_t>(r) * inner;
        for (int k = 0; k < inner; ++k) {
            const double* brow = b + static_cast<size_t>(k) * cols;
            double acc = 0.0;
            for (int c = 0; c < cols; ++c) acc += drow[c] * brow[c];
            darow[k] += acc;
        }
    }
}

void matmul_grad_b(const double* dout, const double* a, double* db, int rows, int inner, int cols) {
    // parallel over k: each dB row is owned by one thread, accumulation over r
    // stays in serial row order
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int k = 0; k < inner; ++k) {
            double* dbrow = db + static_cast<size_t>(k) * cols;
            for (int r = 0; r < rows; ++r) {
                const double av = a[static_cast<size_t>(r) * inner + k];
                const double* drow = dout + static_cast<size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) dbrow[c] += av * drow[c];
            }
        }
        return;
    }
    for (int k = 0; k < inner; ++k) {
        double* dbrow = db + static_cast<size_t>(k) * cols;
        for (int r = 0; r < rows; ++r) {
            const double av = a[static_cast<size_t>(r) * inner + k];
            const double* drow = dout + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) dbrow[c] += av * drow[c];
        }
    }
}

#define OPTFS_ELEMENTWISE(expr)                                   \
    if (par()) {                                                  \
        _Pragma("omp parallel for schedule(static)")              \
        for (long long i = 0; i < static_cast<long long>(n); ++i) \
            expr;                                                 \
        return;                                                   \
    }                                                             \
    for (long long i = 0; i < static_cast<long long>(n); ++i) expr;

void add(const double* a, const double* b, double* out, size_t n) {
    OPTFS_ELEMENTWISE(out[i] = a[i] + b[i])
}

void mul(const double* a, const double* b, double* out, size_t n) {
    OPTFS_ELEMENTWISE(out[i] = a[i] * b[i])
}

void sigmoid(const double* x, double* out, size_t n) {
    OPTFS_ELEMENTWISE(out[i] = sigmoid_scalar(x[i]))
}

void relu(const double* x, double* out, size_t n) {
    OPTFS_ELEMENTWISE(out[i] = x[i] > 0.0 ? x[i] : 0.0)
}

void axpy(double alpha, const double* x, double* y, size_t n) {
    OPTFS_ELEMENTWISE(y[i] += alpha * x[i])
}

void scale(const double* x, double c, double* out, size_t n) {
    OPTFS_ELEMENTWISE(out[i] = c * x[i])
}

#undef OPTFS_ELEMENTWISE

void scale_rows(const double* x, const double* s, double* out, int rows, int cols) {
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const double sv = s[r];
            const double* xr = x + static_cast<size_t>(r) * cols;
            double* orow = out + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) orow[c] = sv * xr[c];
        }
        return;
    }
    for (int r = 0; r < rows; ++r) {
        const double sv = s[r];
        const double* xr = x + static_cast<size_t>(r) * cols;
        double* orow = out + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) orow[c] = sv * xr[c];
    }
}

void scale_rows_grad(const double* dout, const double* x, const double* s,
                     double* dx, double* ds, int rows, int cols) {
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const double sv = s[r];
            const double* dr = dout + static_cast<size_t>(r) * cols;
            const double* xr = x + static_cast<size_t>(r) * cols;
            double* dxr = dx + static_cast<size_t>(r) * cols;
            double acc = 0.0;
            for (int c = 0; c < cols; ++c) {
                dxr[c] += dr[c] * sv;
                acc += dr[c] * xr[c];
            }
            ds[r] += acc;
        }
        return;
    }
    for (int r = 0; r < rows; ++r) {
        const double sv = s[r];
        const double* dr = dout + static_cast<size_t>(r) * cols;
        const double* xr = x + static_cast<size_t>(r) * cols;
        double* dxr = dx + static_cast<size_t>(r) * cols;
        double acc = 0.0;
        for (int c = 0; c < cols; ++c) {
            dxr[c] += dr[c] * sv;
            acc += dr[c] * xr[c];
        }
        ds[r] += acc;
    }
}

void add_rowvec(const double* x, const double* v, double* out, int rows, int cols) {
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const double* xr = x + static_cast<size_t>(r) * cols;
            double* orow = out + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) orow[c] = xr[c] + v[c];
        }
        return;
    }
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<size_t>(r) * cols;
        double* orow = out + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) orow[c] = xr[c] + v[c];
    }
}

double reduce_sum(const double* x, size_t n) {
    const size_t nchunks = (n + kReduceChunk - 1) / kReduceChunk;
    if (nchunks <= 1) {
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) acc += x[i];
        return acc;
    }
    std::vector<double> partial(nchunks, 0.0);
    if (par()) {
#pragma omp parallel for schedule(static)
        for (long long ci = 0; ci < static_cast<long long>(nchunks); ++ci) {
            const size_t lo = static_cast<size_t>(ci) * kReduceChunk;
            const size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
            double acc = 0.0;
            for (size_t i = lo; i < hi; ++i) acc += x[i];
            partial[ci] = acc;
        }
    } else {
        for (size_t ci = 0; ci < nchunks; ++ci) {
            const size_t lo = ci * kReduceChunk;
            const size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
            double acc = 0.0;
            for (size_t i = lo; i < hi; ++i) acc += x[i];
            partial[ci] = acc;
        }
    }
    double total = 0.0;
    for (size_t ci = 0; ci < nchunks; ++ci) total += partial[ci];
    return total;
}

void pairwise_inner(const double* x, double* v, int batch, int fields, int d) {
    const int npairs = fields * (fields - 1) / 2;
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int b = 0; b < batch; ++b) {
            const double* xb = x + static_cast<size_t>(b) * fields * d;
            double* vb = v + static_cast<size_t>(b) * npairs;
            int p = 0;
            for (int i = 0; i < fields; ++i) {
                for (int j = i + 1; j < fields; ++j, ++p) {
                    double acc = 0.0;
                    for (int k = 0; k < d; ++k) acc += xb[i * d + k] * xb[j * d + k];
                    vb[p] = acc;
                }
            }
        }
        return;
    }
    for (int b = 0; b < batch; ++b) {
        const double* xb = x + static_cast<size_t>(b) * fields * d;
        double* vb = v + static_cast<size_t>(b) * npairs;
        int p = 0;
        for (int i = 0; i < fields; ++i) {
            for (int j = i + 1; j < fields; ++j, ++p) {
                double acc = 0.0;
                for (int k = 0; k < d; ++k) acc += xb[i * d + k] * xb[j * d + k];
                vb[p] = acc;
            }
        }
    }
}

void pairwise_inner_grad(const double* dv, const double* x, double* dx,
                         int batch, int fields, int d) {
    const int npairs = fields * (fields - 1) / 2;
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int b = 0; b < batch; ++b) {
            const double* xb = x + static_cast<size_t>(b) * fields * d;
            const double* dvb = dv + static_cast<size_t>(b) * npairs;
            double* dxb = dx + static_cast<size_t>(b) * fields * d;
            int p = 0;
            for (int i = 0; i < fields; ++i) {
                for (int j = i + 1; j < fields; ++j, ++p) {
                    const double g = dvb[p];
                    for (int k = 0; k < d; ++k) {
                        dxb[i * d + k] += g * xb[j * d + k];
                        dxb[j * d + k] += g * xb[i * d + k];
                    }
                }
            }
        }
        return;
    }
    for (int b = 0; b < batch; ++b) {
        const double* xb = x + static_cast<size_t>(b) * fields * d;
        const double* dvb = dv + static_cast<size_t>(b) * npairs;
        double* dxb = dx + static_cast<size_t>(b) * fields * d;
        int p = 0;
        for (int i = 0; i < fields; ++i) {
            for (int j = i + 1; j < fields; ++j, ++p) {
                const double g = dvb[p];
                for (int k = 0; k < d; ++k) {
                    dxb[i * d + k] += g * xb[j * d + k];
                    dxb[j * d + k] += g * xb[i * d + k];
                }
            }
        }
    }
}

void gather_rows(const double* table, const uint32_t* idx, double* out, int n, int cols) {
    if (par()) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < n; ++r) {
            std::memcpy(out + static_cast<size_t>(r) * cols,
                        table + static_cast<size_t>(idx[r]) * cols,
                        sizeof(double) * cols);
        }
        return;
    }
    for (int r = 0; r < n; ++r) {
        std::memcpy(out + static_cast<size_t>(r) * cols,
                    table + static_cast<size_t>(idx[r]) * cols,
                    sizeof(double) * cols);
    }
}

void scatter_add_rows(const double* dout, const uint32_t* idx, double* dtable, int n, int cols) {
    // rows may repeat; accumulate serially in record order
    for (int r = 0; r < n; ++r) {
        double* trow = dtable + static_cast<size_t>(idx[r]) * cols;
        const double* drow = dout + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) trow[c] += drow[c];
    }
}

bool all_finite(const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

}  // namespace optfs::kernels
