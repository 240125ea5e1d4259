#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

// Dense numeric kernels behind the autodiff ops. Every kernel has a serial
// reference implementation and an OpenMP one; results are bit-identical
// regardless of mode or thread count (reductions use fixed chunking, and each
// parallel output element is produced by exactly one thread in the serial
// arithmetic order).

namespace optfs::kernels {

enum class Mode { Serial, Parallel };

void set_mode(Mode m);
Mode mode();
bool openmp_available();
int max_threads();

// C[r,c] = sum_k A[r,k] * B[k,c]   (A: rows x inner, B: inner x cols, row-major)
void matmul(const double* a, const double* b, double* out, int rows, int inner, int cols);

// dA[r,k] += sum_c dC[r,c] * B[k,c]
void matmul_grad_a(const double* dout, const double* b, double* da, int rows, int inner, int cols);

// dB[k,c] += sum_r A[r,k] * dC[r,c]
void matmul_grad_b(const double* dout, const double* a, double* db, int rows, int inner, int cols);

void add(const double* a, const double* b, double* out, size_t n);
void mul(const double* a, const double* b, double* out, size_t n);

// out[r,c] = x[r,c] * s[r]
void scale_rows(const double* x, const double* s, double* out, int rows, int cols);
// grads of scale_rows: dx[r,c] += dout[r,c]*s[r]; ds[r] += sum_c dout[r,c]*x[r,c]
void scale_rows_grad(const double* dout, const double* x, const double* s,
                     double* dx, double* ds, int rows, int cols);

// out[r,c] = x[r,c] + v[c]
void add_rowvec(const double* x, const double* v, double* out, int rows, int cols);

void sigmoid(const double* x, double* out, size_t n);
void relu(const double* x, double* out, size_t n);

void axpy(double alpha, const double* x, double* y, size_t n);  // y += alpha*x
void scale(const double* x, double c, double* out, size_t n);   // out = c*x

// Deterministic sum: fixed-size chunk partial sums combined in index order.
// Independent of mode and thread count.
double reduce_sum(const double* x, size_t n);

// v[b,p] = <x[b, i*d .. ], x[b, j*d .. ]> for pairs p=(i,j), i<j, enumerated
// lexicographically. x is batch x (fields*d).
void pairwise_inner(const double* x, double* v, int batch, int fields, int d);
void pairwise_inner_grad(const double* dv, const double* x, double* dx,
                         int batch, int fields, int d);

// rows gathered from a table (table: m x cols), idx values in [0,m)
void gather_rows(const double* table, const uint32_t* idx, double* out, int n, int cols);
// scatter-add of row grads back into the table grad; serial by contract
// (deterministic accumulation order; rows collide under parallelism)
void scatter_add_rows(const double* dout, const uint32_t* idx, double* dtable, int n, int cols);

bool all_finite(const double* x, size_t n);

}  // namespace optfs::kernels
