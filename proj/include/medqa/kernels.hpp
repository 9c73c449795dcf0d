#pragma once

#include <vector>

#include "medqa/matrix.hpp"

// Numeric kernels behind the classifier and the BM25 scan.
//
// Every kernel exists twice: kernels::serial holds the plain reference
// loops, kernels::omp the OpenMP versions. Both produce bit-identical
// output for any thread count: parallel loops run over independent output
// elements and every floating-point reduction happens serially in a fixed
// order inside one iteration. Tests compare the two namespaces bitwise;
// tools/bench_kernels times them against each other.
//
// The top-level dispatch functions pick omp when the build has OpenMP and
// MEDQA_SERIAL is not set.

namespace medqa::kernels {

bool parallel_enabled();
void set_parallel(bool on);

#define MEDQA_KERNEL_DECLS                                                                         \
  /* pre[f][i] = <W_f, D[i..i+win-1]> + b[f], for i in [0, l-win] */                               \
  void conv_forward(const Matrix& D, const Matrix& W, const std::vector<double>& b, int win,       \
                    Matrix& pre);                                                                  \
  /* dW[f] += sum_e sum_i dpre_e[f][i] * chunk(D_e, i); db[f] += sum dpre_e[f][.] */               \
  void conv_backward_filters(const std::vector<Matrix>& Ds, const std::vector<Matrix>& dpres,      \
                             int win, Matrix& dW, std::vector<double>& db);                        \
  /* dD[r][c] += sum_f sum_{i covering r} dpre[f][i] * W[f][(r-i)*h + c] */                        \
  void conv_backward_data(const Matrix& W, const Matrix& dpre, int win, Matrix& dD);               \
  /* per-row mean and biased variance over the columns of every slab */                            \
  void bn_stats(const std::vector<const Matrix*>& slabs, std::vector<double>& mean,                \
                std::vector<double>& var);                                                         \
  /* xhat = (x-mean)/sqrt(var+eps); out = gamma*xhat + beta, row-wise */                           \
  void bn_apply(const Matrix& in, const std::vector<double>& mean, const std::vector<double>& var, \
                const std::vector<double>& gamma, const std::vector<double>& beta, double eps,     \
                Matrix& xhat, Matrix& out);                                                        \
  /* sum_dy[f] = sum dy; sum_dy_xhat[f] = sum dy*xhat, over all slabs */                           \
  void bn_backward_sums(const std::vector<const Matrix*>& dys,                                     \
                        const std::vector<const Matrix*>& xhats, std::vector<double>& sum_dy,      \
                        std::vector<double>& sum_dy_xhat);                                         \
  /* dx = gamma/sqrt(var+eps)/N * (N*dy - sum_dy - xhat*sum_dy_xhat) */                            \
  void bn_backward_data(const Matrix& dy, const Matrix& xhat, const std::vector<double>& gamma,    \
                        const std::vector<double>& var, double eps, int64_t group_size,            \
                        const std::vector<double>& sum_dy, const std::vector<double>& sum_dy_xhat, \
                        Matrix& dx);                                                               \
  /* out[r] = max over row r, arg[r] = first argmax */                                             \
  void maxpool_rows(const Matrix& in, std::vector<double>& out, std::vector<int>& arg);            \
  /* y[u] = dot(W[u], x) + b[u] */                                                                 \
  void matvec(const Matrix& W, const std::vector<double>& x, const std::vector<double>& b,         \
              std::vector<double>& y);                                                             \
  /* dW[u] += dy[u]*x; db[u] += dy[u] */                                                           \
  void matvec_backward_params(const std::vector<double>& dy, const std::vector<double>& x,         \
                              Matrix& dW, std::vector<double>& db);                                \
  /* dx[c] = sum_u W[u][c]*dy[u] */                                                                \
  void matvec_backward_data(const Matrix& W, const std::vector<double>& dy,                        \
                            std::vector<double>& dx);                                              \
  /* dT[indices[r]] += dD[r], accumulated in row order per column */                               \
  void embed_scatter_add(const std::vector<int>& indices, const Matrix& dD, Matrix& dT);

namespace serial {
MEDQA_KERNEL_DECLS
}
namespace omp {
MEDQA_KERNEL_DECLS
}

// Dispatchers used by the model code.
MEDQA_KERNEL_DECLS

#undef MEDQA_KERNEL_DECLS

}  // namespace medqa::kernels
