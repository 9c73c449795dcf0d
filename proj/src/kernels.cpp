#include "medqa/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace medqa::kernels {

namespace {
bool g_parallel = [] {
#ifdef _OPENMP
  return std::getenv("MEDQA_SERIAL") == nullptr;
#else
  return false;
#endif
}();
}  // namespace

bool parallel_enabled() { return g_parallel; }
void set_parallel(bool on) { g_parallel = on; }

// ---------------------------------------------------------------------------
// serial reference implementations
// ---------------------------------------------------------------------------

namespace serial {

void conv_forward(const Matrix& D, const Matrix& W, const std::vector<double>& b, int win,
                  Matrix& pre) {
  const int filters = W.rows;
  const int h = D.cols;
  const int positions = D.rows - win + 1;
  if (positions < 1) throw std::invalid_argument("conv_forward: sequence shorter than window");
  pre = Matrix(filters, positions);
  for (int f = 0; f < filters; ++f) {
    const double* w = W.row(f);
    for (int i = 0; i < positions; ++i) {
      double acc = 0.0;
      for (int r = 0; r < win; ++r) {
        const double* d = D.row(i + r);
        const double* wr = w + static_cast<size_t>(r) * h;
        for (int c = 0; c < h; ++c) acc += wr[c] * d[c];
      }
      pre.at(f, i) = acc + b[f];
    }
  }
}

void conv_backward_filters(const std::vector<Matrix>& Ds, const std::vector<Matrix>& dpres,
                           int win, Matrix& dW, std::vector<double>& db) {
  const int filters = dW.rows;
  const int h = Ds.empty() ? 0 : Ds[0].cols;
  for (int f = 0; f < filters; ++f) {
    double* wgrad = dW.row(f);
    double bgrad = 0.0;
    for (size_t e = 0; e < Ds.size(); ++e) {
      const Matrix& D = Ds[e];
      const Matrix& dpre = dpres[e];
      const int positions = dpre.cols;
      for (int i = 0; i < positions; ++i) {
        const double g = dpre.at(f, i);
        if (g == 0.0) {
          continue;
        }
        bgrad += g;
        for (int r = 0; r < win; ++r) {
          const double* d = D.row(i + r);
          double* wr = wgrad + static_cast<size_t>(r) * h;
          for (int c = 0; c < h; ++c) wr[c] += g * d[c];
        }
      }
    }
    db[f] += bgrad;
  }
}

void conv_backward_data(const Matrix& W, const Matrix& dpre, int win, Matrix& dD) {
  const int filters = W.rows;
  const int h = dD.cols;
  const int positions = dpre.cols;
  for (int r = 0; r < dD.rows; ++r) {
    double* drow = dD.row(r);
    for (int f = 0; f < filters; ++f) {
      const double* w = W.row(f);
      const int lo = std::max(0, r - win + 1);
      const int hi = std::min(positions - 1, r);
      for (int i = lo; i <= hi; ++i) {
        const double g = dpre.at(f, i);
        if (g == 0.0) continue;
        const double* wr = w + static_cast<size_t>(r - i) * h;
        for (int c = 0; c < h; ++c) drow[c] += g * wr[c];
      }
    }
  }
}

void bn_stats(const std::vector<const Matrix*>& slabs, std::vector<double>& mean,
              std::vector<double>& var) {
  const int rows = slabs.empty() ? 0 : slabs[0]->rows;
  mean.assign(rows, 0.0);
  var.assign(rows, 0.0);
  int64_t count = 0;
  for (const Matrix* m : slabs) count += m->cols;
  if (count == 0) return;
  for (int f = 0; f < rows; ++f) {
    double sum = 0.0;
    for (const Matrix* m : slabs) {
      const double* row = m->row(f);
      for (int i = 0; i < m->cols; ++i) sum += row[i];
    }
    const double mu = sum / static_cast<double>(count);
    double sq = 0.0;
    for (const Matrix* m : slabs) {
      const double* row = m->row(f);
      for (int i = 0; i < m->cols; ++i) {
        const double d = row[i] - mu;
        sq += d * d;
      }
    }
    mean[f] = mu;
    var[f] = sq / static_cast<double>(count);
  }
}

void bn_apply(const Matrix& in, const std::vector<double>& mean, const std::vector<double>& var,
              const std::vector<double>& gamma, const std::vector<double>& beta, double eps,
              Matrix& xhat, Matrix& out) {
  xhat = Matrix(in.rows, in.cols);
  out = Matrix(in.rows, in.cols);
  for (int f = 0; f < in.rows; ++f) {
    const double inv = 1.0 / std::sqrt(var[f] + eps);
    const double* src = in.row(f);
    double* xh = xhat.row(f);
    double* dst = out.row(f);
    for (int i = 0; i < in.cols; ++i) {
      xh[i] = (src[i] - mean[f]) * inv;
      dst[i] = gamma[f] * xh[i] + beta[f];
    }
  }
}

void bn_backward_sums(const std::vector<const Matrix*>& dys, const std::vector<const Matrix*>& xhats,
                      std::vector<double>& sum_dy, std::vector<double>& sum_dy_xhat) {
  const int rows = dys.empty() ? 0 : dys[0]->rows;
  sum_dy.assign(rows, 0.0);
  sum_dy_xhat.assign(rows, 0.0);
  for (int f = 0; f < rows; ++f) {
    double sd = 0.0, sdx = 0.0;
    for (size_t e = 0; e < dys.size(); ++e) {
      const double* dy = dys[e]->row(f);
      const double* xh = xhats[e]->row(f);
      for (int i = 0; i < dys[e]->cols; ++i) {
        sd += dy[i];
        sdx += dy[i] * xh[i];
      }
    }
    sum_dy[f] = sd;
    sum_dy_xhat[f] = sdx;
  }
}

void bn_backward_data(const Matrix& dy, const Matrix& xhat, const std::vector<double>& gamma,
                      const std::vector<double>& var, double eps, int64_t group_size,
                      const std::vector<double>& sum_dy, const std::vector<double>& sum_dy_xhat,
                      Matrix& dx) {
  dx = Matrix(dy.rows, dy.cols);
  const double n = static_cast<double>(group_size);
  for (int f = 0; f < dy.rows; ++f) {
    const double scale = gamma[f] / std::sqrt(var[f] + eps) / n;
    const double* g = dy.row(f);
    const double* xh = xhat.row(f);
    double* d = dx.row(f);
    for (int i = 0; i < dy.cols; ++i)
      d[i] = scale * (n * g[i] - sum_dy[f] - xh[i] * sum_dy_xhat[f]);
  }
}

void maxpool_rows(const Matrix& in, std::vector<double>& out, std::vector<int>& arg) {
  out.assign(in.rows, 0.0);
  arg.assign(in.rows, 0);
  for (int f = 0; f < in.rows; ++f) {
    const double* row = in.row(f);
    double best = row[0];
    int besti = 0;
    for (int i = 1; i < in.cols; ++i) {
      if (row[i] > best) {
        best = row[i];
        besti = i;
      }
    }
    out[f] = best;
    arg[f] = besti;
  }
}

void matvec(const Matrix& W, const std::vector<double>& x, const std::vector<double>& b,
            std::vector<double>& y) {
  y.assign(W.rows, 0.0);
  for (int u = 0; u < W.rows; ++u) {
    const double* w = W.row(u);
    double acc = 0.0;
    for (int c = 0; c < W.cols; ++c) acc += w[c] * x[c];
    y[u] = acc + b[u];
  }
}

void matvec_backward_params(const std::vector<double>& dy, const std::vector<double>& x,
                            Matrix& dW, std::vector<double>& db) {
  for (int u = 0; u < dW.rows; ++u) {
    const double g = dy[u];
    if (g == 0.0) continue;
    double* w = dW.row(u);
    for (int c = 0; c < dW.cols; ++c) w[c] += g * x[c];
    db[u] += g;
  }
}

void matvec_backward_data(const Matrix& W, const std::vector<double>& dy, std::vector<double>& dx) {
  dx.assign(W.cols, 0.0);
  for (int c = 0; c < W.cols; ++c) {
    double acc = 0.0;
    for (int u = 0; u < W.rows; ++u) acc += W.at(u, c) * dy[u];
    dx[c] = acc;
  }
}

void embed_scatter_add(const std::vector<int>& indices, const Matrix& dD, Matrix& dT) {
  for (int c = 0; c < dD.cols; ++c) {
    for (int r = 0; r < dD.rows; ++r) {
      dT.at(indices[r], c) += dD.at(r, c);
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP implementations. Loops run over independent output elements; all
// reductions stay serial inside one iteration, so results match the serial
// reference bit for bit at any thread count.
// ---------------------------------------------------------------------------

namespace omp {

void conv_forward(const Matrix& D, const Matrix& W, const std::vector<double>& b, int win,
                  Matrix& pre) {
  const int filters = W.rows;
  const int h = D.cols;
  const int positions = D.rows - win + 1;
  if (positions < 1) throw std::invalid_argument("conv_forward: sequence shorter than window");
  pre = Matrix(filters, positions);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < filters; ++f) {
    const double* w = W.row(f);
    for (int i = 0; i < positions; ++i) {
      double acc = 0.0;
      for (int r = 0; r < win; ++r) {
        const double* d = D.row(i + r);
        const double* wr = w + static_cast<size_t>(r) * h;
        for (int c = 0; c < h; ++c) acc += wr[c] * d[c];
      }
      pre.at(f, i) = acc + b[f];
    }
  }
}

void conv_backward_filters(const std::vector<Matrix>& Ds, const std::vector<Matrix>& dpres,
                           int win, Matrix& dW, std::vector<double>& db) {
  const int filters = dW.rows;
  const int h = Ds.empty() ? 0 : Ds[0].cols;
#pragma omp parallel for schedule(static)
  for (int f = 0; f < filters; ++f) {
    double* wgrad = dW.row(f);
    double bgrad = 0.0;
    for (size_t e = 0; e < Ds.size(); ++e) {
      const Matrix& D = Ds[e];
      const Matrix& dpre = dpres[e];
      const int positions = dpre.cols;
      for (int i = 0; i < positions; ++i) {
        const double g = dpre.at(f, i);
        if (g == 0.0) {
          continue;
        }
        bgrad += g;
        for (int r = 0; r < win; ++r) {
          const double* d = D.row(i + r);
          double* wr = wgrad + static_cast<size_t>(r) * h;
          for (int c = 0; c < h; ++c) wr[c] += g * d[c];
        }
      }
    }
    db[f] += bgrad;
  }
}

void conv_backward_data(const Matrix& W, const Matrix& dpre, int win, Matrix& dD) {
  const int filters = W.rows;
  const int h = dD.cols;
  const int positions = dpre.cols;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < dD.rows; ++r) {
    double* drow = dD.row(r);
    for (int f = 0; f < filters; ++f) {
      const double* w = W.row(f);
      const int lo = std::max(0, r - win + 1);
      const int hi = std::min(positions - 1, r);
      for (int i = lo; i <= hi; ++i) {
        const double g = dpre.at(f, i);
        if (g == 0.0) continue;
        const double* wr = w + static_cast<size_t>(r - i) * h;
        for (int c = 0; c < h; ++c) drow[c] += g * wr[c];
      }
    }
  }
}

void bn_stats(const std::vector<const Matrix*>& slabs, std::vector<double>& mean,
              std::vector<double>& var) {
  const int rows = slabs.empty() ? 0 : slabs[0]->rows;
  mean.assign(rows, 0.0);
  var.assign(rows, 0.0);
  int64_t count = 0;
  for (const Matrix* m : slabs) count += m->cols;
  if (count == 0) return;
#pragma omp parallel for schedule(static)
  for (int f = 0; f < rows; ++f) {
    double sum = 0.0;
    for (const Matrix* m : slabs) {
      const double* row = m->row(f);
      for (int i = 0; i < m->cols; ++i) sum += row[i];
    }
    const double mu = sum / static_cast<double>(count);
    double sq = 0.0;
    for (const Matrix* m : slabs) {
      const double* row = m->row(f);
      for (int i = 0; i < m->cols; ++i) {
        const double d = row[i] - mu;
        sq += d * d;
      }
    }
    mean[f] = mu;
    var[f] = sq / static_cast<double>(count);
  }
}

void bn_apply(const Matrix& in, const std::vector<double>& mean, const std::vector<double>& var,
              const std::vector<double>& gamma, const std::vector<double>& beta, double eps,
              Matrix& xhat, Matrix& out) {
  xhat = Matrix(in.rows, in.cols);
  out = Matrix(in.rows, in.cols);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < in.rows; ++f) {
    const double inv = 1.0 / std::sqrt(var[f] + eps);
    const double* src = in.row(f);
    double* xh = xhat.row(f);
    double* dst = out.row(f);
    for (int i = 0; i < in.cols; ++i) {
      xh[i] = (src[i] - mean[f]) * inv;
      dst[i] = gamma[f] * xh[i] + beta[f];
    }
  }
}

void bn_backward_sums(const std::vector<const Matrix*>& dys, const std::vector<const Matrix*>& xhats,
                      std::vector<double>& sum_dy, std::vector<double>& sum_dy_xhat) {
  const int rows = dys.empty() ? 0 : dys[0]->rows;
  sum_dy.assign(rows, 0.0);
  sum_dy_xhat.assign(rows, 0.0);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < rows; ++f) {
    double sd = 0.0, sdx = 0.0;
    for (size_t e = 0; e < dys.size(); ++e) {
      const double* dy = dys[e]->row(f);
      const double* xh = xhats[e]->row(f);
      for (int i = 0; i < dys[e]->cols; ++i) {
        sd += dy[i];
        sdx += dy[i] * xh[i];
      }
    }
    sum_dy[f] = sd;
    sum_dy_xhat[f] = sdx;
  }
}

void bn_backward_data(const Matrix& dy, const Matrix& xhat, const std::vector<double>& gamma,
                      const std::vector<double>& var, double eps, int64_t group_size,
                      const std::vector<double>& sum_dy, const std::vector<double>& sum_dy_xhat,
                      Matrix& dx) {
  dx = Matrix(dy.rows, dy.cols);
  const double n = static_cast<double>(group_size);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < dy.rows; ++f) {
    const double scale = gamma[f] / std::sqrt(var[f] + eps) / n;
    const double* g = dy.row(f);
    const double* xh = xhat.row(f);
    double* d = dx.row(f);
    for (int i = 0; i < dy.cols; ++i)
      d[i] = scale * (n * g[i] - sum_dy[f] - xh[i] * sum_dy_xhat[f]);
  }
}

void maxpool_rows(const Matrix& in, std::vector<double>& out, std::vector<int>& arg) {
  out.assign(in.rows, 0.0);
  arg.assign(in.rows, 0);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < in.rows; ++f) {
    const double* row = in.row(f);
    double best = row[0];
    int besti = 0;
    for (int i = 1; i < in.cols; ++i) {
      if (row[i] > best) {
        best = row[i];
        besti = i;
      }
    }
    out[f] = best;
    arg[f] = besti;
  }
}

void matvec(const Matrix& W, const std::vector<double>& x, const std::vector<double>& b,
            std::vector<double>& y) {
  y.assign(W.rows, 0.0);
#pragma omp parallel for schedule(static)
  for (int u = 0; u < W.rows; ++u) {
    const double* w = W.row(u);
    double acc = 0.0;
    for (int c = 0; c < W.cols; ++c) acc += w[c] * x[c];
    y[u] = acc + b[u];
  }
}

void matvec_backward_params(const std::vector<double>& dy, const std::vector<double>& x,
                            Matrix& dW, std::vector<double>& db) {
#pragma omp parallel for schedule(static)
  for (int u = 0; u < dW.rows; ++u) {
    const double g = dy[u];
    if (g == 0.0) continue;
    double* w = dW.row(u);
    for (int c = 0; c < dW.cols; ++c) w[c] += g * x[c];
    db[u] += g;
  }
}

void matvec_backward_data(const Matrix& W, const std::vector<double>& dy, std::vector<double>& dx) {
  dx.assign(W.cols, 0.0);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < W.cols; ++c) {
    double acc = 0.0;
    for (int u = 0; u < W.rows; ++u) acc += W.at(u, c) * dy[u];
    dx[c] = acc;
  }
}

void embed_scatter_add(const std::vector<int>& indices, const Matrix& dD, Matrix& dT) {
  // Rows collide on shared embedding indices, columns never do.
#pragma omp parallel for schedule(static)
  for (int c = 0; c < dD.cols; ++c) {
    for (int r = 0; r < dD.rows; ++r) {
      dT.at(indices[r], c) += dD.at(r, c);
    }
  }
}

}  // namespace omp

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

void conv_forward(const Matrix& D, const Matrix& W, const std::vector<double>& b, int win,
                  Matrix& pre) {
  g_parallel ? omp::conv_forward(D, W, b, win, pre) : serial::conv_forward(D, W, b, win, pre);
}

void conv_backward_filters(const std::vector<Matrix>& Ds, const std::vector<Matrix>& dpres,
                           int win, Matrix& dW, std::vector<double>& db) {
  g_parallel ? omp::conv_backward_filters(Ds, dpres, win, dW, db)
             : serial::conv_backward_filters(Ds, dpres, win, dW, db);
}

void conv_backward_data(const Matrix& W, const Matrix& dpre, int win, Matrix& dD) {
  g_parallel ? omp::conv_backward_data(W, dpre, win, dD)
             : serial::conv_backward_data(W, dpre, win, dD);
}

void bn_stats(const std::vector<const Matrix*>& slabs, std::vector<double>& mean,
              std::vector<double>& var) {
  g_parallel ? omp::bn_stats(slabs, mean, var) : serial::bn_stats(slabs, mean, var);
}

void bn_apply(const Matrix& in, const std::vector<double>& mean, const std::vector<double>& var,
              const std::vector<double>& gamma, const std::vector<double>& beta, double eps,
              Matrix& xhat, Matrix& out) {
  g_parallel ? omp::bn_apply(in, mean, var, gamma, beta, eps, xhat, out)
             : serial::bn_apply(in, mean, var, gamma, beta, eps, xhat, out);
}

void bn_backward_sums(const std::vector<const Matrix*>& dys, const std::vector<const Matrix*>& xhats,
                      std::vector<double>& sum_dy, std::vector<double>& sum_dy_xhat) {
  g_parallel ? omp::bn_backward_sums(dys, xhats, sum_dy, sum_dy_xhat)
             : serial::bn_backward_sums(dys, xhats, sum_dy, sum_dy_xhat);
}

void bn_backward_data(const Matrix& dy, const Matrix& xhat, const std::vector<double>& gamma,
                      const std::vector<double>& var, double eps, int64_t group_size,
                      const std::vector<double>& sum_dy, const std::vector<double>& sum_dy_xhat,
                      Matrix& dx) {
  g_parallel
      ? omp::bn_backward_data(dy, xhat, gamma, var, eps, group_size, sum_dy, sum_dy_xhat, dx)
      : serial::bn_backward_data(dy, xhat, gamma, var, eps, group_size, sum_dy, sum_dy_xhat, dx);
}

void maxpool_rows(const Matrix& in, std::vector<double>& out, std::vector<int>& arg) {
  g_parallel ? omp::maxpool_rows(in, out, arg) : serial::maxpool_rows(in, out, arg);
}

void matvec(const Matrix& W, const std::vector<double>& x, const std::vector<double>& b,
            std::vector<double>& y) {
  g_parallel ? omp::matvec(W, x, b, y) : serial::matvec(W, x, b, y);
}

void matvec_backward_params(const std::vector<double>& dy, const std::vector<double>& x, Matrix& dW,
                            std::vector<double>& db) {
  g_parallel ? omp::matvec_backward_params(dy, x, dW, db)
             : serial::matvec_backward_params(dy, x, dW, db);
}

void matvec_backward_data(const Matrix& W, const std::vector<double>& dy, std::vector<double>& dx) {
  g_parallel ? omp::matvec_backward_data(W, dy, dx) : serial::matvec_backward_data(W, dy, dx);
}

void embed_scatter_add(const std::vector<int>& indices, const Matrix& dD, Matrix& dT) {
  g_parallel ? omp::embed_scatter_add(indices, dD, dT) : serial::embed_scatter_add(indices, dD, dT);
}

}  // namespace medqa::kernels
