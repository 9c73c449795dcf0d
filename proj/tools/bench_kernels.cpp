// Times the serial reference kernels against the OpenMP ones on
// classifier-shaped workloads plus the BM25 full scan.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "medqa/kb.hpp"
#include "medqa/kernels.hpp"
#include "medqa/searcher.hpp"

using namespace medqa;

namespace {

std::mt19937_64 rng(42);

double uniform01() { return double(rng() >> 11) * 0x1.0p-53; }

Matrix random_matrix(int r, int c) {
  Matrix m(r, c);
  for (double& v : m.data) v = uniform01() * 2.0 - 1.0;
  return m;
}

template <typename F>
double time_ms(F&& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-24s serial %9.3f ms   omp %9.3f ms   speedup %.2fx\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
  const int l = 60, h = 64, filters = 100, win = 3, units = 128, batch = 16;
  const int reps = 20;

  const Matrix D = random_matrix(l, h);
  const Matrix W = random_matrix(filters, win * h);
  const std::vector<double> bias(filters, 0.1);

  Matrix pre_s, pre_p;
  report("conv_forward",
         time_ms([&] { kernels::serial::conv_forward(D, W, bias, win, pre_s); }, reps),
         time_ms([&] { kernels::omp::conv_forward(D, W, bias, win, pre_p); }, reps));

  std::vector<Matrix> Ds, dpres;
  for (int e = 0; e < batch; ++e) {
    Ds.push_back(random_matrix(l, h));
    dpres.push_back(random_matrix(filters, l - win + 1));
  }
  report("conv_backward_filters", time_ms([&] {
           Matrix dW(filters, win * h);
           std::vector<double> db(filters, 0.0);
           kernels::serial::conv_backward_filters(Ds, dpres, win, dW, db);
         }, reps),
         time_ms([&] {
           Matrix dW(filters, win * h);
           std::vector<double> db(filters, 0.0);
           kernels::omp::conv_backward_filters(Ds, dpres, win, dW, db);
         }, reps));

  report("conv_backward_data", time_ms([&] {
           Matrix dD(l, h);
           kernels::serial::conv_backward_data(W, dpres[0], win, dD);
         }, reps),
         time_ms([&] {
           Matrix dD(l, h);
           kernels::omp::conv_backward_data(W, dpres[0], win, dD);
         }, reps));

  std::vector<const Matrix*> slabs;
  for (const auto& m : dpres) slabs.push_back(&m);
  std::vector<double> mean, var;
  report("bn_stats",
         time_ms([&] { kernels::serial::bn_stats(slabs, mean, var); }, reps),
         time_ms([&] { kernels::omp::bn_stats(slabs, mean, var); }, reps));

  const Matrix dense = random_matrix(units, filters * 3);
  const std::vector<double> x(filters * 3, 0.5);
  const std::vector<double> db(units, 0.0);
  std::vector<double> y;
  report("matvec",
         time_ms([&] { kernels::serial::matvec(dense, x, db, y); }, reps * 10),
         time_ms([&] { kernels::omp::matvec(dense, x, db, y); }, reps * 10));

  // BM25 scan over a synthetic KB
  kb::KnowledgeBase base;
  for (int i = 0; i < 400; ++i) {
    kb::SourceDocument doc;
    doc.entity_name = "entity" + std::to_string(i);
    doc.template_id = "disease";
    std::string content;
    for (int w = 0; w < 300; ++w) content += "w" + std::to_string(rng() % 2000) + " ";
    doc.sections.push_back({"Information", content});
    base.ingest_document(doc);
  }
  const auto index = searcher::Bm25Index::build(base);
  std::vector<std::string> query;
  for (int i = 0; i < 12; ++i) query.push_back("w" + std::to_string(rng() % 2000));
  report("bm25_scan",
         time_ms([&] { (void)index.scan_serial(query); }, reps),
         time_ms([&] { (void)index.scan_parallel(query); }, reps));

  return 0;
}
