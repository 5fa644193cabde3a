// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "pixelflow/dataflow_sim.hpp"
#include "pixelflow/enet.hpp"
#include "pixelflow/reference.hpp"
#include "pixelflow/stream_kernels.hpp"

using namespace pixelflow;
using stream::Pixel;

namespace {

std::vector<Pixel> random_pixels(int count, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Pixel> pixels(count, Pixel(channels));
  for (auto& p : pixels) {
    for (auto& v : p) v = std::int32_t(rng() % 256);
  }
  return pixels;
}

void BM_LineBufferStep(benchmark::State& state) {
  const int k = int(state.range(0));
  const int w = 240, h = 64, c = 8;
  const auto pixels = random_pixels(h * w, c, 1);
  stream::LineBuffer lb(k, h, w, c);
  std::size_t i = 0;
  for (auto _ : state) {
    if (i == pixels.size()) {
      lb.reset();
      i = 0;
    }
    benchmark::DoNotOptimize(lb.step(pixels[i++]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LineBufferStep)->Arg(3)->Arg(5);

void BM_EncodedWindowStep(benchmark::State& state) {
  const int k = int(state.range(0));
  const int w = 240, h = 64, c = 8;
  const auto pixels = random_pixels(h * w, c, 2);
  stream::EncodedWindow enc(k, h, w, c);
  std::size_t i = 0;
  for (auto _ : state) {
    if (i == pixels.size()) {
      enc.reset();
      i = 0;
    }
    benchmark::DoNotOptimize(enc.step(pixels[i++]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EncodedWindowStep)->Arg(3)->Arg(5);

void BM_ConvWindow(benchmark::State& state) {
  const int k = 3, c = 8, filters = 8;
  ir::ConvBNParams conv;
  conv.kernel = k;
  conv.filters = filters;
  conv.weight_format = fx::FxFormat::parse("s8.0");
  conv.out_format = fx::FxFormat::parse("u8.0");
  std::mt19937_64 rng(3);
  conv.weights.resize(std::size_t(filters) * c * k * k);
  for (auto& v : conv.weights) v = float((double(rng() % 255) - 127.0) / 128.0);
  conv.bias.assign(filters, 0.01f);
  const auto prep = stream::prepare_conv(conv, c, fx::FxFormat::parse("u8.0"));
  const auto cells = random_pixels(k * k, c, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stream::conv_window(prep, cells));
  }
  state.SetItemsProcessed(state.iterations() * k * k * c * filters);
}
BENCHMARK(BM_ConvWindow);

void BM_Quantize(benchmark::State& state) {
  const auto fmt = fx::FxFormat::parse("u8.0");
  std::mt19937_64 rng(5);
  std::vector<double> xs(4096);
  for (auto& x : xs) x = double(rng() % 100000) / 65536.0;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fx::quantize(xs[i++ % xs.size()], fmt));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Quantize);

void BM_SimulateTinyModel(benchmark::State& state) {
  auto graph = ir::build_enet({2, 2, 2, 2, 2, 2}, {3, 16, 16});
  ir::attach_random_weights(graph, 7);
  std::mt19937_64 rng(8);
  fx::FxTensor img(3, 16, 16, graph.input_format);
  for (auto& v : img.data) v = std::int32_t(rng() % 256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sim::simulate(graph, {img}));
  }
}
BENCHMARK(BM_SimulateTinyModel);

void BM_SequentialReference(benchmark::State& state) {
  auto graph = ir::build_enet({2, 2, 2, 2, 2, 2}, {3, 16, 16});
  ir::attach_random_weights(graph, 9);
  std::mt19937_64 rng(10);
  fx::FxTensor img(3, 16, 16, graph.input_format);
  for (auto& v : img.data) v = std::int32_t(rng() % 256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ref::run_fixed(graph, img));
  }
}
BENCHMARK(BM_SequentialReference);

}  // namespace

BENCHMARK_MAIN();
