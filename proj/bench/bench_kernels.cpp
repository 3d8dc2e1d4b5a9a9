// Parallel kernels against their serial references. Run with
// --benchmark_counters_tabular=true to line the pairs up.

#include <benchmark/benchmark.h>

#include "epiflow/parallel.hpp"
#include "epiflow/reference.hpp"
#include "epiflow/synth.hpp"

using namespace epiflow;

namespace {

struct SparseFixture {
  SyntheticScene scene;
  NormalizedCorrespondenceSet corr;
  RobustConfig cfg;
  RansacSampling sampling;
  EssentialParams params;

  SparseFixture() {
    SceneConfig sc;
    sc.point_count = 10000;
    sc.pixel_noise = 0.5;
    sc.outlier_fraction = 0.3;
    scene = generate_scene(sc);
    corr = scene.correspondences();
    cfg.hypothesis_count = 256;
    sampling = RansacSampling::draw(corr.size(), cfg);
    params = EssentialParams::centered_at(scene.R, scene.t);
  }
};

const SparseFixture& sparse() {
  static const SparseFixture f;
  return f;
}

struct DenseFixture {
  SyntheticScene scene;
  LossWeights w = loss_preset("kitti_teacher");
  CensusField c1, c2;
  OcclusionMask mask;

  DenseFixture() {
    SceneConfig sc;
    sc.mode = SceneMode::Dense;
    sc.width = 640;
    sc.height = 192;
    sc.K = sc.K2 = CameraIntrinsics{500.0, 500.0, 319.5, 95.5, 0.0};
    sc.occluder = true;
    scene = generate_scene(sc);
    c1 = census_transform(scene.image1, w.census_window, w.census_tolerance);
    c2 = census_transform(scene.image2, w.census_window, w.census_tolerance);
    mask = occlusion_mask(scene.flow_clean, scene.flow_backward, w.occlusion_beta1, w.occlusion_beta2);
  }
};

const DenseFixture& dense() {
  static const DenseFixture f;
  return f;
}

// Parallel variants take the thread count as their argument.
void threads_from(benchmark::State& state) { parallel::set_threads(static_cast<int>(state.range(0))); }

void BM_ScoreHypotheses(benchmark::State& state) {
  const auto& f = sparse();
  threads_from(state);
  for (auto _ : state) benchmark::DoNotOptimize(score_hypotheses(f.corr, f.sampling, f.cfg));
}

void BM_ScoreHypothesesSerial(benchmark::State& state) {
  const auto& f = sparse();
  for (auto _ : state) benchmark::DoNotOptimize(reference::score_hypotheses(f.corr, f.sampling, f.cfg));
}

void BM_LowerObjective(benchmark::State& state) {
  const auto& f = sparse();
  threads_from(state);
  for (auto _ : state) benchmark::DoNotOptimize(lower_objective(f.corr, f.params, f.cfg.inlier_threshold));
}

void BM_LowerObjectiveSerial(benchmark::State& state) {
  const auto& f = sparse();
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::lower_objective(f.corr, f.params, f.cfg.inlier_threshold));
}

void BM_MixedHessian(benchmark::State& state) {
  const auto& f = sparse();
  const InlierMask m = inlier_mask(f.corr, f.params, f.cfg.inlier_threshold);
  threads_from(state);
  for (auto _ : state) benchmark::DoNotOptimize(mixed_hessian(f.corr, f.params, m, f.scene.config.K2));
}

void BM_MixedHessianSerial(benchmark::State& state) {
  const auto& f = sparse();
  const InlierMask m = inlier_mask(f.corr, f.params, f.cfg.inlier_threshold);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::mixed_hessian(f.corr, f.params, m, f.scene.config.K2));
}

void BM_Photometric(benchmark::State& state) {
  const auto& f = dense();
  threads_from(state);
  for (auto _ : state) benchmark::DoNotOptimize(photometric_loss(f.c1, f.c2, f.scene.flow_clean, f.mask, f.w));
}

void BM_PhotometricSerial(benchmark::State& state) {
  const auto& f = dense();
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::photometric_loss(f.c1, f.c2, f.scene.flow_clean, f.mask, f.w));
}

void BM_OcclusionMask(benchmark::State& state) {
  const auto& f = dense();
  threads_from(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(occlusion_mask(f.scene.flow_clean, f.scene.flow_backward, f.w.occlusion_beta1,
                                            f.w.occlusion_beta2));
}

void BM_OcclusionMaskSerial(benchmark::State& state) {
  const auto& f = dense();
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::occlusion_mask(f.scene.flow_clean, f.scene.flow_backward,
                                                       f.w.occlusion_beta1, f.w.occlusion_beta2));
}

void BM_Smoothness(benchmark::State& state) {
  const auto& f = dense();
  threads_from(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(smoothness_loss(f.scene.image1, f.scene.flow_clean, f.w.smoothness_alpha));
}

void BM_SmoothnessSerial(benchmark::State& state) {
  const auto& f = dense();
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::smoothness_loss(f.scene.image1, f.scene.flow_clean, f.w.smoothness_alpha));
}

}  // namespace

#define EPIFLOW_PAIR(name)                                                             \
  BENCHMARK(name)->Arg(1)->Arg(2)->Arg(4)->ArgName("threads")->Unit(benchmark::kMicrosecond); \
  BENCHMARK(name##Serial)->Unit(benchmark::kMicrosecond)

EPIFLOW_PAIR(BM_ScoreHypotheses);
EPIFLOW_PAIR(BM_LowerObjective);
EPIFLOW_PAIR(BM_MixedHessian);
EPIFLOW_PAIR(BM_Photometric);
EPIFLOW_PAIR(BM_OcclusionMask);
EPIFLOW_PAIR(BM_Smoothness);

BENCHMARK_MAIN();
