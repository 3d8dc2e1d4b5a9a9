// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "epiflow/error.hpp"
#include "epiflow/fivepoint.hpp"
#include "epiflow/implicit_diff.hpp"
#include "epiflow/io.hpp"
#include "epiflow/losses.hpp"
#include "epiflow/odometry.hpp"
#include "epiflow/parallel.hpp"
#include "epiflow/robust.hpp"
#include "epiflow/synth.hpp"
#include "support.hpp"

using namespace epiflow;
namespace fs = std::filesystem;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

NormalizedCorrespondenceSet subset(const NormalizedCorrespondenceSet& c, const InlierMask& m) {
  NormalizedCorrespondenceSet out;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (m[i]) out.push_back(c[i]);
  return out;
}

// 1. Five-point completeness.
Outcome five_point() {
  parallel::set_threads(1);
  std::mt19937_64 gen(2024);
  const int trials = 1000;
  int recovered = 0;
  double worst_constraint = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < trials; ++k) {
    const Mat3 R = epiflow::testing::random_rotation(gen, 0.8);
    const Vec3 t = epiflow::testing::random_unit(gen);
    const auto corr = epiflow::testing::project_points(gen, R, t, 5);
    MinimalSample s;
    for (std::size_t i = 0; i < 5; ++i) {
      s.first[i] = corr[i].first;
      s.second[i] = corr[i].second;
    }
    const EssentialMatrix truth = epiflow::testing::truth_essential(R, t);
    double best = 1e300;
    for (const EssentialMatrix& E : solve_five_point(s)) {
      best = std::min(best, canonical_distance(E, truth));
      worst_constraint = std::max({worst_constraint, E.determinant_residual(), E.trace_constraint_residual()});
    }
    if (best < 1e-6) ++recovered;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  parallel::set_threads(0);
  Outcome o;
  o.pass = recovered >= 999 && worst_constraint < 1e-8 && secs < 10.0;
  o.detail = std::to_string(recovered) + "/1000 recovered, worst det/trace residual " +
             fmt("%.2e", worst_constraint) + ", " + fmt("%.2f", secs) + " s";
  return o;
}

struct PipelineRun {
  SyntheticScene scene;
  NormalizedCorrespondenceSet corr;
  EstimationResult result;
};

const std::vector<PipelineRun>& pipeline_runs() {
  static const std::vector<PipelineRun> runs = [] {
    std::vector<PipelineRun> v;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      PipelineRun r{generate_scene(epiflow::testing::noisy_scene_config(seed)), {}, {}};
      r.corr = r.scene.correspondences();
      RobustConfig cfg;
      cfg.rng_seed = seed;
      r.result = estimate_essential(r.corr, cfg);
      v.push_back(std::move(r));
    }
    return v;
  }();
  return runs;
}

// 2. Robust pipeline accuracy against planted labels.
Outcome robust_pipeline() {
  double worst_r = 0, worst_t = 0, worst_p = 1, worst_rec = 1;
  for (const PipelineRun& r : pipeline_runs()) {
    const RelativePose pose = decompose_essential(r.result.E, subset(r.corr, r.result.inliers));
    worst_r = std::max(worst_r, rotation_angle_between(pose.R, r.scene.R) * kDeg);
    worst_t = std::max(worst_t, direction_angle_between(pose.t, r.scene.t) * kDeg);
    std::size_t tp = 0, est = 0, planted = 0;
    for (std::size_t i = 0; i < r.corr.size(); ++i) {
      est += r.result.inliers[i];
      planted += r.scene.inlier[i];
      tp += r.result.inliers[i] && r.scene.inlier[i];
    }
    worst_p = std::min(worst_p, static_cast<double>(tp) / static_cast<double>(est));
    worst_rec = std::min(worst_rec, static_cast<double>(tp) / static_cast<double>(planted));
  }
  Outcome o;
  o.pass = worst_r < 0.1 && worst_t < 0.5 && worst_p >= 0.98 && worst_rec >= 0.98;
  o.detail = "20 scenes, worst rotation " + fmt("%.4f", worst_r) + " deg, translation " +
             fmt("%.4f", worst_t) + " deg, precision " + fmt("%.4f", worst_p) + ", recall " +
             fmt("%.4f", worst_rec);
  return o;
}

// 3. Stationarity certificate and stopping rules.
Outcome irls_certificate() {
  std::vector<std::pair<NormalizedCorrespondenceSet, EstimationResult>> all;
  for (const PipelineRun& r : pipeline_runs()) all.emplace_back(r.corr, r.result);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {  // noise-free scenes stop on the floor
    SceneConfig sc;
    sc.rng_seed = seed;
    sc.point_count = 500;
    const auto corr = generate_scene(sc).correspondences();
    all.emplace_back(corr, estimate_essential(corr, RobustConfig{}));
  }
  RobustConfig capped;
  capped.irls_max_iters = 2;
  capped.hypothesis_count = 16;
  all.emplace_back(pipeline_runs()[0].corr, estimate_essential(pipeline_runs()[0].corr, capped));

  double worst_grad = 0;
  bool monotone = true, rules = true;
  std::size_t floors = 0;
  for (const auto& [corr, r] : all) {
    worst_grad = std::max(worst_grad, restricted_gradient(corr, r.params, r.inliers).lpNorm<Eigen::Infinity>());
    for (std::size_t k = 1; k < r.objective_history.size(); ++k)
      if (r.inlier_history[k] == r.inlier_history[k - 1] &&
          r.objective_history[k] > r.objective_history[k - 1])
        monotone = false;
    const std::string& why = r.diagnostics.stop_reason;
    if (why == "objective_floor") {
      ++floors;
      rules = rules && r.objective <= 1e-20;
    } else if (why == "iteration_cap") {
      rules = rules && r.iterations == (&r == &all.back().second ? 2 : 200);
    } else if (why == "fixed_point") {
      rules = rules && r.inliers == inlier_mask(corr, r.params, RobustConfig{}.inlier_threshold);
    } else {
      rules = false;
    }
  }
  rules = rules && all.back().second.diagnostics.stop_reason == "iteration_cap";
  Outcome o;
  o.pass = worst_grad < 1e-10 && monotone && rules && floors == 5;
  o.detail = std::to_string(all.size()) + " solves, worst |dl/dtheta|_inf " + fmt("%.2e", worst_grad) +
             ", same-set objective " + (monotone ? "non-increasing" : "INCREASED") + ", stop rules " +
             (rules ? "honoured" : "VIOLATED") + " (" + std::to_string(floors) + " floor stops)";
  return o;
}

struct SmallScene {
  SyntheticScene scene;
  NormalizedCorrespondenceSet corr;
  RobustConfig cfg;
  EstimationResult result;
};

SmallScene small_scene(std::uint64_t seed) {
  SceneConfig sc;
  sc.point_count = 50;
  sc.pixel_noise = 0.5;
  sc.outlier_fraction = 0.2;
  sc.rng_seed = seed;
  SmallScene s{generate_scene(sc), {}, {}, {}};
  s.corr = s.scene.correspondences();
  s.cfg.hypothesis_count = 256;
  s.cfg.rng_seed = seed;
  s.result = estimate_essential(s.corr, s.cfg);
  return s;
}

// 4. Implicit gradient columns against re-solve finite differences.
Outcome implicit_exactness() {
  std::size_t probed = 0, good = 0, flips = 0, nonzero_outlier_cols = 0;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const SmallScene s = small_scene(seed);
    const CameraIntrinsics& K2 = s.scene.config.K2;
    const ImplicitGradient g = dtheta_dflow(s.corr, s.result, K2);
    std::mt19937_64 gen(seed);
    for (std::size_t i = 0; i < s.corr.size(); ++i)
      if (!s.result.inliers[i])
        nonzero_outlier_cols += !g.dtheta_dflow.col(2 * i).isZero(0.0) + !g.dtheta_dflow.col(2 * i + 1).isZero(0.0);
    for (int k = 0; k < 10; ++k) {
      const std::size_t col = std::uniform_int_distribution<std::size_t>(0, 2 * s.corr.size() - 1)(gen);
      const ResolveProbe p = resolve_column(s.corr, s.result, K2, col, 1e-5, s.cfg);
      if (p.inlier_flip) {
        ++flips;
        continue;
      }
      ++probed;
      const Vec5 a = g.dtheta_dflow.col(static_cast<Eigen::Index>(col));
      // An outlier column is exact zero; the re-solve must not move either.
      const double err = a.isZero(0.0) ? (p.derivative.norm() < 1e-12 ? 0.0 : 1.0)
                                       : (a - p.derivative).norm() / a.norm();
      worst = std::max(worst, err);
      good += err < 1e-3;
    }
  }
  const double frac = probed ? static_cast<double>(good) / static_cast<double>(probed) : 0.0;
  Outcome o;
  o.pass = frac >= 0.95 && nonzero_outlier_cols == 0;
  o.detail = "50 scenes x 10 probes: " + std::to_string(good) + "/" + std::to_string(probed) +
             " within 1e-3 (worst " + fmt("%.2e", worst) + "), " + std::to_string(flips) +
             " flipped probes skipped, " + std::to_string(nonzero_outlier_cols) + " non-zero outlier columns";
  return o;
}

// 5. Total gradient of L_e through the argmin.
Outcome total_gradient_check() {
  const SmallScene s = small_scene(7);
  const CameraIntrinsics& K2 = s.scene.config.K2;
  const ImplicitGradient g = dtheta_dflow(s.corr, s.result, K2);
  const EpipolarLoss le = epipolar_loss(s.corr, s.result.params);
  const Eigen::VectorXd total = total_gradient(le.flow_gradient(K2), le.d_theta, g);
  std::vector<std::size_t> inl;
  for (std::size_t i = 0; i < s.corr.size(); ++i)
    if (s.result.inliers[i]) inl.push_back(i);
  std::mt19937_64 gen(99);
  double worst = 0;
  int flips = 0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t col = 2 * inl[gen() % inl.size()] + gen() % 2;
    const ResolveLossProbe p = resolve_epipolar_column(s.corr, s.result, K2, col, 1e-5, s.cfg);
    flips += p.inlier_flip;
    const double a = total[static_cast<Eigen::Index>(col)];
    worst = std::max(worst, std::abs(a - p.derivative) / std::max(std::abs(a), std::abs(p.derivative)));
  }
  Outcome o;
  o.pass = worst < 1e-3 && flips == 0;
  o.detail = "20 inlier entries, worst relative error " + fmt("%.2e", worst) + ", " + std::to_string(flips) + " flips";
  return o;
}

// 6. The gradient depends only on the stationary point, not on how it was reached.
Outcome algorithm_independence() {
  double worst = 0, worst_pose = 0;
  int same_set = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SmallScene s = small_scene(seed);
    const CameraIntrinsics& K2 = s.scene.config.K2;
    // Second start: ground truth pushed off by a fixed chart offset, small
    // enough to keep most inliers inside the threshold band.
    // The true E has four (R, t) readings (sign of t, twisted pair); start
    // from the one the first solve chose so both land on the same theta*.
    const Mat3 twist = Eigen::AngleAxisd(std::numbers::pi, s.scene.t.normalized()).toRotationMatrix();
    Mat3 R0 = s.scene.R;
    if (rotation_angle_between(twist * s.scene.R, s.result.params.rotation()) <
        rotation_angle_between(s.scene.R, s.result.params.rotation()))
      R0 = twist * s.scene.R;
    const double sign = s.result.params.translation().dot(s.scene.t) < 0.0 ? -1.0 : 1.0;
    const EssentialParams truth = EssentialParams::centered_at(R0, sign * s.scene.t);
    EstimationResult other;
    try {
      other = irls_refine(s.corr, truth.with_theta(Vec5(2e-4, -1.5e-4, 1e-4, 3e-4, -2e-4)), s.cfg);
    } catch (const Error&) {
      continue;
    }
    if (other.inliers != s.result.inliers) continue;
    ++same_set;
    const ImplicitGradient a = dtheta_dflow(s.corr, s.result, K2);
    // Express the second solution in the first chart so the rows compare.
    const EssentialParams in_a = params_from_pose(other.params.rotation(), other.params.translation(),
                                                  s.result.params.base_rotation(),
                                                  s.result.params.base_translation());
    const ImplicitGradient b = dtheta_dflow(s.corr, in_a, other.inliers, K2);
    worst_pose = std::max(worst_pose, in_a.theta().norm());
    worst = std::max(worst, (a.dtheta_dflow - b.dtheta_dflow).norm() / a.dtheta_dflow.norm());
  }
  Outcome o;
  o.pass = same_set >= 8 && worst < 1e-9;
  o.detail = std::to_string(same_set) + "/10 scenes reached the same set, |theta_a - theta_b| <= " +
             fmt("%.1e", worst_pose) + ", worst relative gradient difference " + fmt("%.2e", worst);
  return o;
}

// 7. Zero and floor properties of the losses.
Outcome loss_floors() {
  double worst_le = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SceneConfig sc;
    sc.rng_seed = seed;
    sc.mode = seed % 2 ? SceneMode::Sparse : SceneMode::Dense;
    const SyntheticScene s = generate_scene(sc);
    worst_le = std::max(worst_le, epipolar_loss(s.clean_correspondences(),
                                                EssentialParams::centered_at(s.R, s.t)).value);
  }
  FlowField f(64, 48), b(64, 48);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.set(i, Vec2(2.25, -1.5));
    b.set(i, Vec2(-2.25, 1.5));
  }
  const LossWeights w;
  const double lc = fb_consistency_loss(f, b, occlusion_mask(f, b, w.occlusion_beta1, w.occlusion_beta2), w);
  const double floor = std::pow(w.charbonnier_eps * w.charbonnier_eps, w.charbonnier_gamma);

  SceneConfig dc;
  dc.mode = SceneMode::Dense;
  dc.width = 128;
  dc.height = 96;
  dc.K = dc.K2 = CameraIntrinsics{200.0, 200.0, 63.5, 47.5, 0.0};
  const SyntheticScene d = generate_scene(dc);
  Image I1 = d.image1, I2 = d.image2;
  for (auto& v : I1.data()) v += 0.21;
  for (auto& v : I2.data()) v += 0.21;
  const OcclusionMask m = occlusion_mask(d.flow_clean, d.flow_backward, w.occlusion_beta1, w.occlusion_beta2);
  const double shift = std::abs(photometric_loss(d.image1, d.image2, d.flow_clean, m, w) -
                                photometric_loss(I1, I2, d.flow_clean, m, w));
  Outcome o;
  o.pass = worst_le < 1e-18 && std::abs(lc - floor) < 1e-15 && std::abs(lc - 1.995e-3) < 1e-6 && shift < 1e-12;
  o.detail = "L_e on ground truth " + fmt("%.2e", worst_le) + ", L_c " + fmt("%.10e", lc) +
             " (floor " + fmt("%.10e", floor) + "), census shift change " + fmt("%.1e", shift);
  return o;
}

Trajectory drive(std::size_t n, double eps) {
  Trajectory t;
  for (std::size_t k = 0; k < n; ++k) {
    Pose34 T;
    T.leftCols<3>() = Eigen::AngleAxisd(eps * static_cast<double>(k), Vec3::UnitY()).toRotationMatrix();
    T.col(3) = Vec3(0, 0, static_cast<double>(k));
    t.poses.push_back(T);
  }
  return t;
}

// 8. Pose and odometry metrics.
Outcome odometry() {
  std::mt19937_64 gen(31);
  double worst = 0;
  for (int k = 0; k < 200; ++k) {
    const Mat3 R = epiflow::testing::random_rotation(gen, 0.5);
    const Vec3 t = epiflow::testing::random_unit(gen);
    const RelativePose p =
        decompose_essential(essential_from_pose(R, t), epiflow::testing::project_points(gen, R, t, 20));
    worst = std::max({worst, rotation_angle_between(p.R, R), direction_angle_between(p.t, t)});
  }
  const Trajectory gt = drive(1000, 0.0);
  const OdometryErrors zero = relative_errors(gt, gt);
  const double eps = 1e-4;
  const OdometryErrors drift = relative_errors(drive(1000, eps), gt);
  double worst_rel = 0;
  for (const LengthError& l : drift.per_length) {
    const double oracle = (l.length + 1.0) * eps / l.length * kDeg * 100.0;
    worst_rel = std::max(worst_rel, std::abs(l.r_err - oracle) / oracle);
  }
  FlowField a(20, 10), b(20, 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.set(i, Vec2(0.7, -1.1));
    b.set(i, Vec2(3.7, 2.9));
  }
  const double e = aepe(a, b);
  Outcome o;
  o.pass = worst < 1e-8 && zero.t_err == 0.0 && zero.r_err == 0.0 && worst_rel < 0.01 && e == 5.0;
  o.detail = "decompose(compose) worst " + fmt("%.1e", worst) + " rad, est=gt (" + fmt("%g", zero.t_err) + ", " +
             fmt("%g", zero.r_err) + "), drift vs closed form " + fmt("%.1e", worst_rel) + ", AEPE(3,4) = " +
             fmt("%.17g", e);
  return o;
}

// 9. Every CLI command is byte-identical across runs and thread counts.
Outcome determinism() {
  using epiflow::testing::run_cli;
  const fs::path root = epiflow::testing::scratch_dir("acceptance_determinism");
  const std::string src = EPIFLOW_SOURCE_DIR;
  // Build inputs once, outside the compared runs.
  const std::string sparse = (root / "sparse").string(), dense = (root / "dense").string();
  run_cli("--out " + sparse + " synth --set pixel_noise=0.5 --set outlier_fraction=0.3 --seed 11");
  run_cli("--out " + (root / "small").string() +
          " synth --set point_count=50 --set pixel_noise=0.5 --set outlier_fraction=0.2 --seed 3");
  run_cli("--out " + dense + " synth --set mode=dense --set occluder=true --seed 2");
  {
    std::ostringstream est, gt;
    write_trajectory(est, drive(300, 1e-4));
    write_trajectory(gt, drive(300, 0.0));
    write_text_file(root / "est.txt", est.str());
    write_text_file(root / "gt.txt", gt.str());
  }
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "synth --set pixel_noise=0.5 --set outlier_fraction=0.3 --seed 11"},
      {"synth-dense", "synth --set mode=dense --set occluder=true --seed 2"},
      {"estimate", "estimate --scene " + sparse},
      {"gradcheck", "gradcheck --scene " + (root / "small").string() + " --hypotheses 256"},
      {"eval-odom", "eval-odom --est " + (root / "est.txt").string() + " --gt " + (root / "gt.txt").string() +
                        " --lengths 100,200"},
      {"eval-flow", "eval-flow --flow " + dense + "/flow.flo --gt " + dense + "/flow_gt.flo --mask " + dense +
                        "/visible.pgm"},
      {"losses", "losses --scene " + dense + " --preset rgbd"},
  };
  std::string bad;
  for (const auto& [name, args] : commands) {
    std::vector<fs::path> dirs;
    std::vector<std::string> stdouts;
    for (const char* threads : {"1", "4", "1"}) {
      const fs::path out = root / (name + "_t" + threads + "_" + std::to_string(dirs.size()));
      const auto r = run_cli("--threads " + std::string(threads) + " --out " + out.string() + " " + args);
      if (r.exit_code != 0) bad += " " + name + "(exit " + std::to_string(r.exit_code) + ")";
      dirs.push_back(out);
      stdouts.push_back(r.out);
    }
    for (std::size_t k = 1; k < dirs.size(); ++k) {
      if (stdouts[k] != stdouts[0]) bad += " " + name + "(stdout)";
      for (const auto& entry : fs::directory_iterator(dirs[0])) {
        const fs::path twin = dirs[k] / entry.path().filename();
        if (!fs::exists(twin) || read_binary_file(entry.path()) != read_binary_file(twin))
          bad += " " + name + "(" + entry.path().filename().string() + ")";
      }
    }
  }
  Outcome o;
  o.pass = bad.empty();
  o.detail = std::to_string(commands.size()) + " commands x threads {1,4,1}: " +
             (bad.empty() ? std::string("byte-identical") : "differences:" + bad);
  return o;
}

// 10. Shipped presets reproduce the published constants.
Outcome presets() {
  const fs::path dir = fs::path(EPIFLOW_SOURCE_DIR) / "config" / "presets";
  std::string bad;
  const RobustConfig r = parse_robust_config(read_text_file(dir / "robust_default.conf"));
  if (!(r.inlier_threshold == 0.001 && r.sample_pool == 10000 && r.test_set_size == 2000 &&
        r.irls_objective_floor == 1e-20 && r.irls_max_iters == 200))
    bad += " robust_default";
  if (to_config_text(r) != to_config_text(RobustConfig{})) bad += " robust_default(embedded)";
  struct Want {
    const char* name;
    std::array<double, 5> lambdas;
    LossMode mode;
  };
  const Want wants[] = {{"kitti_baseline", {1, 0.1, 0.1, 0, 0}, LossMode::Teacher},
                        {"kitti_teacher", {1, 0.1, 0.1, 1000, 0}, LossMode::Teacher},
                        {"kitti_student", {1, 0, 0, 1000, 1}, LossMode::Student},
                        {"rgbd", {1, 0.1, 1, 100, 1}, LossMode::Student}};
  for (const Want& want : wants) {
    const LossWeights w = parse_loss_config(read_text_file(dir / (std::string(want.name) + ".conf")));
    const std::array<double, 5> got = {w.lambda_p, w.lambda_c, w.lambda_s, w.lambda_e, w.lambda_o};
    const std::array<double, 5> scales = {1, 0.34, 0.31, 0.27, 0.08};
    if (got != want.lambdas || w.mode != want.mode || w.scale != scales || w.charbonnier_eps != 1e-3 ||
        w.charbonnier_gamma != 0.45 || to_config_text(w) != to_config_text(loss_preset(want.name)))
      bad += std::string(" ") + want.name;
  }
  Outcome o;
  o.pass = bad.empty();
  o.detail = bad.empty() ? "5 preset files match embedded values and published constants" : "mismatch:" + bad;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"five-point completeness", five_point},
      {"robust pipeline", robust_pipeline},
      {"IRLS stationarity certificate", irls_certificate},
      {"implicit gradient exactness", implicit_exactness},
      {"bilevel total gradient", total_gradient_check},
      {"algorithm independence", algorithm_independence},
      {"loss zero/floor properties", loss_floors},
      {"pose/odometry metrics", odometry},
      {"CLI determinism", determinism},
      {"preset fidelity", presets},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-32s %s  %s\n", k + 1, criteria[k].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
