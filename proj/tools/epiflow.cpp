#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "epiflow/error.hpp"
#include "epiflow/flow.hpp"
#include "epiflow/implicit_diff.hpp"
#include "epiflow/io.hpp"
#include "epiflow/losses.hpp"
#include "epiflow/odometry.hpp"
#include "epiflow/parallel.hpp"
#include "epiflow/rng.hpp"
#include "epiflow/robust.hpp"
#include "epiflow/synth.hpp"
#include "run_context.hpp"

#ifndef EPIFLOW_VERSION
#define EPIFLOW_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace epiflow;
using namespace epiflow::cli;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

struct Globals {
  int threads = 0;
  std::string manifest;
  std::string out;
};

struct RobustFlags {
  std::string config;
  std::optional<double> delta;
  std::optional<std::size_t> hypotheses;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--robust-config", config, "key=value RobustConfig file");
    cmd->add_option("--delta", delta, "Inlier threshold on |x'^T E x|");
    cmd->add_option("--hypotheses", hypotheses, "RANSAC hypothesis count");
    cmd->add_option("--seed", seed, "RNG seed (default: $EPIFLOW_SEED, else 0)");
  }

  RobustConfig resolve(RunContext& ctx) const {
    RobustConfig cfg;
    cfg.rng_seed = default_seed(cfg.rng_seed);
    if (!config.empty()) cfg = parse_robust_config(read_text_file(ctx.input(config)), cfg);
    if (delta) cfg.inlier_threshold = *delta;
    if (hypotheses) cfg.hypothesis_count = *hypotheses;
    if (seed) cfg.rng_seed = *seed;
    cfg.validate();
    ctx.config_text("robust.", to_config_text(cfg));
    ctx.seed(cfg.rng_seed);
    return cfg;
  }
};

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& mask) {
  std::string s = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (std::uint8_t m : mask) s += static_cast<char>(m ? 255 : 0);
  write_text_file(path, s);
}

std::vector<std::uint8_t> read_mask(const fs::path& path) {
  const Image img = read_image(path);
  std::vector<std::uint8_t> mask(img.size());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      mask[static_cast<std::size_t>(y) * img.width() + x] = img.at(x, y, 0) > 0.0 ? 1 : 0;
  return mask;
}

std::string pose_row(const Pose34& T) {
  std::vector<double> v;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) v.push_back(T(r, c));
  return format_list(v);
}

std::string mat_row(const Mat3& R) {
  std::vector<double> v;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v.push_back(R(r, c));
  return format_list(v);
}

std::string vec_row(const Vec3& t) { return format_list(std::vector<double>{t.x(), t.y(), t.z()}); }

// ---------------------------------------------------------------- synth

struct SynthFlags {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
};

Report cmd_synth(const SynthFlags& f, const Globals& g, RunContext& ctx) {
  if (g.out.empty()) throw Error(ErrorCode::ConfigError, "synth needs --out <dir>");
  SceneConfig cfg;
  cfg.rng_seed = default_seed(cfg.rng_seed);
  if (!f.config.empty()) cfg = parse_scene_config(read_text_file(ctx.input(f.config)), cfg);
  if (!f.set.empty()) cfg = parse_scene_config(join_lines(f.set), cfg);
  if (f.seed) cfg.rng_seed = *f.seed;
  cfg.validate();
  ctx.config_text("scene.", to_config_text(cfg));
  ctx.seed(cfg.rng_seed);

  const SyntheticScene scene = generate_scene(cfg);
  const fs::path dir = g.out;
  fs::create_directories(dir);

  write_flo(dir / "flow.flo", scene.flow);
  write_flo(dir / "flow_gt.flo", scene.flow_clean);
  write_text_file(dir / "intrinsics.txt", format_intrinsics(cfg.K, cfg.K2));
  write_text_file(dir / "scene.conf", to_config_text(cfg));
  {
    Trajectory traj;
    traj.poses.push_back(Pose34::Identity());
    traj.poses.push_back(scene.second_camera_to_world());
    std::ostringstream os;
    write_trajectory(os, traj);
    write_text_file(dir / "pose.txt", os.str());
  }
  if (cfg.mode == SceneMode::Sparse) {
    std::vector<CorrespondenceRow> rows(scene.first.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      rows[i] = {scene.first[i], scene.second[i], scene.inlier[i] ? 1 : 0};
    std::ostringstream os;
    write_correspondence_table(os, rows);
    write_text_file(dir / "corr.txt", os.str());
  } else {
    write_flo(dir / "flow_bwd.flo", scene.flow_backward);
    write_ppm(dir / "image1.ppm", scene.image1);
    write_ppm(dir / "image2.ppm", scene.image2);
    std::vector<std::uint8_t> visible(static_cast<std::size_t>(cfg.width) * cfg.height, 0);
    for (std::size_t k = 0; k < scene.pixel_index.size(); ++k)
      visible[scene.pixel_index[k]] = scene.visible[k];
    write_pgm(dir / "visible.pgm", cfg.width, cfg.height, visible);
  }

  std::size_t outliers = 0;
  for (auto in : scene.inlier) outliers += in ? 0 : 1;
  Report r;
  r.add("command", std::string("synth"));
  r.add("mode", to_string(cfg.mode));
  r.add("rng_seed", static_cast<std::size_t>(cfg.rng_seed));
  r.add("points", scene.first.size());
  r.add("planted_outliers", outliers);
  r.add("rotation_angle_deg", rotation_angle_between(scene.R, Mat3::Identity()) * kDeg);
  r.add("R", mat_row(scene.R));
  r.add("t", vec_row(scene.t));
  r.add("baseline", scene.scale);
  return r;
}

// ---------------------------------------------------------------- estimate

struct EstimationInput {
  NormalizedCorrespondenceSet corr;
  CameraIntrinsics K, K2;
  std::optional<RigidMotion> gt;
};

struct InputFlags {
  std::string scene;
  std::string corr;
  std::string flow;
  std::string intrinsics;
  std::string gt;

  EstimationInput load(RunContext& ctx) const {
    std::string c = corr, fl = flow, in = intrinsics, p = gt;
    if (!scene.empty()) {
      const fs::path d = scene;
      if (c.empty() && fl.empty()) {
        if (fs::exists(d / "corr.txt")) c = (d / "corr.txt").string();
        else fl = (d / "flow.flo").string();
      }
      if (in.empty()) in = (d / "intrinsics.txt").string();
      if (p.empty() && fs::exists(d / "pose.txt")) p = (d / "pose.txt").string();
    }
    if (c.empty() == fl.empty())
      throw Error(ErrorCode::ConfigError, "give exactly one of --corr or --flow (or --scene)");
    if (in.empty()) throw Error(ErrorCode::ConfigError, "--intrinsics is required");

    EstimationInput out;
    std::tie(out.K, out.K2) = parse_intrinsics(read_text_file(ctx.input(in)));
    if (!c.empty()) {
      std::istringstream is(read_text_file(ctx.input(c)));
      out.corr = normalize_rows(read_correspondence_table(is), out.K, out.K2);
    } else {
      out.corr = correspondences_from_flow(read_flo(ctx.input(fl)), out.K, out.K2);
    }
    if (!p.empty()) {
      std::istringstream is(read_text_file(ctx.input(p)));
      const Trajectory traj = read_trajectory(is);
      if (traj.size() < 2) throw Error(ErrorCode::IoError, p + ": need two poses");
      out.gt = relative_motion(traj.poses[0], traj.poses[1]);
    }
    return out;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--scene", scene, "Scene directory written by synth");
    cmd->add_option("--corr", corr, "Correspondence table (u v u' v' [label])");
    cmd->add_option("--flow", flow, "Forward flow (.flo)");
    cmd->add_option("--intrinsics", intrinsics, "key=value intrinsics file");
    cmd->add_option("--gt", gt, "Two-pose trajectory to report pose errors against");
  }
};

NormalizedCorrespondenceSet select(const NormalizedCorrespondenceSet& corr, const InlierMask& mask) {
  NormalizedCorrespondenceSet out;
  for (std::size_t i = 0; i < corr.size(); ++i)
    if (mask[i]) out.push_back(corr[i]);
  return out;
}

struct EstimateFlags {
  InputFlags input;
  RobustFlags robust;
};

Report cmd_estimate(const EstimateFlags& f, RunContext& ctx) {
  const RobustConfig cfg = f.robust.resolve(ctx);
  const EstimationInput in = f.input.load(ctx);
  const EstimationResult res = estimate_essential(in.corr, cfg);
  const RelativePose pose = decompose_essential(res.E, select(in.corr, res.inliers));

  Pose34 T;
  T.leftCols<3>() = pose.R.transpose();
  T.col(3) = -pose.R.transpose() * pose.t;
  std::string mask;
  for (auto m : res.inliers) mask += m ? '1' : '0';

  Report r;
  r.add("command", std::string("estimate"));
  r.add("correspondences", in.corr.size());
  r.add("R", mat_row(pose.R));
  r.add("t", vec_row(pose.t));
  r.add("pose", pose_row(T));
  r.add("inliers", count_inliers(res.inliers));
  r.add("objective", res.objective);
  r.add("irls_iterations", res.iterations);
  r.add("stop_reason", res.diagnostics.stop_reason);
  r.add("converged", res.diagnostics.converged);
  r.add("gradient_inf_norm", res.gradient_inf_norm);
  r.add("hypotheses_tried", res.diagnostics.hypotheses_tried);
  r.add("ransac_best_test_inliers", res.diagnostics.best_inlier_count);
  r.add("lm_steps", res.diagnostics.lm_steps);
  if (in.gt) {
    r.add("rotation_error_deg", rotation_angle_between(pose.R, in.gt->R) * kDeg);
    r.add("translation_error_deg", direction_angle_between(pose.t, in.gt->t) * kDeg);
  }
  r.add("inlier_mask", mask);
  return r;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckFlags {
  InputFlags input;
  RobustFlags robust;
  std::size_t n_probes = 10;
  double step = 1e-5;
};

double relative_error(double diff, double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return denom > 0.0 ? diff / denom : 0.0;
}

Report cmd_gradcheck(const GradcheckFlags& f, RunContext& ctx, int& exit_code) {
  if (!(f.step > 0.0)) throw Error(ErrorCode::ConfigError, "--step must be > 0");
  if (f.n_probes < 1) throw Error(ErrorCode::ConfigError, "--n-probes must be >= 1");
  const RobustConfig cfg = f.robust.resolve(ctx);
  ctx.config("gradcheck.n_probes", std::to_string(f.n_probes));
  ctx.config("gradcheck.step", format_double(f.step));
  const EstimationInput in = f.input.load(ctx);
  const EstimationResult res = estimate_essential(in.corr, cfg);
  const ImplicitGradient g = dtheta_dflow(in.corr, res, in.K2);
  const EpipolarLoss le = epipolar_loss(in.corr, res.params);
  const Eigen::VectorXd total = total_gradient(le.flow_gradient(in.K2), le.d_theta, g);

  std::vector<std::size_t> inl, outl;
  for (std::size_t i = 0; i < res.inliers.size(); ++i) (res.inliers[i] ? inl : outl).push_back(i);
  bool outliers_zero = true;
  double theta_scale = 0.0, le_scale = 0.0;
  for (std::size_t i : outl)
    outliers_zero = outliers_zero && g.dtheta_dflow.col(2 * i).isZero(0.0) &&
                    g.dtheta_dflow.col(2 * i + 1).isZero(0.0);
  for (std::size_t i : inl)
    for (std::size_t c = 2 * i; c < 2 * i + 2; ++c) {
      theta_scale += g.dtheta_dflow.col(static_cast<Eigen::Index>(c)).norm();
      le_scale += std::abs(total[static_cast<Eigen::Index>(c)]);
    }
  // Columns that are zero in exact arithmetic are compared against a floor
  // of 1e-8 of the typical column magnitude rather than against themselves.
  const double n_inl_cols = std::max<double>(1.0, 2.0 * static_cast<double>(inl.size()));
  const double theta_floor = 1e-8 * theta_scale / n_inl_cols;
  const double le_floor = 1e-8 * le_scale / n_inl_cols;

  CounterRng rng(cfg.rng_seed, Stream::Probe);
  const std::size_t want_out = (!outl.empty() && f.n_probes > 1) ? 1 : 0;
  const std::size_t want_in = std::min(f.n_probes - want_out, inl.size());
  std::vector<std::size_t> columns;
  for (std::size_t k = 0; k < want_in; ++k) {
    std::swap(inl[k], inl[k + rng.below(inl.size() - k)]);
    columns.push_back(2 * inl[k] + rng.below(2));
  }
  if (want_out) columns.push_back(2 * outl[rng.below(outl.size())] + rng.below(2));

  Report r;
  r.add("command", std::string("gradcheck"));
  r.add("correspondences", in.corr.size());
  r.add("inliers", count_inliers(res.inliers));
  r.add("condition_number", g.condition_number);
  r.add("step_px", f.step);
  r.add("outlier_columns_zero", outliers_zero);

  double max_err = 0.0;
  std::size_t flips = 0;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const std::size_t col = columns[k];
    const auto c = static_cast<Eigen::Index>(col);
    const ResolveProbe pt = resolve_column(in.corr, res, in.K2, col, f.step, cfg);
    const ResolveLossProbe pl = resolve_epipolar_column(in.corr, res, in.K2, col, f.step, cfg);
    const Vec5 a = g.dtheta_dflow.col(c);
    const double err_t = relative_error((a - pt.derivative).norm(), a.norm(), pt.derivative.norm(),
                                        theta_floor);
    const double err_l =
        relative_error(std::abs(total[c] - pl.derivative), total[c], pl.derivative, le_floor);
    const bool flip = pt.inlier_flip || pl.inlier_flip;
    flips += flip ? 1 : 0;
    max_err = std::max({max_err, err_t, err_l});

    const std::string p = "probe." + std::to_string(k) + ".";
    r.add(p + "column", col);
    r.add(p + "pixel", in.corr[col / 2].source);
    r.add(p + "component", std::string(col % 2 ? "v" : "u"));
    r.add(p + "inlier", res.inliers[col / 2] != 0);
    r.add(p + "dtheta_norm", a.norm());
    r.add(p + "dtheta_rel_error", err_t);
    r.add(p + "dle_analytic", total[c]);
    r.add(p + "dle_fd", pl.derivative);
    r.add(p + "dle_rel_error", err_l);
    r.add(p + "inlier_flip", flip);
  }
  const bool pass = max_err < 1e-3 && flips == 0 && outliers_zero;
  r.add("probes", columns.size());
  r.add("inlier_flips", flips);
  r.add("max_rel_error", max_err);
  r.add("status", std::string(pass ? "PASS" : (flips ? "FLIPPED" : "FAIL")));
  exit_code = pass ? kOk : kNumerical;
  return r;
}

// ---------------------------------------------------------------- eval-odom

struct OdomFlags {
  std::string est;
  std::string gt;
  std::vector<double> lengths = {100, 200, 300, 400, 500, 600, 700, 800};
};

Trajectory load_trajectory(RunContext& ctx, const std::string& path) {
  std::istringstream is(read_text_file(ctx.input(path)));
  return read_trajectory(is);
}

Report cmd_eval_odom(const OdomFlags& f, const Globals& g, RunContext& ctx) {
  ctx.config("odom.lengths", format_list(f.lengths));
  const Trajectory est = load_trajectory(ctx, f.est);
  const Trajectory gt = load_trajectory(ctx, f.gt);
  const OdometryErrors e = relative_errors(est, gt, f.lengths);

  Report r;
  r.add("command", std::string("eval-odom"));
  r.add("frames", gt.size());
  r.add("t_err_percent", e.t_err);
  r.add("r_err_deg_per_100m", e.r_err);
  std::string tsv = "length_m\twindows\tt_err_percent\tr_err_deg_per_100m\n";
  for (const LengthError& l : e.per_length) {
    const std::string p = "length." + format_double(l.length) + ".";
    r.add(p + "windows", l.windows);
    r.add(p + "t_err_percent", l.t_err);
    r.add(p + "r_err_deg_per_100m", l.r_err);
    tsv += format_double(l.length) + "\t" + std::to_string(l.windows) + "\t" + format_double(l.t_err) +
           "\t" + format_double(l.r_err) + "\n";
  }
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    write_text_file(fs::path(g.out) / "odom_errors.tsv", tsv);
  } else {
    std::cerr << tsv;
  }
  return r;
}

// ---------------------------------------------------------------- eval-flow

struct FlowFlags {
  std::string flow;
  std::string gt;
  std::string mask;
};

Report cmd_eval_flow(const FlowFlags& f, RunContext& ctx) {
  const FlowField flow = read_flo(ctx.input(f.flow));
  const FlowField gt = read_flo(ctx.input(f.gt));
  std::vector<std::uint8_t> mask;
  if (!f.mask.empty()) mask = read_mask(ctx.input(f.mask));
  Report r;
  r.add("command", std::string("eval-flow"));
  r.add("width", flow.width());
  r.add("height", flow.height());
  r.add("aepe", aepe(flow, gt, mask));
  return r;
}

// ---------------------------------------------------------------- losses

struct LossFlags {
  std::string scene;
  std::string image1, image2, flow, flow_bwd, intrinsics, teacher, occlusion_set;
  std::string preset = "kitti_teacher";
  std::string preset_file;
  std::vector<std::string> set;
  std::string epipolar = "auto";
  RobustFlags robust;
};

Report cmd_losses(const LossFlags& f, RunContext& ctx) {
  LossWeights w = f.preset_file.empty() ? loss_preset(f.preset)
                                        : parse_loss_config(read_text_file(ctx.input(f.preset_file)));
  if (!f.set.empty()) w = parse_loss_config(join_lines(f.set), w);
  w.validate();
  ctx.config_text("weights.", to_config_text(w));
  if (f.epipolar != "auto" && f.epipolar != "on" && f.epipolar != "off")
    throw Error(ErrorCode::ConfigError, "--epipolar must be auto, on or off");
  const bool want_le = f.epipolar == "on" || (f.epipolar == "auto" && w.lambda_e > 0.0);
  ctx.config("losses.epipolar", want_le ? "on" : "off");

  auto pick = [&](const std::string& given, const char* name) {
    if (!given.empty() || f.scene.empty()) return given;
    const fs::path p = fs::path(f.scene) / name;
    return fs::exists(p) ? p.string() : std::string();
  };
  const std::string i1 = pick(f.image1, "image1.ppm"), i2 = pick(f.image2, "image2.ppm");
  const std::string fw = pick(f.flow, "flow.flo"), bw = pick(f.flow_bwd, "flow_bwd.flo");
  if (i1.empty() || i2.empty() || fw.empty() || bw.empty())
    throw Error(ErrorCode::ConfigError,
                "losses needs two images and forward/backward flow (a dense synth scene or "
                "--image1 --image2 --flow --flow-bwd)");

  const Image I = read_image(ctx.input(i1));
  const Image I2 = read_image(ctx.input(i2));
  const FlowField fwd = read_flo(ctx.input(fw));
  const FlowField bwd = read_flo(ctx.input(bw));

  std::optional<FlowField> teacher;
  std::optional<std::vector<std::uint8_t>> O;
  if (w.mode == LossMode::Student) {
    const std::string t = pick(f.teacher, "flow_gt.flo"), o = pick(f.occlusion_set, "visible.pgm");
    if (t.empty() || o.empty())
      throw Error(ErrorCode::ConfigError, "student mode needs --teacher and --occlusion-set");
    teacher = read_flo(ctx.input(t));
    O = read_mask(ctx.input(o));
  }

  Report r;
  r.add("command", std::string("losses"));
  r.add("preset", f.preset_file.empty() ? f.preset : std::string("file"));
  r.add("mode", to_string(w.mode));
  for (const auto& [k, v] : parse_key_values(to_config_text(w))) r.add("weights." + k, v);

  double le = 0.0;
  if (want_le) {
    const std::string in = pick(f.intrinsics, "intrinsics.txt");
    if (in.empty()) throw Error(ErrorCode::ConfigError, "L_e needs --intrinsics");
    const RobustConfig cfg = f.robust.resolve(ctx);
    const auto [K, K2] = parse_intrinsics(read_text_file(ctx.input(in)));
    const NormalizedCorrespondenceSet corr = correspondences_from_flow(fwd, K, K2);
    const EstimationResult res = estimate_essential(corr, cfg);
    le = epipolar_loss(corr, res.params).value;
    r.add("epipolar.correspondences", corr.size());
    r.add("epipolar.inliers", count_inliers(res.inliers));
  }

  const std::vector<ScaleTerms> terms = pyramid_terms(I, I2, fwd, bwd, teacher ? &*teacher : nullptr,
                                                      O ? &*O : nullptr, w);
  for (std::size_t s = 0; s < terms.size(); ++s) {
    const std::string p = "scale." + std::to_string(s) + ".";
    r.add(p + "photometric", terms[s].photometric);
    r.add(p + "consistency", terms[s].consistency);
    r.add(p + "smoothness", terms[s].smoothness);
    if (w.mode == LossMode::Student) r.add(p + "occlusion", terms[s].occlusion);
  }
  const LossBreakdown b = total_loss(terms, le, w, w.mode);
  r.add("L_e", le);
  r.add("weighted.photometric", b.photometric);
  r.add("weighted.consistency", b.consistency);
  r.add("weighted.smoothness", b.smoothness);
  r.add("weighted.occlusion", b.occlusion);
  r.add("weighted.epipolar", b.epipolar);
  r.add("total", b.total);
  return r;
}

// ---------------------------------------------------------------- driver

bool is_inline_flag(const std::string& tok, const std::string& name) {
  return tok.rfind(name + "=", 0) == 0;
}

/// Command-line tokens minus the global flags that must not change outputs
/// (--threads, --out) or that triggered the replay (--manifest).
std::vector<std::string> canonical_args(const std::vector<std::string>& tokens,
                                        std::optional<std::uint64_t> seed) {
  std::vector<std::string> out;
  bool has_seed = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t == "--threads" || t == "--out" || t == "--manifest") {
      ++i;
      continue;
    }
    if (is_inline_flag(t, "--threads") || is_inline_flag(t, "--out") || is_inline_flag(t, "--manifest"))
      continue;
    if (t == "--seed" || is_inline_flag(t, "--seed")) has_seed = true;
    out.push_back(t);
  }
  if (!out.empty()) out.erase(out.begin());  // the subcommand itself
  if (!has_seed && seed) {
    out.push_back("--seed");
    out.push_back(std::to_string(*seed));
  }
  return out;
}

int run(std::vector<std::string> tokens) {
  CLI::App app{"Robust essential-matrix estimation, implicit gradients and unsupervised flow losses", "epiflow"};
  app.set_version_flag("--version", std::string(EPIFLOW_VERSION));
  app.require_subcommand(0, 1);
  Globals g;
  app.add_option("--threads", g.threads, "OpenMP worker count (results do not depend on it)");
  app.add_option("--manifest", g.manifest, "Replay the run recorded in a manifest");
  app.add_option("--out", g.out, "Output directory (result.txt and manifest.txt go here)");
  app.fallthrough();

  SynthFlags synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic two-view scene");
  c_synth->add_option("--config", synth.config, "key=value SceneConfig file");
  c_synth->add_option("--set", synth.set, "key=value override, repeatable");
  c_synth->add_option("--seed", synth.seed, "RNG seed (default: $EPIFLOW_SEED, else 1)");

  EstimateFlags est;
  auto* c_est = app.add_subcommand("estimate", "RANSAC + IRLS essential matrix and relative pose");
  est.input.attach(c_est);
  est.robust.attach(c_est);

  GradcheckFlags gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Implicit gradients against re-solve finite differences");
  gc.input.attach(c_gc);
  gc.robust.attach(c_gc);
  c_gc->add_option("--n-probes", gc.n_probes, "Flow entries to probe")->capture_default_str();
  c_gc->add_option("--step", gc.step, "Central-difference step in px")->capture_default_str();

  OdomFlags od;
  auto* c_od = app.add_subcommand("eval-odom", "Relative translation and rotation errors");
  c_od->add_option("--est", od.est, "Estimated camera-to-world poses")->required();
  c_od->add_option("--gt", od.gt, "Ground-truth camera-to-world poses")->required();
  c_od->add_option("--lengths", od.lengths, "Path lengths in metres")->delimiter(',');

  FlowFlags fl;
  auto* c_fl = app.add_subcommand("eval-flow", "Average endpoint error");
  c_fl->add_option("--flow", fl.flow, "Estimated flow (.flo)")->required();
  c_fl->add_option("--gt", fl.gt, "Ground-truth flow (.flo)")->required();
  c_fl->add_option("--mask", fl.mask, "PGM/PPM/PNG; nonzero pixels are evaluated");

  LossFlags ls;
  auto* c_ls = app.add_subcommand("losses", "Per-term unsupervised loss breakdown");
  c_ls->add_option("--scene", ls.scene, "Dense scene directory written by synth");
  c_ls->add_option("--image1", ls.image1);
  c_ls->add_option("--image2", ls.image2);
  c_ls->add_option("--flow", ls.flow, "Forward flow (.flo)");
  c_ls->add_option("--flow-bwd", ls.flow_bwd, "Backward flow (.flo)");
  c_ls->add_option("--intrinsics", ls.intrinsics);
  c_ls->add_option("--teacher", ls.teacher, "Teacher flow for the student term");
  c_ls->add_option("--occlusion-set", ls.occlusion_set, "Mask of pixels the student term covers");
  c_ls->add_option("--preset", ls.preset, "kitti_baseline, kitti_teacher, kitti_student or rgbd")
      ->capture_default_str();
  c_ls->add_option("--preset-file", ls.preset_file, "key=value LossWeights file");
  c_ls->add_option("--set", ls.set, "key=value weight override, repeatable");
  c_ls->add_option("--epipolar", ls.epipolar, "auto (when lambda_e > 0), on or off")
      ->capture_default_str();
  ls.robust.attach(c_ls);

  try {
    std::vector<std::string> reversed(tokens.rbegin(), tokens.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (g.threads > 0) parallel::set_threads(g.threads);
    if (!g.manifest.empty()) {
      const ReplayPlan plan = load_manifest(g.manifest);
      std::vector<std::string> next{plan.command};
      next.insert(next.end(), plan.args.begin(), plan.args.end());
      if (!g.out.empty()) next.insert(next.end(), {"--out", g.out});
      return run(next);
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return kConfig;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    RunContext ctx(name);
    Report report;
    int code = kOk;
    if (name == "synth") report = cmd_synth(synth, g, ctx);
    else if (name == "estimate") report = cmd_estimate(est, ctx);
    else if (name == "gradcheck") report = cmd_gradcheck(gc, ctx, code);
    else if (name == "eval-odom") report = cmd_eval_odom(od, g, ctx);
    else if (name == "eval-flow") report = cmd_eval_flow(fl, ctx);
    else report = cmd_losses(ls, ctx);
    // A seed resolved from the environment or a config file is made explicit
    // so that replay does not depend on either.
    ctx.set_args(canonical_args(tokens, ctx.recorded_seed()));

    const std::string text = report.text();
    std::cout << text;
    if (!g.out.empty()) {
      fs::create_directories(g.out);
      write_text_file(fs::path(g.out) / "result.txt", text);
      write_text_file(fs::path(g.out) / "manifest.txt", ctx.manifest_text(EPIFLOW_VERSION));
    }
    return code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(std::vector<std::string>(argv + 1, argv + argc)); }
