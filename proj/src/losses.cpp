#include "epiflow/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "epiflow/error.hpp"
#include "epiflow/io.hpp"
#include "epiflow/parallel.hpp"
#include "kernels.hpp"

namespace epiflow {
namespace {

void require_same_size(int w1, int h1, int w2, int h2, const char* what) {
  if (w1 != w2 || h1 != h2) {
    throw Error(ErrorCode::ConfigError, std::string(what) + ": dimensions differ");
  }
}

// Masked mean over per-pixel terms; the pairwise tree keeps the sum
// independent of the thread count.
double masked_mean(std::vector<double>& terms, std::size_t count, const char* what) {
  if (count == 0) throw Error(ErrorCode::EmptyMask, std::string(what) + ": mask is empty");
  return parallel::pairwise_sum(terms) / static_cast<double>(count);
}

}  // namespace

void LossWeights::validate() const {
  for (double s : scale) {
    if (!(s >= 0.0)) throw Error(ErrorCode::ConfigError, "scale weights must be >= 0");
  }
  for (double v : {lambda_p, lambda_c, lambda_s, lambda_e, lambda_o, smoothness_alpha,
                   census_tolerance, occlusion_beta1, occlusion_beta2}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::ConfigError, "loss weights and thresholds must be finite and >= 0");
    }
  }
  if (!(charbonnier_eps > 0.0)) throw Error(ErrorCode::ConfigError, "charbonnier_eps must be > 0");
  if (!(charbonnier_gamma > 0.0)) throw Error(ErrorCode::ConfigError, "charbonnier_gamma must be > 0");
  if (census_window < 3 || census_window % 2 == 0) {
    throw Error(ErrorCode::ConfigError, "census_window must be odd and >= 3");
  }
}

double charbonnier(std::span<const double> z, double eps, double gamma) {
  if (z.empty()) return 0.0;
  const double eps2 = eps * eps;
  double acc = 0.0;
  for (double v : z) acc += kernels::charbonnier_term(v, eps2, gamma);
  return acc / static_cast<double>(z.size());
}

double charbonnier(const Vec2& z, double eps, double gamma) {
  const double eps2 = eps * eps;
  return 0.5 * (kernels::charbonnier_term(z.x(), eps2, gamma) +
                kernels::charbonnier_term(z.y(), eps2, gamma));
}

ScalarGrid grayscale(const Image& img) {
  ScalarGrid g{img.width(), img.height(), std::vector<double>(img.size())};
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      g.values[static_cast<std::size_t>(y) * img.width() + x] =
          0.2989 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    }
  }
  return g;
}

CensusField census_transform(const Image& img, int window, double tolerance) {
  if (window < 3 || window % 2 == 0) {
    throw Error(ErrorCode::ConfigError, "census window must be odd and >= 3");
  }
  const ScalarGrid g = grayscale(img);
  CensusField c;
  c.width = img.width();
  c.height = img.height();
  c.window = window;
  const int r = window / 2;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx == 0 && dy == 0) continue;
      ScalarGrid plane{c.width, c.height, std::vector<double>(img.size())};
      for (int y = 0; y < c.height; ++y) {
        for (int x = 0; x < c.width; ++x) {
          const double d = g.clamped(x + dx, y + dy) - g.at(x, y);
          plane.values[static_cast<std::size_t>(y) * c.width + x] =
              d > tolerance ? 1.0 : (d < -tolerance ? -1.0 : 0.0);
        }
      }
      c.planes.push_back(std::move(plane));
    }
  }
  return c;
}

OcclusionMask occlusion_mask(const FlowField& forward, const FlowField& backward, double beta1,
                             double beta2) {
  require_same_size(forward.width(), forward.height(), backward.width(), backward.height(),
                    "occlusion_mask");
  const int W = forward.width(), H = forward.height();
  OcclusionMask m;
  m.non_occluded.assign(forward.size(), 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      m.non_occluded[forward.index(x, y)] = kernels::non_occluded(forward, backward, x, y, beta1, beta2);
    }
  }
  m.count = static_cast<std::size_t>(
      std::count(m.non_occluded.begin(), m.non_occluded.end(), std::uint8_t{1}));
  return m;
}

double photometric_loss(const CensusField& c1, const CensusField& c2, const FlowField& forward,
                        const OcclusionMask& mask, const LossWeights& w) {
  require_same_size(c1.width, c1.height, c2.width, c2.height, "photometric_loss");
  require_same_size(c1.width, c1.height, forward.width(), forward.height(), "photometric_loss");
  std::vector<double> terms(forward.size(), 0.0);
  const int W = forward.width(), H = forward.height();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t i = forward.index(x, y);
      if (mask.non_occluded[i]) terms[i] = kernels::photometric_term(c1, c2, forward, x, y, w);
    }
  }
  return masked_mean(terms, mask.count, "photometric_loss");
}

double photometric_loss(const Image& I, const Image& I2, const FlowField& forward,
                        const OcclusionMask& mask, const LossWeights& w) {
  return photometric_loss(census_transform(I, w.census_window, w.census_tolerance),
                          census_transform(I2, w.census_window, w.census_tolerance), forward,
                          mask, w);
}

double fb_consistency_loss(const FlowField& forward, const FlowField& backward,
                           const OcclusionMask& mask, const LossWeights& w) {
  require_same_size(forward.width(), forward.height(), backward.width(), backward.height(),
                    "fb_consistency_loss");
  std::vector<double> terms(forward.size(), 0.0);
  const int W = forward.width(), H = forward.height();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t i = forward.index(x, y);
      if (mask.non_occluded[i]) terms[i] = kernels::consistency_term(forward, backward, x, y, w);
    }
  }
  return masked_mean(terms, mask.count, "fb_consistency_loss");
}

double smoothness_loss(const Image& I, const FlowField& flow, double alpha) {
  require_same_size(I.width(), I.height(), flow.width(), flow.height(), "smoothness_loss");
  std::vector<double> terms(flow.size(), 0.0);
  const int W = flow.width(), H = flow.height();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) terms[flow.index(x, y)] = kernels::smoothness_term(I, flow, x, y, alpha);
  }
  return parallel::pairwise_sum(terms) / (2.0 * static_cast<double>(flow.size()));
}

double occlusion_loss(const FlowField& student, const FlowField& teacher,
                      const std::vector<std::uint8_t>& O, const LossWeights& w) {
  require_same_size(student.width(), student.height(), teacher.width(), teacher.height(),
                    "occlusion_loss");
  if (O.size() != student.size()) throw Error(ErrorCode::ConfigError, "occlusion_loss: mask size");
  std::vector<double> terms(student.size(), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < O.size(); ++i) {
    if (!O[i]) continue;
    ++count;
    terms[i] = charbonnier(student.at(i) - teacher.at(i), w.charbonnier_eps, w.charbonnier_gamma);
  }
  return masked_mean(terms, count, "occlusion_loss");
}

Eigen::VectorXd EpipolarLoss::flow_gradient(const CameraIntrinsics& K2) const {
  const Eigen::Matrix<double, 3, 2> P = K2.inverse().leftCols<2>();
  Eigen::VectorXd g(2 * static_cast<Eigen::Index>(d_second.size()));
  for (std::size_t i = 0; i < d_second.size(); ++i) {
    g.segment<2>(static_cast<Eigen::Index>(2 * i)) = P.transpose() * d_second[i];
  }
  return g;
}

EpipolarLoss epipolar_loss(const NormalizedCorrespondenceSet& corr, const EssentialParams& params) {
  const EssentialJet jet = essential_jet(params, false);
  const std::size_t n = corr.size();
  EpipolarLoss out;
  out.d_second.assign(n, Vec3::Zero());
  std::vector<double> value(n);
  std::array<std::vector<double>, 5> dtheta;
  for (auto& d : dtheta) d.assign(n, 0.0);
  std::vector<std::uint8_t> singular(n, 0);

  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < sn; ++si) {
    const auto i = static_cast<std::size_t>(si);
    const Vec3& x = corr[i].first.homogeneous();
    const Vec3& x2 = corr[i].second.homogeneous();
    const Vec3 l = jet.E * x;
    const double D = l.x() * l.x() + l.y() * l.y();
    if (!(D > 1e-24)) {
      singular[i] = 1;
      continue;
    }
    const double z = x2.dot(l);
    value[i] = z * z / D;
    out.d_second[i] = (2.0 * z / D) * l;
    for (std::size_t k = 0; k < 5; ++k) {
      const Vec3 lk = jet.d[k] * x;
      const double zk = x2.dot(lk);
      const double Dk = 2.0 * (l.x() * lk.x() + l.y() * lk.y());
      dtheta[k][i] = 2.0 * z * zk / D - z * z * Dk / (D * D);
    }
  }
  if (std::find(singular.begin(), singular.end(), std::uint8_t{1}) != singular.end()) {
    std::ostringstream os;
    os << "epipolar line undefined (x maps to the epipole) at correspondence";
    std::size_t listed = 0;
    for (std::size_t i = 0; i < n && listed < 20; ++i) {
      if (singular[i]) {
        os << ' ' << i;
        ++listed;
      }
    }
    throw Error(ErrorCode::EpipoleSingularity, os.str());
  }
  out.value = parallel::pairwise_sum(value);
  for (int k = 0; k < 5; ++k) out.d_theta[k] = parallel::pairwise_sum(dtheta[static_cast<std::size_t>(k)]);
  return out;
}

LossBreakdown total_loss(const std::vector<ScaleTerms>& scales, double epipolar,
                         const LossWeights& w, LossMode mode) {
  if (scales.size() != 5) {
    throw Error(ErrorCode::ConfigError,
                "total_loss needs 5 scales, got " + std::to_string(scales.size()));
  }
  LossBreakdown b;
  for (std::size_t i = 0; i < 5; ++i) {
    b.photometric += w.scale[i] * w.lambda_p * scales[i].photometric;
    b.consistency += w.scale[i] * w.lambda_c * scales[i].consistency;
    b.smoothness += w.scale[i] * w.lambda_s * scales[i].smoothness;
    if (mode == LossMode::Student) b.occlusion += w.scale[i] * w.lambda_o * scales[i].occlusion;
  }
  b.epipolar = w.lambda_e * epipolar;
  b.total = b.photometric + b.consistency + b.smoothness + b.occlusion + b.epipolar;
  return b;
}

Image downsample(const Image& img) {
  const int W = std::max(1, img.width() / 2), H = std::max(1, img.height() / 2);
  Image out(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int sx = 2 * x + dx, sy = 2 * y + dy;
            if (sx < img.width() && sy < img.height()) {
              acc += img.at(sx, sy, c);
              ++n;
            }
          }
        }
        out.at(x, y, c) = acc / n;
      }
    }
  }
  return out;
}

FlowField downsample(const FlowField& flow) {
  const int W = std::max(1, flow.width() / 2), H = std::max(1, flow.height() / 2);
  FlowField out(W, H);
  if (flow.has_mask()) out.clear_mask_to_invalid();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Vec2 acc = Vec2::Zero();
      int n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx, sy = 2 * y + dy;
          if (sx < flow.width() && sy < flow.height() && flow.valid(flow.index(sx, sy))) {
            acc += flow.at(sx, sy);
            ++n;
          }
        }
      }
      if (n == 0) continue;
      out.set(x, y, 0.5 * acc / n);
      if (out.has_mask()) out.mask()[out.index(x, y)] = 1;
    }
  }
  return out;
}

std::vector<std::uint8_t> downsample_mask(const std::vector<std::uint8_t>& mask, int width,
                                          int height) {
  const int W = std::max(1, width / 2), H = std::max(1, height / 2);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(W) * H, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int sx = 2 * x + dx, sy = 2 * y + dy;
          if (sx < width && sy < height && mask[static_cast<std::size_t>(sy) * width + sx]) {
            out[static_cast<std::size_t>(y) * W + x] = 1;
          }
        }
      }
    }
  }
  return out;
}

std::vector<ScaleTerms> pyramid_terms(const Image& I, const Image& I2, const FlowField& forward,
                                      const FlowField& backward, const FlowField* teacher,
                                      const std::vector<std::uint8_t>* O, const LossWeights& w) {
  w.validate();
  const bool student = w.mode == LossMode::Student;
  if (student && (!teacher || !O)) {
    throw Error(ErrorCode::ConfigError, "student mode needs a teacher flow and an occlusion set");
  }
  Image a = I, b = I2;
  FlowField f = forward, bw = backward;
  FlowField t = student ? *teacher : FlowField();
  std::vector<std::uint8_t> o = student ? *O : std::vector<std::uint8_t>();
  std::vector<ScaleTerms> terms;
  for (int level = 0; level < 5; ++level) {
    if (level > 0) {
      const int W = f.width(), H = f.height();
      a = downsample(a);
      b = downsample(b);
      f = downsample(f);
      bw = downsample(bw);
      if (student) {
        t = downsample(t);
        o = downsample_mask(o, W, H);
      }
    }
    const OcclusionMask m = occlusion_mask(f, bw, w.occlusion_beta1, w.occlusion_beta2);
    ScaleTerms s;
    s.photometric = photometric_loss(a, b, f, m, w);
    s.consistency = fb_consistency_loss(f, bw, m, w);
    s.smoothness = smoothness_loss(a, f, w.smoothness_alpha);
    if (student) s.occlusion = occlusion_loss(f, t, o, w);
    terms.push_back(s);
  }
  return terms;
}

const std::map<std::string, LossWeights>& loss_presets() {
  static const std::map<std::string, LossWeights> presets = [] {
    std::map<std::string, LossWeights> p;
    LossWeights base;  // KITTI baseline: (1, 0.1, 0.1, 0)
    p["kitti_baseline"] = base;
    LossWeights teacher = base;
    teacher.lambda_e = 1000.0;
    p["kitti_teacher"] = teacher;
    LossWeights student = base;
    student.lambda_c = 0.0;
    student.lambda_s = 0.0;
    student.lambda_e = 1000.0;
    student.lambda_o = 1.0;
    student.mode = LossMode::Student;
    p["kitti_student"] = student;
    LossWeights rgbd = base;
    rgbd.lambda_s = 1.0;
    rgbd.lambda_e = 100.0;
    rgbd.lambda_o = 1.0;
    rgbd.mode = LossMode::Student;
    p["rgbd"] = rgbd;
    return p;
  }();
  return presets;
}

LossWeights loss_preset(const std::string& name) {
  const auto& p = loss_presets();
  const auto it = p.find(name);
  if (it == p.end()) {
    std::string known;
    for (const auto& [k, v] : p) known += (known.empty() ? "" : ", ") + k;
    throw Error(ErrorCode::ConfigError, "unknown preset '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

std::string to_string(LossMode mode) { return mode == LossMode::Teacher ? "teacher" : "student"; }

std::string to_config_text(const LossWeights& w) {
  std::ostringstream os;
  os << "mode=" << to_string(w.mode) << '\n';
  os << "scale_weights=" << format_list(w.scale) << '\n';
  os << "lambda_p=" << format_double(w.lambda_p) << '\n';
  os << "lambda_c=" << format_double(w.lambda_c) << '\n';
  os << "lambda_s=" << format_double(w.lambda_s) << '\n';
  os << "lambda_e=" << format_double(w.lambda_e) << '\n';
  os << "lambda_o=" << format_double(w.lambda_o) << '\n';
  os << "charbonnier_eps=" << format_double(w.charbonnier_eps) << '\n';
  os << "charbonnier_gamma=" << format_double(w.charbonnier_gamma) << '\n';
  os << "smoothness_alpha=" << format_double(w.smoothness_alpha) << '\n';
  os << "census_window=" << w.census_window << '\n';
  os << "census_tolerance=" << format_double(w.census_tolerance) << '\n';
  os << "occlusion_beta1=" << format_double(w.occlusion_beta1) << '\n';
  os << "occlusion_beta2=" << format_double(w.occlusion_beta2) << '\n';
  return os.str();
}

LossWeights parse_loss_config(const std::string& text, const LossWeights& base) {
  LossWeights w = base;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "mode") {
      if (value == "teacher") w.mode = LossMode::Teacher;
      else if (value == "student") w.mode = LossMode::Student;
      else throw Error(ErrorCode::ConfigError, "mode: expected teacher or student, got '" + value + "'");
    } else if (key == "scale_weights") {
      const std::vector<double> v = parse_list(key, value);
      if (v.size() != 5) throw Error(ErrorCode::ConfigError, "scale_weights: expected 5 values");
      std::copy(v.begin(), v.end(), w.scale.begin());
    } else if (key == "lambda_p") w.lambda_p = parse_double(key, value);
    else if (key == "lambda_c") w.lambda_c = parse_double(key, value);
    else if (key == "lambda_s") w.lambda_s = parse_double(key, value);
    else if (key == "lambda_e") w.lambda_e = parse_double(key, value);
    else if (key == "lambda_o") w.lambda_o = parse_double(key, value);
    else if (key == "charbonnier_eps") w.charbonnier_eps = parse_double(key, value);
    else if (key == "charbonnier_gamma") w.charbonnier_gamma = parse_double(key, value);
    else if (key == "smoothness_alpha") w.smoothness_alpha = parse_double(key, value);
    else if (key == "census_window") w.census_window = static_cast<int>(parse_int(key, value));
    else if (key == "census_tolerance") w.census_tolerance = parse_double(key, value);
    else if (key == "occlusion_beta1") w.occlusion_beta1 = parse_double(key, value);
    else if (key == "occlusion_beta2") w.occlusion_beta2 = parse_double(key, value);
    else throw Error(ErrorCode::ConfigError, "unknown loss config key '" + key + "'");
  }
  w.validate();
  return w;
}

}  // namespace epiflow
