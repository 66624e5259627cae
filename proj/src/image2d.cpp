#include <cmath>
#include <fstream>
#include <sstream>

#include "maskbd/experiments.hpp"

namespace maskbd {

Image synthetic_phantom(Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw ArgumentError("synthetic_phantom: empty image");
  struct Ellipse {
    double cx, cy, ax, ay, angle, value;
  };
  // Coordinates in [-1, 1]^2, additive intensities.
  const Ellipse shapes[] = {
      {0.0, 0.0, 0.80, 0.90, 0.0, 0.6},     {0.0, -0.02, 0.70, 0.82, 0.0, -0.3},
      {0.22, 0.0, 0.12, 0.32, -0.3, 0.35},  {-0.22, 0.0, 0.16, 0.40, 0.3, 0.35},
      {0.0, 0.35, 0.20, 0.22, 0.0, 0.25},   {0.0, -0.55, 0.08, 0.06, 0.0, 0.5},
      {-0.08, -0.6, 0.04, 0.04, 0.0, 0.4},  {0.06, -0.6, 0.05, 0.03, 0.0, 0.4},
  };
  Image img{rows, cols, RVector::Zero(rows * cols)};
  for (Index r = 0; r < rows; ++r) {
    const double py = 1.0 - 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(rows);
    for (Index c = 0; c < cols; ++c) {
      const double px = -1.0 + 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(cols);
      double v = 0.0;
      for (const auto& e : shapes) {
        const double dx = px - e.cx, dy = py - e.cy;
        const double u = (dx * std::cos(e.angle) + dy * std::sin(e.angle)) / e.ax;
        const double w = (-dx * std::sin(e.angle) + dy * std::cos(e.angle)) / e.ay;
        if (u * u + w * w <= 1.0) v += e.value;
      }
      img.pixels[r * cols + c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

Image gaussian_filter(Index rows, Index cols, Index size, double sigma) {
  if (size < 1 || size > rows || size > cols) throw ArgumentError("gaussian_filter: size must fit the grid");
  if (!(sigma > 0.0)) throw ArgumentError("gaussian_filter: sigma must be positive");
  Image f{rows, cols, RVector::Zero(rows * cols)};
  double total = 0.0;
  const double centre = 0.5 * static_cast<double>(size - 1);
  for (Index r = 0; r < size; ++r) {
    for (Index c = 0; c < size; ++c) {
      const double dr = static_cast<double>(r) - centre, dc = static_cast<double>(c) - centre;
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      f.pixels[r * cols + c] = v;
      total += v;
    }
  }
  f.pixels /= total;
  return f;
}

PgmScaling write_pgm(const Image& img, const std::filesystem::path& path) {
  if (img.pixels.size() != img.rows * img.cols || img.rows < 1) throw DimensionError("write_pgm: bad image shape");
  PgmScaling s;
  s.offset = img.pixels.minCoeff();
  const double span = img.pixels.maxCoeff() - s.offset;
  s.scale = span > 0.0 ? 255.0 / span : 1.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string());
  out << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
  for (Index i = 0; i < img.pixels.size(); ++i) {
    const double v = std::round((img.pixels[i] - s.offset) * s.scale);
    out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0))));
  }
  if (!out) throw FormatError("write failed: " + path.string());
  return s;
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  Index cols = 0, rows = 0;
  int maxval = 0;
  try {
    cols = std::stol(token());
    rows = std::stol(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  if (rows < 1 || cols < 1 || maxval < 1 || maxval > 65535) throw FormatError(path.string() + ": bad PGM header");
  Image img{rows, cols, RVector(rows * cols)};
  const int bytes = maxval > 255 ? 2 : 1;
  for (Index i = 0; i < rows * cols; ++i) {
    unsigned v = 0;
    for (int b = 0; b < bytes; ++b) {
      const int ch = in.get();
      if (ch == std::char_traits<char>::eof()) throw FormatError(path.string() + ": truncated PGM payload");
      v = (v << 8) | static_cast<unsigned>(ch);
    }
    img.pixels[i] = static_cast<double>(v) / maxval;
  }
  return img;
}

Experiment2dResult experiment_2d(const Image& image, const Image& filter, const MaskSet& masks,
                                 const Experiment2dConfig& cfg) {
  if (image.rows < 2 || image.cols < 2) throw DimensionError("experiment_2d: the image must be two-dimensional");
  if (filter.rows != image.rows || filter.cols != image.cols) {
    throw DimensionError("experiment_2d: the filter must be embedded in the image grid");
  }
  if (masks.grid() != image.grid()) throw DimensionError("experiment_2d: masks do not match the image grid");
  if (cfg.solver != SolverKind::palm && cfg.solver != SolverKind::ls) {
    throw ValidationError("experiment_2d: solver must be palm or ls");
  }
  const Grid g = image.grid();
  const Signal h(filter.pixels.cast<cplx>(), g);
  const Signal x(image.pixels.cast<cplx>(), g);
  MeasurementSet meas = forward_time(h, x, masks);
  if (cfg.snr_db != kNoNoise) meas = add_awgn(meas, cfg.snr_db, derive_seed(cfg.seed, 3));

  Experiment2dResult out;
  PalmConfig p = cfg.palm;
  p.seed = derive_seed(cfg.seed, 4);
  out.report = cfg.solver == SolverKind::palm ? palm(meas, masks, p) : least_squares_baseline(meas, masks, p);
  const CVector& h_est = out.report.h->values();
  const CVector& x_est = out.report.x->values();
  out.rmse = rmse(h_est, x_est, h.values(), x.values());
  out.snr_out_db = snr_out_db(out.rmse);
  // The filter has unit sum, which fixes the scale of the recovered image.
  cplx gain = h_est.sum();
  if (std::abs(gain) == 0.0) gain = 1.0;
  out.recovered = Image{image.rows, image.cols, (x_est * gain).real()};
  return out;
}

Experiment2dResult experiment_2d(const Image& image, const Image& filter, const Experiment2dConfig& cfg) {
  if (image.rows < 2 || image.cols < 2) throw DimensionError("experiment_2d: the image must be two-dimensional");
  if (cfg.L < 1) throw ValidationError("experiment_2d: L must be >= 1");
  const MaskDistribution dist =
      cfg.mask == MaskKind::quaternary_phase ? MaskDistribution::quaternary_phase() : MaskDistribution::rademacher();
  const MaskSet masks = sample_mask_set(dist, image.grid(), cfg.L, derive_seed(cfg.seed, 2));
  return experiment_2d(image, filter, masks, cfg);
}

}  // namespace maskbd
