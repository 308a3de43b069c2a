#ifndef MDVSC_METRICS_H_
#define MDVSC_METRICS_H_

#include <limits>
#include <span>
#include <vector>

#include "mdvsc/video_model.h"

namespace mdvsc {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct FrameQuality {
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
  double ms_ssim_db = 0.0;
};

struct QualityReport {
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
  double ms_ssim_db = 0.0;
  std::vector<FrameQuality> per_frame;
};

double mse(const Frame& x, const Frame& y);
// 10 log10(1 / mse); +infinity when mse == 0.
double psnr(const Frame& x, const Frame& y);
double psnr_from_mse(double mse_value);

// Standard 5-scale weights; the first `levels` are used and renormalized.
inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Largest level count a height x width frame supports (window 11 at the
// coarsest scale).
int max_ms_ssim_levels(int height, int width);

// Multi-scale SSIM, Gaussian 11x11 window with sigma 1.5, unit data range,
// averaged over colour channels. Negative contrast-structure terms are
// clipped to zero so the result stays in [0,1].
double ms_ssim(const Frame& x, const Frame& y, int levels,
               std::span<const double> weights = kMsSsimWeights);

// Single-scale SSIM with the same window and constants.
double ssim(const Frame& x, const Frame& y);

// -10 log10(1 - d); +infinity at d == 1.
double ms_ssim_db(double d);

// Per-frame and GOP-averaged quality. Levels default to the largest valid
// count, capped at 5.
QualityReport evaluate_quality(const Gop& reference, const Gop& recon, int levels = 0);

}  // namespace mdvsc

#endif  // MDVSC_METRICS_H_
