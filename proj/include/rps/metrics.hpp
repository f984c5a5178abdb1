#pragma once

#include <vector>

#include "json.hpp"
#include "rps/image.hpp"

namespace rps {

/// ||estimate - reference||^2 / ||reference||^2
double nmse(const Image& estimate, const Image& reference);

struct SsimParams {
  Index window = 8;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Local SSIM for every window position (uniform weights, stride 1,
/// population statistics). Entry (r, c) belongs to the window whose top-left
/// pixel is (r, c).
Image ssim_map(const Image& a, const Image& b, const SsimParams& params = {});

/// Mean of the local SSIM map.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Mean local SSIM over windows that do not touch any of the excluded
/// windows. Throws if every window is excluded.
double ssim_outside(const Image& a, const Image& b, const std::vector<RoIWindow>& excluded,
                    const SsimParams& params = {});

/// NMSE over the pixels outside the excluded windows.
double nmse_outside(const Image& estimate, const Image& reference,
                    const std::vector<RoIWindow>& excluded);

struct MetricReport {
  double nmse = 0.0;
  double ssim = 0.0;

  nlohmann::json to_json() const { return {{"nmse", nmse}, {"ssim", ssim}}; }
};

MetricReport evaluate(const Image& estimate, const Image& reference, const SsimParams& params = {});

}  // namespace rps
