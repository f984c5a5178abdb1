#pragma once

#include <vector>

#include "json.hpp"
#include "rps/image.hpp"

namespace rps {

enum class DetectionScore { BlockVariance, Contrast };

struct DetectionParams {
  int max_regions = 10;
  Index merge_radius = 1;  // in coarse cells
  Index cell = 8;          // coarse cell side in pixels (the low-res macro pixel)
  DetectionScore score = DetectionScore::Contrast;
  Index min_side = 32;
  Index max_side = 128;
  Index initial_macro = 8;

  void validate() const;
  nlohmann::json to_json() const;
  static DetectionParams from_json(const nlohmann::json& j);
};

struct DetectedRoI {
  RoIWindow window;
  double score = 0.0;
};

/// Candidate windows of side min_side are scored on the low-resolution image,
/// the best non-overlapping ones kept, then coalesced and snapped to dyadic
/// sides. Result is ordered by score and labelled 1..k in that order.
std::vector<DetectedRoI> detect_rois(const Image& lowres, const DetectionParams& params);

/// Transitive merge of windows whose gap is at most radius_px pixels (or
/// that overlap). Each group becomes its bounding box snapped up to a power
/// of two in [min_side, max_side], centred, and shifted inside the scene.
/// Repeats until no two windows are within the radius. Input order is the
/// priority order; labels are reassigned 1..k.
std::vector<RoIWindow> merge_rois(const std::vector<RoIWindow>& rois, Index radius_px,
                                  Index scene_rows, Index scene_cols, Index min_side,
                                  Index max_side);

/// Gap between two windows in the Chebyshev sense; 0 when touching or overlapping.
Index window_gap(const RoIWindow& a, const RoIWindow& b);

/// Per-window detection score map (top-left anchored) for inspection.
Image detection_score_map(const Image& lowres, Index window, DetectionScore score);

nlohmann::json rois_to_json(const std::vector<DetectedRoI>& rois);
std::vector<RoIWindow> rois_from_json(const nlohmann::json& j);

/// Label image: (k + 1 - label) / k inside each window, 0 elsewhere, so rank 1 is brightest.
Image roi_label_mask(Index rows, Index cols, const std::vector<RoIWindow>& rois);

}  // namespace rps
