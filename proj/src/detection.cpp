#include "rps/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace rps {

namespace {

// (rows+1) x (cols+1) summed-area table.
std::vector<double> integral(const std::vector<double>& v, Index rows, Index cols) {
  std::vector<double> s(static_cast<std::size_t>((rows + 1) * (cols + 1)), 0.0);
  for (Index r = 0; r < rows; ++r) {
    double row_sum = 0.0;
    for (Index c = 0; c < cols; ++c) {
      row_sum += v[static_cast<std::size_t>(r * cols + c)];
      s[static_cast<std::size_t>((r + 1) * (cols + 1) + c + 1)] =
          s[static_cast<std::size_t>(r * (cols + 1) + c + 1)] + row_sum;
    }
  }
  return s;
}

double box(const std::vector<double>& s, Index cols, Index r0, Index c0, Index r1, Index c1) {
  const Index w = cols + 1;
  return s[static_cast<std::size_t>(r1 * w + c1)] - s[static_cast<std::size_t>(r0 * w + c1)] -
         s[static_cast<std::size_t>(r1 * w + c0)] + s[static_cast<std::size_t>(r0 * w + c0)];
}

Index next_pow2(Index v) {
  Index p = 1;
  while (p < v) p <<= 1;
  return p;
}

double global_std(const Image& img) {
  const double mean = img.mean();
  return std::sqrt((img.data().array() - mean).square().mean());
}

}  // namespace

void DetectionParams::validate() const {
  if (max_regions < 1) throw ConfigError("max_regions must be >= 1");
  if (merge_radius < 0) throw ConfigError("merge_radius must be >= 0");
  if (cell < 1) throw ConfigError("detection cell must be >= 1");
  if (!is_power_of_two(min_side) || !is_power_of_two(max_side) || min_side > max_side) {
    throw ConfigError("min_side and max_side must be powers of two with min_side <= max_side");
  }
  if (!is_power_of_two(initial_macro) || min_side % initial_macro != 0) {
    throw ConfigError("initial macro size must be a power of two dividing min_side");
  }
}

nlohmann::json DetectionParams::to_json() const {
  return {{"max_regions", max_regions},
          {"merge_radius", merge_radius},
          {"cell", cell},
          {"score", score == DetectionScore::Contrast ? "contrast" : "block_variance"},
          {"min_side", min_side},
          {"max_side", max_side},
          {"initial_macro", initial_macro}};
}

DetectionParams DetectionParams::from_json(const nlohmann::json& j) {
  DetectionParams p;
  p.max_regions = j.value("max_regions", p.max_regions);
  p.merge_radius = j.value("merge_radius", p.merge_radius);
  p.cell = j.value("cell", p.cell);
  const std::string score = j.value("score", std::string("contrast"));
  if (score == "contrast") {
    p.score = DetectionScore::Contrast;
  } else if (score == "block_variance") {
    p.score = DetectionScore::BlockVariance;
  } else {
    throw ConfigError("unknown detection score '" + score + "'");
  }
  p.min_side = j.value("min_side", p.min_side);
  p.max_side = j.value("max_side", p.max_side);
  p.initial_macro = j.value("initial_macro", p.initial_macro);
  p.validate();
  return p;
}

Index window_gap(const RoIWindow& a, const RoIWindow& b) {
  const Index row_gap = std::max<Index>(0, std::max(a.row_offset, b.row_offset) -
                                               std::min(a.row_end(), b.row_end()));
  const Index col_gap = std::max<Index>(0, std::max(a.col_offset, b.col_offset) -
                                               std::min(a.col_end(), b.col_end()));
  return std::max(row_gap, col_gap);
}

Image detection_score_map(const Image& img, Index w, DetectionScore score) {
  const Index rows = img.rows();
  const Index cols = img.cols();
  if (w < 1 || rows < w || cols < w) throw DimensionError("detection window larger than the image");
  const Index out_rows = rows - w + 1;
  const Index out_cols = cols - w + 1;
  Vector out = Vector::Zero(out_rows * out_cols);
  const double sd = global_std(img);
  if (sd == 0.0) return Image(out_rows, out_cols, std::move(out));

  if (score == DetectionScore::Contrast) {
    // |x(r, c+1) - x(r, c)| stored at (r, c); only pairs fully inside a window count.
    std::vector<double> dx(static_cast<std::size_t>(rows * cols), 0.0);
    std::vector<double> dy(static_cast<std::size_t>(rows * cols), 0.0);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) {
        if (c + 1 < cols) dx[static_cast<std::size_t>(r * cols + c)] = std::abs(img(r, c + 1) - img(r, c));
        if (r + 1 < rows) dy[static_cast<std::size_t>(r * cols + c)] = std::abs(img(r + 1, c) - img(r, c));
      }
    const auto sx = integral(dx, rows, cols);
    const auto sy = integral(dy, rows, cols);
    const double pairs = 2.0 * static_cast<double>(w * (w - 1));
    for (Index r = 0; r < out_rows; ++r)
      for (Index c = 0; c < out_cols; ++c) {
        const double total = box(sx, cols, r, c, r + w, c + w - 1) + box(sy, cols, r, c, r + w - 1, c + w);
        out[r * out_cols + c] = pairs > 0 ? total / pairs / sd : 0.0;
      }
  } else {
    std::vector<double> v(img.data().data(), img.data().data() + img.size());
    std::vector<double> v2(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) v2[i] = v[i] * v[i];
    const auto s1 = integral(v, rows, cols);
    const auto s2 = integral(v2, rows, cols);
    const double n = static_cast<double>(w * w);
    for (Index r = 0; r < out_rows; ++r)
      for (Index c = 0; c < out_cols; ++c) {
        const double m = box(s1, cols, r, c, r + w, c + w) / n;
        const double var = std::max(0.0, box(s2, cols, r, c, r + w, c + w) / n - m * m);
        out[r * out_cols + c] = var / (sd * sd);
      }
  }
  return Image(out_rows, out_cols, std::move(out));
}

std::vector<RoIWindow> merge_rois(const std::vector<RoIWindow>& input, Index radius_px,
                                  Index scene_rows, Index scene_cols, Index min_side,
                                  Index max_side) {
  std::vector<RoIWindow> rois = input;
  const Index cap_side = std::min({max_side, scene_rows, scene_cols});
  for (bool merged = true; merged;) {
    merged = false;
    const std::size_t n = rois.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (window_gap(rois[i], rois[j]) <= radius_px) {
          const std::size_t a = find(i), b = find(j);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }

    std::vector<RoIWindow> next;
    for (std::size_t i = 0; i < n; ++i) {
      if (find(i) != i) continue;
      Index r0 = rois[i].row_offset, c0 = rois[i].col_offset;
      Index r1 = rois[i].row_end(), c1 = rois[i].col_end();
      std::size_t members = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (find(j) != i) continue;
        ++members;
        r0 = std::min(r0, rois[j].row_offset);
        c0 = std::min(c0, rois[j].col_offset);
        r1 = std::max(r1, rois[j].row_end());
        c1 = std::max(c1, rois[j].col_end());
      }
      if (members > 1) merged = true;
      const Index extent = std::max(r1 - r0, c1 - c0);
      const Index side = std::min(cap_side, std::clamp(next_pow2(extent), min_side, max_side));
      RoIWindow w = rois[i];
      w.side = side;
      w.row_offset = std::clamp<Index>((r0 + r1 - side) / 2, 0, scene_rows - side);
      w.col_offset = std::clamp<Index>((c0 + c1 - side) / 2, 0, scene_cols - side);
      if (w.current_macro > side || side % std::max<Index>(1, w.current_macro) != 0) w.current_macro = 1;
      next.push_back(w);
    }
    rois = std::move(next);
  }
  // Windows pinned at the maximum side may still overlap; the higher ranked
  // one keeps its place.
  std::vector<RoIWindow> out;
  for (const auto& w : rois) {
    bool clash = false;
    for (const auto& kept : out) clash = clash || kept.overlaps(w);
    if (!clash) out.push_back(w);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].label = static_cast<int>(i + 1);
  return out;
}

std::vector<DetectedRoI> detect_rois(const Image& lowres, const DetectionParams& p) {
  p.validate();
  if (lowres.rows() % p.min_side != 0 || lowres.cols() % p.min_side != 0) {
    throw DimensionError("low-resolution image dimensions must be divisible by min_side");
  }
  const Image scores = detection_score_map(lowres, p.min_side, p.score);

  struct Candidate {
    Index r, c;
    double s;
  };
  // Summed-area differences leave roundoff-sized scores over flat areas.
  const double floor = 1e-9 * scores.data().maxCoeff();
  std::vector<Candidate> cands;
  for (Index r = 0; r < scores.rows(); ++r)
    for (Index c = 0; c < scores.cols(); ++c)
      if (scores(r, c) > floor) cands.push_back({r, c, scores(r, c)});
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.s > b.s; });

  std::vector<RoIWindow> picked;
  std::vector<double> picked_score;
  for (const auto& cand : cands) {
    if (static_cast<int>(picked.size()) >= p.max_regions) break;
    const RoIWindow w{cand.r, cand.c, p.min_side, p.initial_macro, 0};
    bool clash = false;
    for (const auto& q : picked) clash = clash || q.overlaps(w);
    if (clash) continue;
    picked.push_back(w);
    picked_score.push_back(cand.s);
  }

  const auto merged = merge_rois(picked, p.merge_radius * p.cell, lowres.rows(), lowres.cols(),
                                 p.min_side, p.max_side);
  std::vector<DetectedRoI> out;
  for (const auto& w : merged) {
    // A merged window is as important as its best member.
    double best = 0.0;
    for (std::size_t i = 0; i < picked.size(); ++i)
      if (w.overlaps(picked[i])) best = std::max(best, picked_score[i]);
    RoIWindow win = w;
    win.current_macro = p.initial_macro;
    out.push_back({win, best});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const DetectedRoI& a, const DetectedRoI& b) { return a.score > b.score; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].window.label = static_cast<int>(i + 1);
  return out;
}

nlohmann::json rois_to_json(const std::vector<DetectedRoI>& rois) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : rois) {
    arr.push_back({{"label", d.window.label},
                   {"row_offset", d.window.row_offset},
                   {"col_offset", d.window.col_offset},
                   {"side", d.window.side},
                   {"macro", d.window.current_macro},
                   {"score", d.score}});
  }
  return arr;
}

std::vector<RoIWindow> rois_from_json(const nlohmann::json& j) {
  std::vector<RoIWindow> out;
  int next_label = 1;
  for (const auto& e : j) {
    RoIWindow w;
    w.row_offset = e.at("row_offset").get<Index>();
    w.col_offset = e.at("col_offset").get<Index>();
    w.side = e.at("side").get<Index>();
    w.current_macro = e.value("macro", Index{8});
    w.label = e.value("label", next_label);
    next_label = w.label + 1;
    out.push_back(w);
  }
  return out;
}

Image roi_label_mask(Index rows, Index cols, const std::vector<RoIWindow>& rois) {
  Image mask(rows, cols, 0.0);
  const double k = static_cast<double>(std::max<std::size_t>(1, rois.size()));
  for (const auto& w : rois) {
    w.validate(rows, cols);
    for (Index r = w.row_offset; r < w.row_end(); ++r)
      for (Index c = w.col_offset; c < w.col_end(); ++c) mask(r, c) = (k + 1 - w.label) / k;
  }
  return mask;
}

}  // namespace rps
