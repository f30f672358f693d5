#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanegraph/geometry.hpp"
#include "lanegraph/raster.hpp"
#include "lanegraph/scene_sim.hpp"

namespace lanegraph {

/// Channel-major ROI crop: channels x size x size floats.
struct RoiTensor {
  int channels = 0;
  int size = 0;
  std::vector<float> data;

  float at(int c, int r, int col) const { return data[(static_cast<std::size_t>(c) * size + r) * size + col]; }
  float& at(int c, int r, int col) { return data[(static_cast<std::size_t>(c) * size + r) * size + col]; }
  int half() const { return size / 2; }
};

class RoiError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Crops a size x size window centred on the pixel nearest `position`
/// (x=col, y=row) from every fused feature channel plus the history raster,
/// which becomes the last channel. Out-of-grid cells are zero.
inline RoiTensor crop_roi(const std::vector<Raster>& channels, const Raster& history, Vec2 position, int size) {
  if (size <= 0 || size % 2 != 0) throw RoiError("ROI size must be positive and even");
  if (!pixel_in_bounds(position.y, position.x, GridSpec{history.height(), history.width(), 1.0}))
    throw RoiError("ROI centre outside the grid");
  RoiTensor roi{static_cast<int>(channels.size()) + 1, size, {}};
  roi.data.assign(static_cast<std::size_t>(roi.channels) * size * size, 0.0f);
  const int cr = static_cast<int>(std::lround(position.y)), cc = static_cast<int>(std::lround(position.x));
  const int half = size / 2;
  for (int k = 0; k < roi.channels; ++k) {
    const Raster& src = k + 1 == roi.channels ? history : channels[k];
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) roi.at(k, i, j) = src.get_or(cr - half + i, cc - half + j, 0.0f);
  }
  return roi;
}

/// One predicted next vertex, as an offset (x=col, y=row) from the ROI
/// centre pixel.
struct PredictedVertex {
  Vec2 offset;
  double probability = 0.0;
};

using PredictorOutput = std::vector<PredictedVertex>;

class PredictorError : public std::runtime_error {
 public:
  enum class Kind { kTimeout, kMalformed, kDimensionMismatch, kInvalidOutput, kProcess };
  PredictorError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline const char* to_string(PredictorError::Kind k) {
  switch (k) {
    case PredictorError::Kind::kTimeout: return "timeout";
    case PredictorError::Kind::kMalformed: return "malformed";
    case PredictorError::Kind::kDimensionMismatch: return "dimension-mismatch";
    case PredictorError::Kind::kInvalidOutput: return "invalid-output";
    case PredictorError::Kind::kProcess: return "process";
  }
  return "unknown";
}

/// Throws kInvalidOutput unless every vertex is finite, inside the ROI and has
/// a probability in [0, 1], and there are at most `max_queries` entries.
inline void validate_output(const PredictorOutput& out, int roi_size, int max_queries) {
  if (static_cast<int>(out.size()) > max_queries)
    throw PredictorError(PredictorError::Kind::kInvalidOutput, "more vertices than queries");
  const double half = roi_size / 2;
  for (const auto& v : out) {
    if (!std::isfinite(v.offset.x) || !std::isfinite(v.offset.y) || !std::isfinite(v.probability))
      throw PredictorError(PredictorError::Kind::kInvalidOutput, "non-finite predictor output");
    if (v.probability < 0.0 || v.probability > 1.0)
      throw PredictorError(PredictorError::Kind::kInvalidOutput, "probability outside [0,1]");
    if (std::abs(v.offset.x) > half || std::abs(v.offset.y) > half)
      throw PredictorError(PredictorError::Kind::kInvalidOutput, "vertex outside ROI");
  }
}

/// Everything a predictor may look at for one decision.
struct StepContext {
  const RoiTensor& roi;
  Vec2 position;                // agent position, ego pixels (x=col, y=row)
  Vec2 centre;                  // ROI centre pixel (rounded position)
  std::optional<Vec2> heading;  // direction of the last move, ego pixels
  const EgoPose& pose;
  const GridSpec& spec;
  const Raster& history;        // M_E over the whole grid
  const BevGrid& fused;
  int frame = 0;
  long step = 0;                // global step counter of the run
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictorOutput predict(const StepContext& ctx) = 0;
  virtual std::string name() const = 0;
};

}  // namespace lanegraph
