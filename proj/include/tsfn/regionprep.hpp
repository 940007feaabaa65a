#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tsfn/numlib.hpp"

namespace tsfn {

// Detector output for one frame. Coordinates are pixel edges, end-exclusive.
struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  bool present = false;

  static BoundingBox absent() { return {}; }
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const BoundingBox&) const = default;
};

// Clamps to [0,width] x [0,height]; a box that becomes empty is marked absent.
BoundingBox clamp_box(BoundingBox box, int width, int height);

// RGB frame, interleaved H x W x 3, values in [0,1].
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Frame() = default;
  Frame(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0) {}
  double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

// Dense displacement field between frame t and t+1.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> u;
  std::vector<double> v;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w), u(static_cast<std::size_t>(h) * w, 0.0), v(u.size(), 0.0) {}
};

// 2T flow planes ordered u_t, v_t, u_{t+1}, v_{t+1}, ...
struct FlowStack {
  Tensor3 planes;

  std::size_t pairs() const { return planes.channels() / 2; }
  int height() const { return static_cast<int>(planes.height()); }
  int width() const { return static_cast<int>(planes.width()); }
};

// Backbone inputs for one time step, all channel-major at the same resolution.
struct StreamInputs {
  Tensor3 appearance;     // 3 x N x N
  Tensor3 target_motion;  // 2T x N x N
  Tensor3 ego_motion;     // 2T x N x N
};

// Side of the zero matrix substituted for a failed detection. Resizing zeros
// yields zeros, so the fallback emits zeros at the backbone resolution directly.
inline constexpr int kFallbackMatrixSize = 100;

// Bilinear resample of one H x W plane with half-pixel-centre alignment.
void resize_plane(std::span<const double> src, int height, int width, std::span<double> dst,
                  int out_height, int out_width);

Tensor3 crop_resize_target(const Frame& frame, const BoundingBox& box, int out_size);
Tensor3 mask_flow_target(const FlowStack& stack, const BoundingBox& box, int out_size);
Tensor3 mask_flow_nontarget(const FlowStack& stack, const BoundingBox& box, int out_size);

// Pre-resize masks: keep only the inside (resp. outside) of the box.
FlowStack zero_outside_box(const FlowStack& stack, const BoundingBox& box);
FlowStack zero_inside_box(const FlowStack& stack, const BoundingBox& box);

// Inputs for a frame whose detection failed.
// Same, with flow pair k masked by pair_boxes[k] (the box of its source frame).
// Absent entries leave their pair unmasked.
Tensor3 mask_flow_nontarget(const FlowStack& stack, std::span<const BoundingBox> pair_boxes,
                            int out_size);

StreamInputs fallback_inputs(const FlowStack& stack, int out_size);

FlowStack build_flow_stack(std::span<const FlowField> flows, std::size_t t, std::size_t pairs);

// Full per-frame construction; dispatches to fallback_inputs when the box is absent.
StreamInputs make_stream_inputs(const Frame& frame, const FlowStack& stack, const BoundingBox& box,
                                int out_size);

}  // namespace tsfn
