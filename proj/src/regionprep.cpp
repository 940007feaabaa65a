#include "tsfn/regionprep.hpp"

#include <algorithm>
#include <cmath>

#include "tsfn/error.hpp"

namespace tsfn {

namespace {

void require_present(const BoundingBox& box, const char* op) {
  if (!box.present) {
    throw ConfigError(std::string(op) + ": box absent; use fallback_inputs");
  }
}

void require_size(int out_size) {
  if (out_size < 1) {
    throw ConfigError("output size must be at least 1");
  }
}

// Bilinear sample grid for one axis: source index pair and blend weight.
struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> make_taps(int src_len, int dst_len) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst_len));
  const double scale = static_cast<double>(src_len) / static_cast<double>(dst_len);
  for (int i = 0; i < dst_len; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src_len - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
  }
  return taps;
}

// Crops [y0,y1) x [x0,x1) out of every plane of `src` and resizes to out x out.
Tensor3 crop_planes(const Tensor3& src, int x0, int y0, int x1, int y1, int out_size) {
  const int ch = static_cast<int>(src.channels());
  const int cw = x1 - x0;
  const int chh = y1 - y0;
  Tensor3 out(src.channels(), static_cast<std::size_t>(out_size), static_cast<std::size_t>(out_size));
  std::vector<double> crop(static_cast<std::size_t>(cw) * chh);
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < chh; ++y) {
      for (int x = 0; x < cw; ++x) {
        crop[static_cast<std::size_t>(y) * cw + x] = src.at(c, y + y0, x + x0);
      }
    }
    resize_plane(crop, chh, cw, out.channel(c), out_size, out_size);
  }
  return out;
}

}  // namespace

BoundingBox clamp_box(BoundingBox box, int width, int height) {
  if (!box.present) {
    return BoundingBox::absent();
  }
  box.x0 = std::clamp(box.x0, 0, width);
  box.x1 = std::clamp(box.x1, 0, width);
  box.y0 = std::clamp(box.y0, 0, height);
  box.y1 = std::clamp(box.y1, 0, height);
  if (box.x1 <= box.x0 || box.y1 <= box.y0) {
    return BoundingBox::absent();
  }
  return box;
}

void resize_plane(std::span<const double> src, int height, int width, std::span<double> dst,
                  int out_height, int out_width) {
  if (src.size() != static_cast<std::size_t>(height) * width ||
      dst.size() != static_cast<std::size_t>(out_height) * out_width) {
    throw ShapeError("resize_plane: buffer size mismatch");
  }
  const auto ys = make_taps(height, out_height);
  const auto xs = make_taps(width, out_width);
  for (int oy = 0; oy < out_height; ++oy) {
    const Tap& ty = ys[static_cast<std::size_t>(oy)];
    const double* row_lo = src.data() + static_cast<std::size_t>(ty.lo) * width;
    const double* row_hi = src.data() + static_cast<std::size_t>(ty.hi) * width;
    for (int ox = 0; ox < out_width; ++ox) {
      const Tap& tx = xs[static_cast<std::size_t>(ox)];
      const double top = row_lo[tx.lo] + tx.frac * (row_lo[tx.hi] - row_lo[tx.lo]);
      const double bottom = row_hi[tx.lo] + tx.frac * (row_hi[tx.hi] - row_hi[tx.lo]);
      dst[static_cast<std::size_t>(oy) * out_width + ox] = top + ty.frac * (bottom - top);
    }
  }
}

Tensor3 crop_resize_target(const Frame& frame, const BoundingBox& box, int out_size) {
  require_present(box, "crop_resize_target");
  require_size(out_size);
  const BoundingBox b = clamp_box(box, frame.width, frame.height);
  if (!b.present) {
    throw ConfigError("crop_resize_target: box lies outside the frame");
  }
  // De-interleave to channel-major first so the crop path is shared with flows.
  Tensor3 planar(3, static_cast<std::size_t>(frame.height), static_cast<std::size_t>(frame.width));
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) {
      for (int c = 0; c < 3; ++c) {
        planar.at(c, y, x) = frame.at(y, x, c);
      }
    }
  }
  return crop_planes(planar, b.x0, b.y0, b.x1, b.y1, out_size);
}

Tensor3 mask_flow_target(const FlowStack& stack, const BoundingBox& box, int out_size) {
  require_present(box, "mask_flow_target");
  require_size(out_size);
  const BoundingBox b = clamp_box(box, stack.width(), stack.height());
  if (!b.present) {
    throw ConfigError("mask_flow_target: box lies outside the flow field");
  }
  return crop_planes(stack.planes, b.x0, b.y0, b.x1, b.y1, out_size);
}

FlowStack zero_outside_box(const FlowStack& stack, const BoundingBox& box) {
  const BoundingBox b = clamp_box(box, stack.width(), stack.height());
  FlowStack out{Tensor3(stack.planes.channels(), stack.planes.height(), stack.planes.width())};
  if (!b.present) {
    return out;
  }
  for (std::size_t c = 0; c < stack.planes.channels(); ++c) {
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) {
        out.planes.at(c, y, x) = stack.planes.at(c, y, x);
      }
    }
  }
  return out;
}

FlowStack zero_inside_box(const FlowStack& stack, const BoundingBox& box) {
  FlowStack out = stack;
  const BoundingBox b = clamp_box(box, stack.width(), stack.height());
  if (!b.present) {
    return out;
  }
  for (std::size_t c = 0; c < stack.planes.channels(); ++c) {
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) {
        out.planes.at(c, y, x) = 0.0;
      }
    }
  }
  return out;
}

Tensor3 mask_flow_nontarget(const FlowStack& stack, const BoundingBox& box, int out_size) {
  require_size(out_size);
  const FlowStack masked = zero_inside_box(stack, box);
  return crop_planes(masked.planes, 0, 0, stack.width(), stack.height(), out_size);
}

Tensor3 mask_flow_nontarget(const FlowStack& stack, std::span<const BoundingBox> pair_boxes,
                            int out_size) {
  require_size(out_size);
  if (pair_boxes.size() != stack.pairs()) {
    throw ShapeError("mask_flow_nontarget: need one box per flow pair");
  }
  FlowStack masked = stack;
  for (std::size_t k = 0; k < pair_boxes.size(); ++k) {
    const BoundingBox b = clamp_box(pair_boxes[k], stack.width(), stack.height());
    if (!b.present) continue;
    for (std::size_t c = 2 * k; c < 2 * k + 2; ++c) {
      for (int y = b.y0; y < b.y1; ++y) {
        for (int x = b.x0; x < b.x1; ++x) {
          masked.planes.at(c, y, x) = 0.0;
        }
      }
    }
  }
  return crop_planes(masked.planes, 0, 0, stack.width(), stack.height(), out_size);
}

StreamInputs fallback_inputs(const FlowStack& stack, int out_size) {
  require_size(out_size);
  const auto n = static_cast<std::size_t>(out_size);
  return StreamInputs{
      Tensor3(3, n, n),
      Tensor3(stack.planes.channels(), n, n),
      mask_flow_nontarget(stack, BoundingBox::absent(), out_size),
  };
}

FlowStack build_flow_stack(std::span<const FlowField> flows, std::size_t t, std::size_t pairs) {
  if (pairs == 0) {
    throw ConfigError("build_flow_stack: need at least one flow pair");
  }
  if (t + pairs > flows.size()) {
    throw ConfigError("build_flow_stack: window exceeds clip length");
  }
  const auto h = static_cast<std::size_t>(flows[t].height);
  const auto w = static_cast<std::size_t>(flows[t].width);
  FlowStack stack{Tensor3(2 * pairs, h, w)};
  for (std::size_t k = 0; k < pairs; ++k) {
    const FlowField& f = flows[t + k];
    if (static_cast<std::size_t>(f.height) != h || static_cast<std::size_t>(f.width) != w) {
      throw ShapeError("build_flow_stack: flow fields differ in size");
    }
    std::copy(f.u.begin(), f.u.end(), stack.planes.channel(2 * k).begin());
    std::copy(f.v.begin(), f.v.end(), stack.planes.channel(2 * k + 1).begin());
  }
  return stack;
}

StreamInputs make_stream_inputs(const Frame& frame, const FlowStack& stack, const BoundingBox& box,
                                int out_size) {
  const BoundingBox b = clamp_box(box, frame.width, frame.height);
  if (!b.present) {
    return fallback_inputs(stack, out_size);
  }
  return StreamInputs{
      crop_resize_target(frame, b, out_size),
      mask_flow_target(stack, b, out_size),
      mask_flow_nontarget(stack, b, out_size),
  };
}

}  // namespace tsfn
