// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "tcd/common.hpp"

namespace tcd {

// Dense frames x joints x 3 coordinate block, row-major, double storage.
// Coordinates that came from (or are headed to) disk are snapped to float32
// so that serialization round-trips bit-exactly.
struct Tensor3 {
  int frames = 0;
  int joints = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int f, int j) : frames(f), joints(j), data(static_cast<size_t>(f) * j * 3, 0.0) {
    if (f < 0 || j < 0) fail(ErrorCode::invalid_argument, "Tensor3: negative shape");
  }

  size_t size() const { return data.size(); }

  double& at(int f, int j, int c) {
    return data[(static_cast<size_t>(f) * joints + j) * 3 + c];
  }
  double at(int f, int j, int c) const {
    return data[(static_cast<size_t>(f) * joints + j) * 3 + c];
  }

  bool same_shape(const Tensor3& o) const {
    return frames == o.frames && joints == o.joints;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Round every coordinate to the nearest float32 value.
  void snap_f32() {
    for (double& v : data) v = static_cast<double>(static_cast<float>(v));
  }

  // Frames [begin, end) as a new tensor.
  Tensor3 slice_frames(int begin, int end) const {
    if (begin < 0 || end > frames || begin > end)
      fail(ErrorCode::invalid_argument, "Tensor3::slice_frames: range out of bounds");
    Tensor3 out(end - begin, joints);
    size_t row = static_cast<size_t>(joints) * 3;
    std::copy(data.begin() + begin * row, data.begin() + end * row, out.data.begin());
    return out;
  }
};

}  // namespace tcd
