#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "uaplab/errors.hpp"

namespace uaplab {

// Dense H x W x C array, row-major with channels innermost. Images, UAPs and
// pixel gradients all share this layout; only the value semantics differ.
template <class T>
struct Grid {
  int h = 0, w = 0, c = 0;
  std::vector<T> v;

  Grid() = default;
  Grid(int h_, int w_, int c_, T fill = T(0))
    : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, fill) {}

  T& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
  const T& at(int y, int x, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }

  size_t size() const { return v.size(); }

  bool same_shape(const Grid& o) const { return h == o.h && w == o.w && c == o.c; }

  T max_abs() const {
    T m = T(0);
    for (T x : v) m = std::max(m, static_cast<T>(std::abs(x)));
    return m;
  }

  template <class U>
  Grid<U> cast() const {
    Grid<U> out(h, w, c);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using ImageTensor = Grid<float>; // pixel values in [0, 1]

// Throws unless every element lies in [0, 1]. The generator and augmentation
// paths promise this; callers can assert it at the boundaries.
inline void check_unit_range(const ImageTensor& img) {
  for (float x : img.v) {
    if (!(x >= 0.0f && x <= 1.0f)) throw DataError("image pixel outside [0,1]");
  }
}

} // namespace uaplab
