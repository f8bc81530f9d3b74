#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace peanut {

struct Cell {
  int i = 0;
  int j = 0;
  bool operator==(const Cell&) const = default;
};

/// Row-major H x W grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int h, int w, T init = T{})
      : h_(h), w_(w), v_(static_cast<size_t>(h) * static_cast<size_t>(w), init) {}

  int h() const { return h_; }
  int w() const { return w_; }
  size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  bool in_bounds(int i, int j) const { return i >= 0 && i < h_ && j >= 0 && j < w_; }
  bool in_bounds(Cell c) const { return in_bounds(c.i, c.j); }
  size_t idx(int i, int j) const { return static_cast<size_t>(i) * w_ + j; }
  size_t idx(Cell c) const { return idx(c.i, c.j); }
  Cell cell(size_t k) const { return Cell{static_cast<int>(k) / w_, static_cast<int>(k) % w_}; }

  T& at(int i, int j) {
    assert(in_bounds(i, j));
    return v_[idx(i, j)];
  }
  const T& at(int i, int j) const {
    assert(in_bounds(i, j));
    return v_[idx(i, j)];
  }
  T& at(Cell c) { return at(c.i, c.j); }
  const T& at(Cell c) const { return at(c.i, c.j); }
  T& operator[](size_t k) { return v_[k]; }
  const T& operator[](size_t k) const { return v_[k]; }

  void fill(T x) { std::fill(v_.begin(), v_.end(), x); }
  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  bool operator==(const Grid&) const = default;

 private:
  int h_ = 0, w_ = 0;
  std::vector<T> v_;
};

}  // namespace peanut
