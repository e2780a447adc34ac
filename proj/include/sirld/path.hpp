#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "sirld/error.hpp"

/**
 * \file
 * \brief Uniform time grids and piecewise-linear paths on them.
 */

namespace sirld {

/// Uniform grid 0 = t_0 < ... < t_K = horizon.
class TimeGrid {
 public:
  TimeGrid() = default;

  TimeGrid(double horizon, std::size_t intervals) : horizon_(horizon), intervals_(intervals) {
    require(horizon > 0.0 && std::isfinite(horizon), "TimeGrid: horizon must be positive");
    require(intervals >= 1, "TimeGrid: need at least one interval");
  }

  double horizon() const noexcept { return horizon_; }
  std::size_t intervals() const noexcept { return intervals_; }
  std::size_t size() const noexcept { return intervals_ + 1; }
  double step() const noexcept { return horizon_ / static_cast<double>(intervals_); }

  double operator[](std::size_t k) const noexcept {
    return k == intervals_ ? horizon_ : horizon_ * static_cast<double>(k) / static_cast<double>(intervals_);
  }

  /// Grid with twice as many intervals; node k of this grid is node 2k of the result.
  TimeGrid refined() const { return {horizon_, 2 * intervals_}; }

  /// Cell index c and offset w in [0,1] with t = (1-w) t_c + w t_{c+1}. Clamps to [0, horizon].
  std::pair<std::size_t, double> locate(double t) const noexcept {
    const double x = std::clamp(t, 0.0, horizon_) / horizon_ * static_cast<double>(intervals_);
    auto c = static_cast<std::size_t>(x);
    double w = x - static_cast<double>(c);
    // snap round-off so that grid nodes map onto stored values
    if (w > 1.0 - 1e-12) {
      ++c;
      w = 0.0;
    } else if (w < 1e-12) {
      w = 0.0;
    }
    if (c >= intervals_) {
      return {intervals_ - 1, 1.0};
    }
    return {c, w};
  }

  bool operator==(const TimeGrid& other) const noexcept {
    return horizon_ == other.horizon_ && intervals_ == other.intervals_;
  }

 private:
  double horizon_ = 1.0;
  std::size_t intervals_ = 1;
};

/// A function [0, T] -> R^Dim stored at the nodes of a uniform grid, linear in between.
template <int Dim>
class PathFunction {
 public:
  using Vec = Eigen::Matrix<double, Dim, 1>;

  PathFunction() = default;

  explicit PathFunction(TimeGrid grid, const Vec& fill = Vec::Zero()) : grid_(grid), values_(grid.size(), fill) {}

  PathFunction(TimeGrid grid, std::vector<Vec> values) : grid_(grid), values_(std::move(values)) {
    require(values_.size() == grid_.size(), "PathFunction: value count does not match grid");
  }

  /// Tabulate a callable t -> Vec on the grid.
  template <class F>
  static PathFunction tabulate(TimeGrid grid, F&& fn) {
    std::vector<Vec> values(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      values[k] = fn(grid[k]);
    }
    return {grid, std::move(values)};
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  const Vec& operator[](std::size_t k) const noexcept { return values_[k]; }
  Vec& operator[](std::size_t k) noexcept { return values_[k]; }
  const std::vector<Vec>& values() const noexcept { return values_; }
  const Vec& front() const { return values_.front(); }
  const Vec& back() const { return values_.back(); }

  Vec operator()(double t) const noexcept {
    const auto [c, w] = grid_.locate(t);
    if (w == 0.0) {
      return values_[c];
    }
    if (w == 1.0) {
      return values_[c + 1];
    }
    return (1.0 - w) * values_[c] + w * values_[c + 1];
  }

  /// Slope of the linear interpolant on cell c.
  Vec slope(std::size_t c) const noexcept { return (values_[c + 1] - values_[c]) / grid_.step(); }

  /// Second-order finite-difference derivative at the nodes.
  PathFunction derivative() const {
    require(grid_.intervals() >= 2, "derivative: need at least two intervals");
    const double h = grid_.step();
    const std::size_t last = size() - 1;
    std::vector<Vec> d(size());
    d[0] = (-3.0 * values_[0] + 4.0 * values_[1] - values_[2]) / (2.0 * h);
    for (std::size_t k = 1; k < last; ++k) {
      d[k] = (values_[k + 1] - values_[k - 1]) / (2.0 * h);
    }
    d[last] = (3.0 * values_[last] - 4.0 * values_[last - 1] + values_[last - 2]) / (2.0 * h);
    return {grid_, std::move(d)};
  }

  /// Resample onto another grid by linear interpolation.
  PathFunction resample(TimeGrid grid) const {
    return tabulate(grid, [this](double t) { return (*this)(t); });
  }

  PathFunction& operator+=(const PathFunction& other) {
    require(grid_ == other.grid_, "PathFunction: grid mismatch");
    for (std::size_t k = 0; k < size(); ++k) {
      values_[k] += other.values_[k];
    }
    return *this;
  }

  PathFunction& operator*=(double c) {
    for (auto& v : values_) {
      v *= c;
    }
    return *this;
  }

  friend PathFunction operator+(PathFunction a, const PathFunction& b) { return a += b; }
  friend PathFunction operator*(double c, PathFunction a) { return a *= c; }
  friend PathFunction operator-(PathFunction a, const PathFunction& b) { return a += -1.0 * b; }

  /// Trapezoid integral of a scalar functional of the stored values.
  template <class F>
  double integrate(F&& fn) const {
    const double h = grid_.step();
    double sum = 0.5 * (fn(values_.front()) + fn(values_.back()));
    for (std::size_t k = 1; k + 1 < size(); ++k) {
      sum += fn(values_[k]);
    }
    return sum * h;
  }

  void write_csv(std::ostream& out) const {
    if constexpr (Dim == 2) {
      out << "t,s,i\n";
    } else if constexpr (Dim == 1) {
      out << "t,v\n";
    } else {
      out << "t";
      for (int d = 0; d < Dim; ++d) {
        out << ",x" << d;
      }
      out << "\n";
    }
    out << std::setprecision(17);
    for (std::size_t k = 0; k < size(); ++k) {
      out << grid_[k];
      for (int d = 0; d < Dim; ++d) {
        out << ',' << values_[k][d];
      }
      out << '\n';
    }
  }

  void write_csv(const std::string& file) const {
    std::ofstream out(file);
    require(out.good(), "cannot open " + file + " for writing");
    write_csv(out);
  }

  /// Reads a CSV written by write_csv. The time column must form a uniform grid starting at 0.
  static PathFunction read_csv(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "path CSV: missing header");
    std::vector<double> times;
    std::vector<Vec> values;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") {
        continue;
      }
      std::stringstream row(line);
      std::string cell;
      std::vector<double> cols;
      while (std::getline(row, cell, ',')) {
        try {
          cols.push_back(std::stod(cell));
        } catch (const std::exception&) {
          throw InvalidInput("path CSV: cannot parse '" + cell + "'");
        }
      }
      require(cols.size() == static_cast<std::size_t>(Dim) + 1, "path CSV: wrong column count");
      times.push_back(cols[0]);
      Vec v;
      for (int d = 0; d < Dim; ++d) {
        v[d] = cols[static_cast<std::size_t>(d) + 1];
      }
      values.push_back(v);
    }
    require(times.size() >= 2, "path CSV: need at least two rows");
    require(times.front() == 0.0, "path CSV: time column must start at 0");
    TimeGrid grid(times.back(), times.size() - 1);
    for (std::size_t k = 0; k < times.size(); ++k) {
      require(std::abs(times[k] - grid[k]) <= 1e-9 * std::max(1.0, grid.horizon()),
              "path CSV: time column is not a uniform grid");
    }
    return {grid, std::move(values)};
  }

  static PathFunction read_csv(const std::string& file) {
    std::ifstream in(file);
    require(in.good(), "cannot open " + file);
    return read_csv(in);
  }

 private:
  TimeGrid grid_;
  std::vector<Vec> values_;
};

using Path2 = PathFunction<2>;
using ScalarPath = PathFunction<1>;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// sup_t (|s_t(a) - s_t(b)| + |i_t(a) - i_t(b)|) over the grid nodes.
inline double sup_norm_distance(const Path2& a, const Path2& b) {
  require(a.grid() == b.grid(), "sup_norm_distance: grid mismatch");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    d = std::max(d, (a[k] - b[k]).cwiseAbs().sum());
  }
  return d;
}

inline double sup_norm(const Path2& a) {
  double d = 0.0;
  for (const auto& v : a.values()) {
    d = std::max(d, v.cwiseAbs().sum());
  }
  return d;
}

}  // namespace sirld
