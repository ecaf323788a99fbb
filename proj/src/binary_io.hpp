#pragma once

// Little helpers for the 64-bit-float checkpoint layouts.

#include <cmath>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "fedq/common.hpp"

namespace fedq::io {

inline void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
  if (!out) throw Error(ErrorCode::IoError, "binary write failed");
}

inline void write_f64s(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  if (!out) throw Error(ErrorCode::IoError, "binary write failed");
}

inline double read_f64(std::istream& in) {
  double v = 0.0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorCode::IoError, "truncated binary record");
  return v;
}

inline std::size_t read_count(std::istream& in) {
  const double v = read_f64(in);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e12) throw Error(ErrorCode::IoError, "corrupt size field in header");
  return static_cast<std::size_t>(v);
}

inline void read_f64s(std::istream& in, std::span<double> v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  if (!in) throw Error(ErrorCode::IoError, "truncated binary record");
}

}  // namespace fedq::io
