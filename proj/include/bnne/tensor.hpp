#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnne/errors.hpp"

namespace bnne {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }
};

// Multi-bit unsigned activation tensor, row-major C,H,W.
struct QuantTensor {
  Shape dims;
  int bits = 8;  // J, 1..16
  std::vector<std::uint32_t> data;

  QuantTensor() = default;
  QuantTensor(Shape d, int j) : dims(d), bits(j), data(d.numel(), 0) { check_meta(); }
  QuantTensor(Shape d, int j, std::vector<std::uint32_t> values)
      : dims(d), bits(j), data(std::move(values)) {
    check_meta();
    if (data.size() != dims.numel())
      throw ShapeError("QuantTensor: data length " + std::to_string(data.size()) +
                       " does not match dims " + dims.str());
    const std::uint32_t limit = 1u << bits;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i] >= limit)
        throw RangeError("QuantTensor: value " + std::to_string(data[i]) +
                         " at index " + std::to_string(i) + " exceeds " +
                         std::to_string(bits) + "-bit range");
  }

  std::uint32_t& at(int c, int h, int w) {
    return data[(static_cast<std::size_t>(c) * dims.height + h) * dims.width + w];
  }
  std::uint32_t at(int c, int h, int w) const {
    return data[(static_cast<std::size_t>(c) * dims.height + h) * dims.width + w];
  }

 private:
  void check_meta() const {
    if (bits < 1 || bits > 16)
      throw RangeError("QuantTensor: bit width must be in 1..16, got " +
                       std::to_string(bits));
    if (dims.channels < 0 || dims.height < 0 || dims.width < 0)
      throw ShapeError("QuantTensor: negative dimension in " + dims.str());
  }
};

// Signed accumulator tensor (between MAC array and the quantization unit).
struct IntTensor {
  Shape dims;
  std::vector<std::int32_t> data;

  IntTensor() = default;
  explicit IntTensor(Shape d) : dims(d), data(d.numel(), 0) {}
  IntTensor(Shape d, std::vector<std::int32_t> values)
      : dims(d), data(std::move(values)) {
    if (data.size() != dims.numel())
      throw ShapeError("IntTensor: data length does not match dims " + dims.str());
  }

  std::int32_t& at(int c, int h, int w) {
    return data[(static_cast<std::size_t>(c) * dims.height + h) * dims.width + w];
  }
  std::int32_t at(int c, int h, int w) const {
    return data[(static_cast<std::size_t>(c) * dims.height + h) * dims.width + w];
  }
};

}  // namespace bnne
