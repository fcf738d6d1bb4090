#pragma once

#include <string>

#include "xic/numkit.hpp"

namespace xic {

enum class FusionMode { Concat, Average };

std::string to_string(FusionMode mode);
FusionMode parse_fusion(const std::string& text);

// Concat stacks [rgb; thermal] in that order. Average is (a + b) / 2.
Tensor3 fuse(const Tensor3& a, const Tensor3& b, FusionMode mode);

struct FuseGrads {
  Tensor3 a;
  Tensor3 b;
};
FuseGrads fuse_backward(const Tensor3& grad_fused, std::size_t a_channels, FusionMode mode);

std::size_t fused_channels(std::size_t a_channels, std::size_t b_channels, FusionMode mode);

}  // namespace xic
