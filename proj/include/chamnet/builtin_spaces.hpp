#pragma once

// Built-in adaptation spaces. The text is byte-identical to the files under
// data/spaces/ (checked by the test suite).

#include <optional>
#include <string_view>

#include "chamnet/space.hpp"

namespace chamnet {

inline constexpr std::string_view kChamnetMobileSchema = R"schema(# ChamNet-Mobile adaptation space (MobileNetV2 inverted residual blocks).
# Cells read "default [lower,upper]"; a bare value is fixed; "-" is not applicable.
# t: expansion factor, c: output channels, n: repeated blocks, s: stride of the
# first block in the stage (repeats use stride 1), k: kernel size.
format = chamnet-space/1
name = chamnet-mobile
bottleneck = inverted
input_channels = 3
resolution = 224 [96,224]
resolution_step = 8
channel_step = 1

stage        t          c                  n          s    k
conv2d       -          32 [8,48]          1          2    3
bottleneck   1          16 [8,32]          1          1    3
bottleneck   6 [2,6]    24 [8,40]          2 [1,2]    2    3
bottleneck   6 [2,6]    32 [8,48]          3 [1,3]    2    3
bottleneck   6 [2,6]    64 [16,96]         4 [1,4]    2    3
bottleneck   6 [2,6]    96 [32,160]        3 [1,3]    1    3
bottleneck   6 [2,6]    160 [56,256]       3 [1,3]    2    3
bottleneck   6 [2,6]    320 [96,480]       1          1    3
conv2d       -          1280 [1024,2048]   1          1    1
avgpool      -          -                  1          -    -
fc           -          1000               -          -    -
)schema";

inline constexpr std::string_view kChamnetResSchema = R"schema(# ChamNet-Res adaptation space (ResNet bottleneck blocks).
# Cells read "default [lower,upper]"; a bare value is fixed; "-" is not applicable.
# t: expansion factor (block output = c * t), c: bottleneck width, n: repeated
# blocks, s: stride of the first block in the stage, k: kernel size.
format = chamnet-space/1
name = chamnet-res
bottleneck = residual
input_channels = 3
resolution = 224
resolution_step = 8
channel_step = 1

stage        t          c                  n          s    k
conv2d       -          64 [16,64]         1          2    7
bottleneck   4 [2,6]    64 [16,64]         3 [1,3]    2    3
bottleneck   4 [2,6]    128 [32,128]       4 [1,8]    2    3
bottleneck   4 [2,6]    256 [64,256]       6 [1,36]   2    3
bottleneck   4 [2,6]    512 [128,512]      3 [1,3]    2    3
avgpool      -          -                  1          -    -
fc           -          1000               -          -    -
)schema";

inline std::optional<std::string_view> builtin_schema(std::string_view name) {
    if (name == "chamnet-mobile") return kChamnetMobileSchema;
    if (name == "chamnet-res") return kChamnetResSchema;
    return std::nullopt;
}

inline SearchSpace chamnet_mobile() { return parse_space(kChamnetMobileSchema); }

inline SearchSpace chamnet_res() { return parse_space(kChamnetResSchema); }

}  // namespace chamnet
