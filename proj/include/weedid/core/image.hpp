#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "weedid/core/dataset.hpp"

namespace weedid {

/// Decodes an 8- or 16-bit PNG into [0,1] pixels. Palette and low bit-depth
/// images are expanded and alpha is dropped. With `channels` > 0 the result is
/// converted to that many channels (1 = luminance, 3 = RGB).
/// Throws Error(MalformedFile) on anything libpng rejects.
Raster decode_png(std::string_view bytes, int channels = 0);

/// 8-bit grayscale or RGB PNG; channel counts other than 1 and 3 are rejected.
std::string encode_png(const Raster& image);

/// Bilinear resampling (pixel-centre aligned) to height x width.
Raster resize_bilinear(const Raster& image, int height, int width);

/// Channel conversion: 3 -> 1 by Rec. 601 luma, 1 -> n by replication.
Raster convert_channels(const Raster& image, int channels);

}  // namespace weedid
