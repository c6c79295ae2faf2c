#pragma once

#include <filesystem>

#include "fdl/tensor.hpp"

namespace fdl {

/// Loads a binary netpbm image (P5 grayscale or P6 color, 8-bit, maxval 255)
/// as an [H,W] tensor scaled to [0,1]. Color is reduced by BT.601 luma.
/// Malformed input raises FormatError naming the byte offset.
Tensor load_image_gray(const std::filesystem::path& path);

/// Writes a [3,H,W] tensor in [0,1] as a binary P6 file.
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);

/// Writes an [H,W] tensor in [0,1] as a binary P5 file.
void write_pgm(const std::filesystem::path& path, const Tensor& gray);

}  // namespace fdl
