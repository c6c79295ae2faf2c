#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fdl/tensor.hpp"

namespace fdl {

/// Region indices into the L/M1/M2/H split of an N x N spectrum.
enum Region : std::size_t { kRegionL = 0, kRegionM1 = 1, kRegionM2 = 2, kRegionH = 3 };

inline constexpr std::array<const char*, 4> kRegionNames = {"L", "M1", "M2", "H"};

/// Four disjoint index sets over the N x N spectrum covering it exactly once,
/// with |L| : |M1| : |M2| : |H| = 1 : 3 : 3 : 9 (sixteenths of N^2).
struct RegionPartition {
    std::size_t n = 0;
    std::array<std::vector<std::size_t>, 4> regions;  // flat indices u*n+v
};

/// L is the top-left N/4 x N/4 corner, M1 the rest of the top band, M2 the
/// rest of the left band, H the remaining block. N must be divisible by 4.
RegionPartition partition_spectrum(std::size_t n);

/// Per-image mean absolute DCT coefficient of each region, averaged over all
/// full blocks of the image.
struct ImageFreqSummary {
    std::array<double, 4> region_means{};
};

/// Tiles the image into block_size x block_size blocks (trailing rows/cols
/// that do not fill a block are dropped), averages |dct2| across blocks and
/// then within each region of the partition.
ImageFreqSummary image_freq_summary(const Tensor& image, const RegionPartition& partition);

/// Mean and population variance of the per-image region means.
struct DatasetFreqSummary {
    std::array<double, 4> mean_of_means{};
    std::array<double, 4> variance{};
    std::size_t image_count = 0;
};

/// Requires at least two summaries; variance uses the 1/M convention.
DatasetFreqSummary dataset_summary(const std::vector<ImageFreqSummary>& summaries);

/// BT.601 luma of a [3,H,W] image: 0.299 R + 0.587 G + 0.114 B.
Tensor luma(const Tensor& rgb);

// CSV export. UTF-8, headers fixed:
//   per image:  image,L_mean,M1_mean,M2_mean,H_mean
//   dataset:    region,mean_of_means,variance   (rows ordered L,M1,M2,H)
std::string per_image_csv(const std::vector<std::pair<std::string, ImageFreqSummary>>& rows);
std::string dataset_csv(const DatasetFreqSummary& summary);
void write_per_image_csv(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, ImageFreqSummary>>& rows);
void write_dataset_csv(const std::filesystem::path& path, const DatasetFreqSummary& summary);

}  // namespace fdl
