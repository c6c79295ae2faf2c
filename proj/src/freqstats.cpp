#include "fdl/freqstats.hpp"

#include <cmath>
#include <sstream>

#include "fdl/dct.hpp"
#include "fdl/errors.hpp"
#include "fdl/io_util.hpp"

namespace fdl {

RegionPartition partition_spectrum(std::size_t n) {
    if (n == 0 || n % 4 != 0) {
        throw ConfigError("partition_spectrum: size " + std::to_string(n) +
                          " must be a positive multiple of 4");
    }
    RegionPartition part;
    part.n = n;
    const std::size_t q = n / 4;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            const std::size_t flat = u * n + v;
            if (u < q && v < q) {
                part.regions[kRegionL].push_back(flat);
            } else if (u < q) {
                part.regions[kRegionM1].push_back(flat);
            } else if (v < q) {
                part.regions[kRegionM2].push_back(flat);
            } else {
                part.regions[kRegionH].push_back(flat);
            }
        }
    }
    return part;
}

ImageFreqSummary image_freq_summary(const Tensor& image, const RegionPartition& partition) {
    if (image.rank() != 2) {
        throw DimensionError("image_freq_summary: expected [H,W], got " +
                             shape_str(image.shape));
    }
    const std::size_t n = partition.n;
    const std::size_t h = image.shape[0], w = image.shape[1];
    if (h < n || w < n) {
        throw DataError("image_freq_summary: image " + shape_str(image.shape) +
                        " smaller than one " + std::to_string(n) + "x" + std::to_string(n) +
                        " block");
    }
    const DctBasis basis = make_basis(n);
    const std::size_t blocks_y = h / n, blocks_x = w / n;

    // mean |spectrum| over all full blocks
    Tensor mean_spec({n, n});
    Tensor block({n, n});
    for (std::size_t by = 0; by < blocks_y; ++by) {
        for (std::size_t bx = 0; bx < blocks_x; ++bx) {
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < n; ++c)
                    block.at(r, c) = image.at(by * n + r, bx * n + c);
            const Tensor spec = dct2(block, basis);
            for (std::size_t i = 0; i < spec.size(); ++i)
                mean_spec.data[i] += std::abs(spec.data[i]);
        }
    }
    const double inv_blocks = 1.0 / static_cast<double>(blocks_y * blocks_x);
    for (double& v : mean_spec.data) v *= inv_blocks;

    ImageFreqSummary summary;
    for (std::size_t r = 0; r < 4; ++r) {
        double acc = 0.0;
        for (std::size_t idx : partition.regions[r]) acc += mean_spec.data[idx];
        summary.region_means[r] = acc / static_cast<double>(partition.regions[r].size());
    }
    return summary;
}

DatasetFreqSummary dataset_summary(const std::vector<ImageFreqSummary>& summaries) {
    if (summaries.size() < 2) {
        throw DataError("dataset_summary: need at least 2 images, got " +
                        std::to_string(summaries.size()));
    }
    DatasetFreqSummary out;
    out.image_count = summaries.size();
    const double inv = 1.0 / static_cast<double>(summaries.size());
    for (std::size_t r = 0; r < 4; ++r) {
        double mean = 0.0;
        for (const auto& s : summaries) mean += s.region_means[r];
        mean *= inv;
        double var = 0.0;
        for (const auto& s : summaries) {
            const double d = s.region_means[r] - mean;
            var += d * d;
        }
        out.mean_of_means[r] = mean;
        out.variance[r] = var * inv;  // population convention
    }
    return out;
}

Tensor luma(const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.shape[0] != 3) {
        throw DimensionError("luma: expected [3,H,W], got " + shape_str(rgb.shape));
    }
    const std::size_t h = rgb.shape[1], w = rgb.shape[2];
    Tensor gray({h, w});
    const std::size_t plane = h * w;
    for (std::size_t p = 0; p < plane; ++p) {
        gray.data[p] =
            0.299 * rgb.data[p] + 0.587 * rgb.data[plane + p] + 0.114 * rgb.data[2 * plane + p];
    }
    return gray;
}

std::string per_image_csv(const std::vector<std::pair<std::string, ImageFreqSummary>>& rows) {
    std::ostringstream os;
    os << "image,L_mean,M1_mean,M2_mean,H_mean\n";
    for (const auto& [name, s] : rows) {
        os << name;
        for (double v : s.region_means) os << "," << fmt_double(v);
        os << "\n";
    }
    return os.str();
}

std::string dataset_csv(const DatasetFreqSummary& summary) {
    std::ostringstream os;
    os << "region,mean_of_means,variance\n";
    for (std::size_t r = 0; r < 4; ++r) {
        os << kRegionNames[r] << "," << fmt_double(summary.mean_of_means[r]) << ","
           << fmt_double(summary.variance[r]) << "\n";
    }
    return os.str();
}

void write_per_image_csv(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, ImageFreqSummary>>& rows) {
    atomic_write_bytes(path, per_image_csv(rows));
}

void write_dataset_csv(const std::filesystem::path& path, const DatasetFreqSummary& summary) {
    atomic_write_bytes(path, dataset_csv(summary));
}

}  // namespace fdl
