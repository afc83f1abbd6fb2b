#pragma once

#include "hmch/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hmch {

enum class Geometry { layered, crossed, random_inclusions, homogeneous };

std::string_view to_string(Geometry g);
Geometry parse_geometry(std::string_view s);

/// Geometry knobs. Lengths are in domain units; sizes of inclusions are in fine cells.
struct GeometryParams {
    // layered / crossed stripes of the high-conductivity continuum
    double stripe_period = 1.0 / 48.0;
    double stripe_fraction = 0.5;
    double stripe_offset = 0.0;
    // random_inclusions
    double density = 0.3;
    int inclusion_min = 2;
    int inclusion_max = 6;
    int anchor_cells = 0; // tile size that receives one inclusion each; 0 = layout block size
    // g1 = 2 + sin(pi x1) sin(pi x2) when true, g1 = 1 otherwise
    bool modulate = true;
};

/// Cellwise coefficient and continuum labels on the global fine grid, row-major (y outer).
struct MediumField {
    Index2 cells;
    Rect domain;
    std::vector<double> kappa;
    std::vector<std::uint8_t> continuum; // 0-based continuum index per cell
    int continua = 1;
    double epsilon = 1.0;
    Geometry geometry = Geometry::homogeneous;
    std::uint64_t seed = 0;

    std::size_t cell(int i, int j) const { return static_cast<std::size_t>(j) * cells.x + i; }
    double cell_width() const { return domain.width() / cells.x; }
    double cell_height() const { return domain.height() / cells.y; }
    Point2 cell_center(int i, int j) const
    {
        return {domain.x0 + (i + 0.5) * cell_width(), domain.y0 + (j + 0.5) * cell_height()};
    }
    /// 64-bit FNV-1a over the payload, used to key caches.
    std::uint64_t hash() const;
};

struct SourceField {
    Index2 cells;
    std::vector<double> f;
};

double slowly_varying(Point2 x);
double contrast_value(int continuum, double epsilon);

/// Builds kappa = g1 * g2 sampled at fine-cell centers together with the continuum masks.
/// Throws InvalidArgument for epsilon <= 0 and when a two-continuum geometry leaves a coarse block
/// of `layout` without one of the continua.
MediumField make_kappa(const CoarseLayout& layout, Geometry geometry, double epsilon, std::uint64_t seed = 0,
                       const GeometryParams& params = {});

SourceField make_source(const CoarseLayout& layout, const MediumField& medium);

/// Indicator of `continuum` as a cellwise double array (for weighted integrals).
std::vector<double> indicator(const MediumField& medium, int continuum);

/// Cell count of every continuum in every block; result[block * continua + c].
std::vector<int> block_continuum_counts(const CoarseLayout& layout, const MediumField& medium);

/// Even reflection across the domain boundary onto `padded`, a layout built by padded_layout
/// (repeated reflection when the padding exceeds the domain).
MediumField mirror_extend(const MediumField& medium, const CoarseLayout& padded);
SourceField mirror_extend(const SourceField& source, const CoarseLayout& padded);

struct RasterHeader {
    Index2 cells;
    Geometry geometry = Geometry::homogeneous;
    double epsilon = 1.0;
    std::uint64_t seed = 0;
    int continua = 1;
    Rect domain;
};

void save_raster(const MediumField& medium, const std::filesystem::path& path);
MediumField load_raster(const std::filesystem::path& path);
/// Reads and validates only the text header.
RasterHeader read_raster_header(const std::filesystem::path& path);

} // namespace hmch
