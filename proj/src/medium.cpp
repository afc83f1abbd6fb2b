#include "hmch/medium.hpp"

#include "hmch/error.hpp"
#include "io_util.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace hmch {

std::string_view to_string(Geometry g)
{
    switch (g) {
    case Geometry::layered: return "layered";
    case Geometry::crossed: return "crossed";
    case Geometry::random_inclusions: return "random_inclusions";
    case Geometry::homogeneous: return "homogeneous";
    }
    return "unknown";
}

Geometry parse_geometry(std::string_view s)
{
    if (s == "layered") return Geometry::layered;
    if (s == "crossed") return Geometry::crossed;
    if (s == "random_inclusions") return Geometry::random_inclusions;
    if (s == "homogeneous") return Geometry::homogeneous;
    throw InvalidArgument("unknown geometry tag '" + std::string(s) + "'");
}

double slowly_varying(Point2 x)
{
    return 2.0 + std::sin(std::numbers::pi * x.x) * std::sin(std::numbers::pi * x.y);
}

double contrast_value(int continuum, double epsilon)
{
    return continuum == 0 ? epsilon / 10000.0 : 1.0 / (100.0 * epsilon);
}

std::uint64_t MediumField::hash() const
{
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    mix(&cells, sizeof cells);
    mix(&domain, sizeof domain);
    mix(kappa.data(), kappa.size() * sizeof(double));
    mix(continuum.data(), continuum.size());
    mix(&continua, sizeof continua);
    return h;
}

namespace {

bool in_stripe(double coord, double origin, const GeometryParams& p)
{
    double t = (coord - origin - p.stripe_offset) / p.stripe_period;
    t -= std::floor(t);
    return t < p.stripe_fraction;
}

// Uniform integer in [lo, hi] from the raw 64-bit stream, identical on every platform.
int draw(std::mt19937_64& rng, int lo, int hi)
{
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return lo + static_cast<int>(r % span);
}

class InclusionPlacer {
public:
    InclusionPlacer(Index2 cells) : cells_(cells), occupied_(static_cast<std::size_t>(cells.x) * cells.y, 0) {}

    // Places [x, x+w) x [y, y+h) when it keeps a one-cell gap to every earlier inclusion.
    bool try_place(int x, int y, int w, int h)
    {
        if (x < 0 || y < 0 || x + w > cells_.x || y + h > cells_.y)
            return false;
        for (int j = std::max(0, y - 1); j < std::min(cells_.y, y + h + 1); ++j)
            for (int i = std::max(0, x - 1); i < std::min(cells_.x, x + w + 1); ++i)
                if (occupied_[static_cast<std::size_t>(j) * cells_.x + i])
                    return false;
        for (int j = y; j < y + h; ++j)
            for (int i = x; i < x + w; ++i)
                occupied_[static_cast<std::size_t>(j) * cells_.x + i] = 1;
        filled_ += static_cast<long>(w) * h;
        return true;
    }

    double fraction() const { return static_cast<double>(filled_) / occupied_.size(); }
    const std::vector<std::uint8_t>& occupied() const { return occupied_; }

private:
    Index2 cells_;
    std::vector<std::uint8_t> occupied_;
    long filled_ = 0;
};

std::vector<std::uint8_t> random_inclusions(const CoarseLayout& layout, std::uint64_t seed, const GeometryParams& p)
{
    if (p.inclusion_min < 1 || p.inclusion_max < p.inclusion_min)
        throw InvalidArgument("inclusion sizes must satisfy 1 <= inclusion_min <= inclusion_max");
    if (!(p.density > 0.0) || !(p.density < 0.7))
        throw InvalidArgument("inclusion density must lie in (0, 0.7)");
    const Index2 cells = layout.fine_cells();
    const int anchor = p.anchor_cells > 0 ? p.anchor_cells : std::min(layout.cells_per_block().x, layout.cells_per_block().y);
    std::mt19937_64 rng(seed);
    InclusionPlacer placer(cells);

    // One inclusion per anchor tile, strictly inside it, so that every tile sees both continua.
    const int max_in_tile = std::max(1, std::min(p.inclusion_max, anchor - 2));
    const int min_in_tile = std::min(p.inclusion_min, max_in_tile);
    for (int ty = 0; ty * anchor < cells.y; ++ty)
        for (int tx = 0; tx * anchor < cells.x; ++tx) {
            const int x0 = tx * anchor, y0 = ty * anchor;
            const int tw = std::min(anchor, cells.x - x0), th = std::min(anchor, cells.y - y0);
            for (int attempt = 0; attempt < 200; ++attempt) {
                const int w = draw(rng, min_in_tile, max_in_tile);
                const int h = draw(rng, min_in_tile, max_in_tile);
                if (w > tw - 1 || h > th - 1)
                    continue;
                const int x = x0 + draw(rng, 0, tw - w - 1);
                const int y = y0 + draw(rng, 0, th - h - 1);
                if (placer.try_place(x, y, w, h))
                    break;
            }
        }

    const long max_attempts = 2000L * cells.x * cells.y / (p.inclusion_min * p.inclusion_min) + 1000;
    for (long attempt = 0; placer.fraction() < p.density && attempt < max_attempts; ++attempt) {
        const int w = draw(rng, p.inclusion_min, p.inclusion_max);
        const int h = draw(rng, p.inclusion_min, p.inclusion_max);
        const int x = draw(rng, 0, cells.x - 1);
        const int y = draw(rng, 0, cells.y - 1);
        placer.try_place(x, y, w, h);
    }
    return placer.occupied();
}

} // namespace

MediumField make_kappa(const CoarseLayout& layout, Geometry geometry, double epsilon, std::uint64_t seed,
                       const GeometryParams& params)
{
    if (!(epsilon > 0.0))
        throw InvalidArgument("epsilon must be > 0");
    if (geometry == Geometry::layered || geometry == Geometry::crossed) {
        if (!(params.stripe_period > 0.0) || !(params.stripe_fraction > 0.0) || !(params.stripe_fraction < 1.0))
            throw InvalidArgument("stripe_period must be > 0 and stripe_fraction in (0, 1)");
    }
    MediumField m;
    m.cells = layout.fine_cells();
    m.domain = layout.domain();
    m.epsilon = epsilon;
    m.geometry = geometry;
    m.seed = seed;
    m.continua = geometry == Geometry::homogeneous ? 1 : 2;
    const std::size_t n = static_cast<std::size_t>(m.cells.x) * m.cells.y;
    m.kappa.resize(n);
    m.continuum.assign(n, 0);

    if (geometry == Geometry::random_inclusions)
        m.continuum = random_inclusions(layout, seed, params);

    for (int j = 0; j < m.cells.y; ++j)
        for (int i = 0; i < m.cells.x; ++i) {
            const Point2 x = m.cell_center(i, j);
            const std::size_t c = m.cell(i, j);
            switch (geometry) {
            case Geometry::layered:
                m.continuum[c] = in_stripe(x.y, m.domain.y0, params) ? 1 : 0;
                break;
            case Geometry::crossed:
                m.continuum[c] = (in_stripe(x.y, m.domain.y0, params) || in_stripe(x.x, m.domain.x0, params)) ? 1 : 0;
                break;
            default:
                break;
            }
            const double g1 = params.modulate ? slowly_varying(x) : 1.0;
            const double g2 = geometry == Geometry::homogeneous ? 1.0 : contrast_value(m.continuum[c], epsilon);
            m.kappa[c] = g1 * g2;
        }

    if (m.continua == 2) {
        const std::vector<int> counts = block_continuum_counts(layout, m);
        for (int b = 0; b < layout.block_count(); ++b)
            if (counts[2 * b] == 0 || counts[2 * b + 1] == 0) {
                const Index2 bi = layout.block_index(b);
                std::ostringstream msg;
                msg << to_string(geometry) << " geometry leaves block (" << bi.x << "," << bi.y
                    << ") without continuum " << (counts[2 * b] == 0 ? 1 : 2);
                if (geometry == Geometry::random_inclusions)
                    msg << "; regenerate with another seed or a smaller anchor_cells";
                else
                    msg << "; use a stripe period no larger than the block size";
                throw InvalidArgument(msg.str());
            }
    }
    return m;
}

SourceField make_source(const CoarseLayout& layout, const MediumField& medium)
{
    if (medium.cells != layout.fine_cells())
        throw DimensionMismatch("make_source: medium does not match the layout's fine grid");
    SourceField s;
    s.cells = medium.cells;
    s.f.resize(medium.kappa.size());
    for (int j = 0; j < medium.cells.y; ++j)
        for (int i = 0; i < medium.cells.x; ++i) {
            const Point2 x = medium.cell_center(i, j);
            const double r2 = (x.x - 0.5) * (x.x - 0.5) + (x.y - 0.5) * (x.y - 0.5);
            const double bump = std::exp(-40.0 * std::abs(r2));
            const std::size_t c = medium.cell(i, j);
            s.f[c] = medium.continuum[c] == 0 ? medium.epsilon / 10.0 * bump : bump;
        }
    return s;
}

std::vector<double> indicator(const MediumField& medium, int continuum)
{
    std::vector<double> w(medium.continuum.size());
    for (std::size_t c = 0; c < w.size(); ++c)
        w[c] = medium.continuum[c] == continuum ? 1.0 : 0.0;
    return w;
}

std::vector<int> block_continuum_counts(const CoarseLayout& layout, const MediumField& medium)
{
    std::vector<int> counts(static_cast<std::size_t>(layout.block_count()) * medium.continua, 0);
    const Index2 cpb = layout.cells_per_block();
    for (int j = 0; j < medium.cells.y; ++j)
        for (int i = 0; i < medium.cells.x; ++i) {
            const int b = layout.block_id({i / cpb.x, j / cpb.y});
            ++counts[static_cast<std::size_t>(b) * medium.continua + medium.continuum[medium.cell(i, j)]];
        }
    return counts;
}

namespace {

int reflect(int k, int n)
{
    const int period = 2 * n;
    k %= period;
    if (k < 0)
        k += period;
    return k < n ? k : period - 1 - k;
}

// Source cell of every padded cell.
std::vector<std::size_t> mirror_map(Index2 cells, Index2 padded)
{
    if ((padded.x - cells.x) % 2 != 0 || (padded.y - cells.y) % 2 != 0 || padded.x < cells.x || padded.y < cells.y)
        throw DimensionMismatch("mirror_extend: padded grid is not a symmetric extension");
    const Index2 off{(padded.x - cells.x) / 2, (padded.y - cells.y) / 2};
    std::vector<std::size_t> map(static_cast<std::size_t>(padded.x) * padded.y);
    for (int j = 0; j < padded.y; ++j)
        for (int i = 0; i < padded.x; ++i)
            map[static_cast<std::size_t>(j) * padded.x + i] =
                static_cast<std::size_t>(reflect(j - off.y, cells.y)) * cells.x + reflect(i - off.x, cells.x);
    return map;
}

} // namespace

MediumField mirror_extend(const MediumField& medium, const CoarseLayout& padded)
{
    const std::vector<std::size_t> map = mirror_map(medium.cells, padded.fine_cells());
    MediumField m = medium;
    m.cells = padded.fine_cells();
    m.domain = padded.domain();
    m.kappa.resize(map.size());
    m.continuum.resize(map.size());
    for (std::size_t c = 0; c < map.size(); ++c) {
        m.kappa[c] = medium.kappa[map[c]];
        m.continuum[c] = medium.continuum[map[c]];
    }
    return m;
}

SourceField mirror_extend(const SourceField& source, const CoarseLayout& padded)
{
    const std::vector<std::size_t> map = mirror_map(source.cells, padded.fine_cells());
    SourceField s{padded.fine_cells(), std::vector<double>(map.size())};
    for (std::size_t c = 0; c < map.size(); ++c)
        s.f[c] = source.f[map[c]];
    return s;
}

// Raster layout: text header lines terminated by "end_header\n", then nx*ny little-endian
// float64 kappa values and nx*ny uint8 continuum ids (1-based), both row-major.

using detail::format_double;
using detail::write_le_doubles;

namespace {

constexpr std::string_view kRasterMagic = "HMCH-RASTER 1";

RasterHeader parse_header(std::istream& is, const std::filesystem::path& path)
{
    std::string line;
    if (!std::getline(is, line) || line != kRasterMagic)
        throw FormatError("'" + path.string() + "' is not an HMCH raster (bad magic)");
    RasterHeader h;
    bool have_nx = false, have_ny = false, done = false;
    while (std::getline(is, line)) {
        if (line == "end_header") {
            done = true;
            break;
        }
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key >> value))
            throw FormatError("malformed raster header line '" + line + "'");
        try {
            if (key == "nx") { h.cells.x = std::stoi(value); have_nx = true; }
            else if (key == "ny") { h.cells.y = std::stoi(value); have_ny = true; }
            else if (key == "geometry") h.geometry = parse_geometry(value);
            else if (key == "epsilon") h.epsilon = std::stod(value);
            else if (key == "seed") h.seed = std::stoull(value);
            else if (key == "continua") h.continua = std::stoi(value);
            else if (key == "domain") {
                h.domain.x0 = std::stod(value);
                if (!(ls >> h.domain.y0 >> h.domain.x1 >> h.domain.y1))
                    throw FormatError("malformed raster domain line");
            }
            else
                throw FormatError("unknown raster header key '" + key + "'");
        } catch (const std::logic_error&) {
            throw FormatError("malformed raster header value in '" + line + "'");
        }
    }
    if (!done || !have_nx || !have_ny || h.cells.x < 1 || h.cells.y < 1 || h.continua < 1 || h.continua > 4)
        throw FormatError("incomplete raster header in '" + path.string() + "'");
    return h;
}

} // namespace

void save_raster(const MediumField& medium, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError("cannot open '" + path.string() + "' for writing");
    os << kRasterMagic << '\n'
       << "nx " << medium.cells.x << '\n'
       << "ny " << medium.cells.y << '\n'
       << "geometry " << to_string(medium.geometry) << '\n'
       << "epsilon " << format_double(medium.epsilon) << '\n'
       << "seed " << medium.seed << '\n'
       << "continua " << medium.continua << '\n'
       << "domain " << format_double(medium.domain.x0) << ' ' << format_double(medium.domain.y0) << ' '
       << format_double(medium.domain.x1) << ' ' << format_double(medium.domain.y1) << '\n'
       << "end_header\n";
    write_le_doubles(os, medium.kappa);
    std::vector<char> ids(medium.continuum.size());
    for (std::size_t k = 0; k < ids.size(); ++k)
        ids[k] = static_cast<char>(medium.continuum[k] + 1);
    os.write(ids.data(), static_cast<std::streamsize>(ids.size()));
    if (!os)
        throw FormatError("write to '" + path.string() + "' failed");
}

RasterHeader read_raster_header(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("cannot open '" + path.string() + "'");
    return parse_header(is, path);
}

MediumField load_raster(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("cannot open '" + path.string() + "'");
    const RasterHeader h = parse_header(is, path);
    const std::size_t n = static_cast<std::size_t>(h.cells.x) * h.cells.y;
    const std::streampos payload_start = is.tellg();
    is.seekg(0, std::ios::end);
    const auto payload = static_cast<std::size_t>(is.tellg() - payload_start);
    if (payload != 9 * n)
        throw DimensionMismatch("raster '" + path.string() + "' holds " + std::to_string(payload) +
                                " payload bytes, header promises " + std::to_string(9 * n));
    is.seekg(payload_start);

    MediumField m;
    m.cells = h.cells;
    m.domain = h.domain;
    m.continua = h.continua;
    m.epsilon = h.epsilon;
    m.geometry = h.geometry;
    m.seed = h.seed;
    m.kappa.resize(n);
    if (!detail::read_le_doubles(is, m.kappa.data(), n))
        throw FormatError("short read in raster '" + path.string() + "'");
    std::vector<unsigned char> buf;
    buf.resize(n);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    m.continuum.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (buf[k] < 1 || buf[k] > h.continua)
            throw FormatError("raster continuum id out of range");
        m.continuum[k] = static_cast<std::uint8_t>(buf[k] - 1);
    }
    return m;
}

} // namespace hmch
