#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace hmch {

inline constexpr int kDims = 2;

struct Index2 {
    int x = 0;
    int y = 0;

    auto operator<=>(const Index2&) const = default;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 1.0;
    double y1 = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
};

/// Half-open rectangle of integer indices [lo, hi).
struct IndexBox {
    Index2 lo;
    Index2 hi;

    int nx() const { return hi.x - lo.x; }
    int ny() const { return hi.y - lo.y; }
    int count() const { return nx() * ny(); }
    bool contains(Index2 p) const { return p.x >= lo.x && p.x < hi.x && p.y >= lo.y && p.y < hi.y; }
    bool contains(const IndexBox& o) const
    {
        return o.lo.x >= lo.x && o.lo.y >= lo.y && o.hi.x <= hi.x && o.hi.y <= hi.y;
    }
    bool operator==(const IndexBox&) const = default;
};

/// Fine/coarse structured grid of a rectangular domain. Coarse blocks K_p are unions of
/// whole fine cells; the representative volume of every block is the block itself.
class CoarseLayout {
public:
    CoarseLayout(Index2 blocks, Index2 cells_per_block, Rect domain, std::optional<int> oversample_layers = {});

    Index2 blocks() const { return blocks_; }
    Index2 cells_per_block() const { return cells_per_block_; }
    Index2 fine_cells() const { return {blocks_.x * cells_per_block_.x, blocks_.y * cells_per_block_.y}; }
    const Rect& domain() const { return domain_; }

    double block_width() const { return domain_.width() / blocks_.x; }
    double block_height() const { return domain_.height() / blocks_.y; }
    /// Coarse mesh size H (largest block side).
    double coarse_size() const;
    double cell_width() const { return block_width() / cells_per_block_.x; }
    double cell_height() const { return block_height() / cells_per_block_.y; }

    int oversample_layers() const { return layers_; }

    int block_count() const { return blocks_.x * blocks_.y; }
    int block_id(Index2 b) const { return b.y * blocks_.x + b.x; }
    Index2 block_index(int id) const { return {id % blocks_.x, id / blocks_.x}; }
    bool valid_block(Index2 b) const { return b.x >= 0 && b.y >= 0 && b.x < blocks_.x && b.y < blocks_.y; }
    Point2 block_center(Index2 b) const;
    IndexBox block_cells(Index2 b) const;
    double block_area() const { return block_width() * block_height(); }

    Point2 cell_center(Index2 c) const;
    double cell_area() const { return cell_width() * cell_height(); }

    /// ceil(-2 ln H), clamped at zero.
    static int default_layers(double coarse_size);

private:
    Index2 blocks_;
    Index2 cells_per_block_;
    Rect domain_;
    int layers_ = 0;
};

CoarseLayout build_coarse_layout(int blocks_per_dim, int fine_cells_per_block, Rect domain = {});

/// Same block and cell size with `pad` extra blocks on every side; the domain grows to match and
/// the oversampling layer count is kept.
CoarseLayout padded_layout(const CoarseLayout& layout, int pad);

/// Rectangle of whole coarse blocks (R_p^+ or an enlarged solve region).
struct Region {
    IndexBox blocks;
    IndexBox cells;
    bool clipped = false;

    bool contains(const Region& o) const { return blocks.contains(o.blocks); }
    bool operator==(const Region& o) const { return blocks == o.blocks && cells == o.cells; }
};

Region make_region(const CoarseLayout& layout, IndexBox blocks, bool clipped = false);
Region oversample_region(const CoarseLayout& layout, Index2 block, int layers);
/// Smallest block rectangle containing both regions.
Region bounding_region(const CoarseLayout& layout, const Region& a, const Region& b);

/// Nodal Q1 grid over a region, with cells coarsened by an integer factor.
struct NodeGrid {
    Index2 cells;        // cells at this resolution
    double hx = 0.0;     // cell size at this resolution
    double hy = 0.0;
    Point2 origin;       // lower-left corner
    int factor = 1;      // fine cells per cell in each direction
    Index2 fine_cell_lo; // first global fine cell covered

    int nodes_x() const { return cells.x + 1; }
    int nodes_y() const { return cells.y + 1; }
    int node_count() const { return nodes_x() * nodes_y(); }
    int node(int i, int j) const { return j * nodes_x() + i; }
    Point2 node_point(int i, int j) const { return {origin.x + i * hx, origin.y + j * hy}; }
    bool on_boundary(int i, int j) const { return i == 0 || j == 0 || i == cells.x || j == cells.y; }
};

/// Grid over `region` whose cells are `factor` x `factor` fine cells. Throws when the region's
/// fine cell counts are not divisible by the factor.
NodeGrid region_grid(const CoarseLayout& layout, const Region& region, int factor = 1);
NodeGrid global_fine_grid(const CoarseLayout& layout);

/// eta^(level-1), the coarsening factor of FE level `level`.
int level_factor(int eta, int level);

/// Bilinear prolongation from `coarse` to `fine`; the fine grid must refine the coarse one by an
/// integer ratio over the same rectangle.
std::vector<double> prolongate(std::span<const double> values, const NodeGrid& coarse, const NodeGrid& fine);
/// Transpose of prolongate: accumulates fine nodal values onto coarse nodes.
std::vector<double> prolongate_transpose(std::span<const double> values, const NodeGrid& coarse,
                                         const NodeGrid& fine);

/// Copies nodal values of `sub` out of `outer`; both are at the same resolution.
std::vector<double> restrict_nodes(std::span<const double> values, const NodeGrid& outer, const NodeGrid& sub);

struct ParentLink {
    int block = -1;      // block id of an S_1 macropoint
    double weight = 1.0; // interpolation coefficient c_t
};

/// Nested macrogrids T_1 ⊂ ... ⊂ T_L and disjoint level sets S_n.
struct MacroHierarchy {
    int eta = 2;
    int levels = 1;
    std::vector<std::vector<int>> T;            // block ids per level, sorted
    std::vector<std::vector<int>> S;            // block ids per level, sorted
    std::vector<int> level_of;                  // per block id, 1-based
    std::vector<std::vector<ParentLink>> parent; // per block id; empty for S_1

    /// Macrogrid spacing of T_n in units of H.
    int spacing(int level) const;
};

MacroHierarchy build_hierarchy(const CoarseLayout& layout, int eta, int levels);

/// One line per macropoint: level, block id, bx, by, then parent id and weight pairs.
void write_hierarchy(std::ostream& os, const CoarseLayout& layout, const MacroHierarchy& h);

double block_distance(const CoarseLayout& layout, int a, int b);

} // namespace hmch
