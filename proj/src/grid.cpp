#include "hmch/grid.hpp"

#include "hmch/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace hmch {

CoarseLayout::CoarseLayout(Index2 blocks, Index2 cells_per_block, Rect domain, std::optional<int> oversample_layers)
    : blocks_(blocks), cells_per_block_(cells_per_block), domain_(domain)
{
    if (blocks.x < 1 || blocks.y < 1)
        throw InvalidArgument("blocks_per_dim must be >= 1");
    if (cells_per_block.x < 1 || cells_per_block.y < 1)
        throw InvalidArgument("fine_cells_per_block must be >= 1");
    if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
        throw InvalidArgument("domain must have positive extent");
    if (oversample_layers && *oversample_layers < 0)
        throw InvalidArgument("oversample_layers must be >= 0");
    layers_ = oversample_layers ? *oversample_layers : default_layers(coarse_size());
}

double CoarseLayout::coarse_size() const { return std::max(block_width(), block_height()); }

int CoarseLayout::default_layers(double coarse_size)
{
    const double l = std::ceil(-2.0 * std::log(coarse_size));
    return l > 0.0 ? static_cast<int>(l) : 0;
}

Point2 CoarseLayout::block_center(Index2 b) const
{
    return {domain_.x0 + (b.x + 0.5) * block_width(), domain_.y0 + (b.y + 0.5) * block_height()};
}

IndexBox CoarseLayout::block_cells(Index2 b) const
{
    const Index2 lo{b.x * cells_per_block_.x, b.y * cells_per_block_.y};
    return {lo, {lo.x + cells_per_block_.x, lo.y + cells_per_block_.y}};
}

Point2 CoarseLayout::cell_center(Index2 c) const
{
    return {domain_.x0 + (c.x + 0.5) * cell_width(), domain_.y0 + (c.y + 0.5) * cell_height()};
}

CoarseLayout build_coarse_layout(int blocks_per_dim, int fine_cells_per_block, Rect domain)
{
    return CoarseLayout({blocks_per_dim, blocks_per_dim}, {fine_cells_per_block, fine_cells_per_block}, domain);
}

CoarseLayout padded_layout(const CoarseLayout& layout, int pad)
{
    if (pad < 0)
        throw InvalidArgument("padding must be >= 0");
    const double px = pad * layout.block_width(), py = pad * layout.block_height();
    const Rect& d = layout.domain();
    return CoarseLayout({layout.blocks().x + 2 * pad, layout.blocks().y + 2 * pad}, layout.cells_per_block(),
                        Rect{d.x0 - px, d.y0 - py, d.x1 + px, d.y1 + py}, layout.oversample_layers());
}

Region make_region(const CoarseLayout& layout, IndexBox blocks, bool clipped)
{
    const Index2 cpb = layout.cells_per_block();
    Region r;
    r.blocks = blocks;
    r.cells = {{blocks.lo.x * cpb.x, blocks.lo.y * cpb.y}, {blocks.hi.x * cpb.x, blocks.hi.y * cpb.y}};
    r.clipped = clipped;
    return r;
}

Region oversample_region(const CoarseLayout& layout, Index2 block, int layers)
{
    if (layers < 0)
        throw InvalidArgument("oversampling layers must be >= 0");
    if (!layout.valid_block(block))
        throw InvalidArgument("block index outside the layout");
    const Index2 nb = layout.blocks();
    const Index2 want_lo{block.x - layers, block.y - layers};
    const Index2 want_hi{block.x + layers + 1, block.y + layers + 1};
    IndexBox box{{std::max(0, want_lo.x), std::max(0, want_lo.y)},
                 {std::min(nb.x, want_hi.x), std::min(nb.y, want_hi.y)}};
    const bool clipped = box.lo != want_lo || box.hi != want_hi;
    return make_region(layout, box, clipped);
}

Region bounding_region(const CoarseLayout& layout, const Region& a, const Region& b)
{
    IndexBox box{{std::min(a.blocks.lo.x, b.blocks.lo.x), std::min(a.blocks.lo.y, b.blocks.lo.y)},
                 {std::max(a.blocks.hi.x, b.blocks.hi.x), std::max(a.blocks.hi.y, b.blocks.hi.y)}};
    return make_region(layout, box, a.clipped || b.clipped);
}

NodeGrid region_grid(const CoarseLayout& layout, const Region& region, int factor)
{
    if (factor < 1)
        throw InvalidArgument("coarsening factor must be >= 1");
    const int fx = region.cells.nx();
    const int fy = region.cells.ny();
    if (fx % factor != 0 || fy % factor != 0)
        throw InvalidArgument("region of " + std::to_string(fx) + "x" + std::to_string(fy) +
                              " fine cells is not divisible by coarsening factor " + std::to_string(factor));
    NodeGrid g;
    g.cells = {fx / factor, fy / factor};
    g.hx = layout.cell_width() * factor;
    g.hy = layout.cell_height() * factor;
    g.origin = {layout.domain().x0 + region.cells.lo.x * layout.cell_width(),
                layout.domain().y0 + region.cells.lo.y * layout.cell_height()};
    g.factor = factor;
    g.fine_cell_lo = region.cells.lo;
    return g;
}

NodeGrid global_fine_grid(const CoarseLayout& layout)
{
    return region_grid(layout, make_region(layout, {{0, 0}, layout.blocks()}), 1);
}

int level_factor(int eta, int level)
{
    if (level < 1)
        throw InvalidArgument("level must be >= 1");
    int f = 1;
    for (int n = 1; n < level; ++n)
        f *= eta;
    return f;
}

namespace {

int nesting_ratio(const NodeGrid& coarse, const NodeGrid& fine)
{
    if (fine.factor <= 0 || coarse.factor % fine.factor != 0)
        throw InvalidArgument("grids are not nested: coarse factor must be a multiple of the fine factor");
    const int r = coarse.factor / fine.factor;
    if (coarse.fine_cell_lo != fine.fine_cell_lo || coarse.cells.x * r != fine.cells.x ||
        coarse.cells.y * r != fine.cells.y)
        throw InvalidArgument("grids are not nested: extents differ");
    return r;
}

} // namespace

std::vector<double> prolongate(std::span<const double> values, const NodeGrid& coarse, const NodeGrid& fine)
{
    const int r = nesting_ratio(coarse, fine);
    if (static_cast<int>(values.size()) != coarse.node_count())
        throw DimensionMismatch("prolongate: value count does not match the coarse grid");
    std::vector<double> out(fine.node_count());
    const int cnx = coarse.nodes_x();
    for (int j = 0; j < fine.nodes_y(); ++j) {
        const int J = std::min(j / r, coarse.cells.y - 1);
        const double ty = static_cast<double>(j - J * r) / r;
        for (int i = 0; i < fine.nodes_x(); ++i) {
            const int I = std::min(i / r, coarse.cells.x - 1);
            const double tx = static_cast<double>(i - I * r) / r;
            const double* c0 = values.data() + J * cnx + I;
            const double* c1 = c0 + cnx;
            double v;
            if (tx == 0.0 && ty == 0.0)
                v = c0[0];
            else
                v = (1.0 - ty) * ((1.0 - tx) * c0[0] + tx * c0[1]) + ty * ((1.0 - tx) * c1[0] + tx * c1[1]);
            out[fine.node(i, j)] = v;
        }
    }
    return out;
}

std::vector<double> prolongate_transpose(std::span<const double> values, const NodeGrid& coarse,
                                         const NodeGrid& fine)
{
    const int r = nesting_ratio(coarse, fine);
    if (static_cast<int>(values.size()) != fine.node_count())
        throw DimensionMismatch("prolongate_transpose: value count does not match the fine grid");
    std::vector<double> out(coarse.node_count(), 0.0);
    const int cnx = coarse.nodes_x();
    for (int j = 0; j < fine.nodes_y(); ++j) {
        const int J = std::min(j / r, coarse.cells.y - 1);
        const double ty = static_cast<double>(j - J * r) / r;
        for (int i = 0; i < fine.nodes_x(); ++i) {
            const int I = std::min(i / r, coarse.cells.x - 1);
            const double tx = static_cast<double>(i - I * r) / r;
            const double v = values[fine.node(i, j)];
            double* c0 = out.data() + J * cnx + I;
            double* c1 = c0 + cnx;
            c0[0] += (1.0 - ty) * (1.0 - tx) * v;
            c0[1] += (1.0 - ty) * tx * v;
            c1[0] += ty * (1.0 - tx) * v;
            c1[1] += ty * tx * v;
        }
    }
    return out;
}

std::vector<double> restrict_nodes(std::span<const double> values, const NodeGrid& outer, const NodeGrid& sub)
{
    if (outer.factor != sub.factor)
        throw InvalidArgument("restrict_nodes: grids must share a resolution");
    if (static_cast<int>(values.size()) != outer.node_count())
        throw DimensionMismatch("restrict_nodes: value count does not match the outer grid");
    const int ox = sub.fine_cell_lo.x - outer.fine_cell_lo.x;
    const int oy = sub.fine_cell_lo.y - outer.fine_cell_lo.y;
    if (ox < 0 || oy < 0 || ox % sub.factor != 0 || oy % sub.factor != 0)
        throw InvalidArgument("restrict_nodes: sub grid is not aligned inside the outer grid");
    const int di = ox / sub.factor;
    const int dj = oy / sub.factor;
    if (di + sub.cells.x > outer.cells.x || dj + sub.cells.y > outer.cells.y)
        throw InvalidArgument("restrict_nodes: sub grid extends beyond the outer grid");
    std::vector<double> out(sub.node_count());
    for (int j = 0; j < sub.nodes_y(); ++j)
        for (int i = 0; i < sub.nodes_x(); ++i)
            out[sub.node(i, j)] = values[outer.node(i + di, j + dj)];
    return out;
}

int MacroHierarchy::spacing(int level) const { return level_factor(eta, levels - level + 1); }

namespace {

// Squared distance between block centers in physical units, from integer offsets.
double center_distance2(const CoarseLayout& layout, Index2 a, Index2 b)
{
    const double dx = (a.x - b.x) * layout.block_width();
    const double dy = (a.y - b.y) * layout.block_height();
    return dx * dx + dy * dy;
}

bool lex_less(Index2 a, Index2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; }

} // namespace

double block_distance(const CoarseLayout& layout, int a, int b)
{
    return std::sqrt(center_distance2(layout, layout.block_index(a), layout.block_index(b)));
}

MacroHierarchy build_hierarchy(const CoarseLayout& layout, int eta, int levels)
{
    if (levels < 1)
        throw InvalidArgument("levels must be >= 1");
    if (eta < 1 || (levels > 1 && eta < 2))
        throw InvalidArgument("coarsening factor eta must be >= 2");
    MacroHierarchy h;
    h.eta = eta;
    h.levels = levels;
    const Index2 nb = layout.blocks();
    const int top = h.spacing(1);
    if (nb.x % top != 0 || nb.y % top != 0)
        throw InvalidArgument("eta^(L-1) = " + std::to_string(top) + " must divide blocks_per_dim (" +
                              std::to_string(nb.x) + "x" + std::to_string(nb.y) + ")");

    h.T.assign(levels, {});
    h.S.assign(levels, {});
    std::vector<int> member(layout.block_count(), 0);
    for (int id = 0; id < layout.block_count(); ++id)
        h.T[levels - 1].push_back(id);

    // T_n: per super-block, the T_{n+1} point nearest to the super-block center.
    for (int n = levels - 1; n >= 1; --n) {
        const int s = h.spacing(n);
        std::fill(member.begin(), member.end(), 0);
        for (int id : h.T[n])
            member[id] = 1;
        for (int J = 0; J < nb.y / s; ++J)
            for (int I = 0; I < nb.x / s; ++I) {
                // Work in half-block units so that the super-block center is an integer.
                const int cx = 2 * I * s + s;
                const int cy = 2 * J * s + s;
                int best = -1;
                double best_d = 0.0;
                Index2 best_idx{};
                for (int by = J * s; by < (J + 1) * s; ++by)
                    for (int bx = I * s; bx < (I + 1) * s; ++bx) {
                        const int id = layout.block_id({bx, by});
                        if (!member[id])
                            continue;
                        const double dx = (2 * bx + 1 - cx) * layout.block_width();
                        const double dy = (2 * by + 1 - cy) * layout.block_height();
                        const double d2 = dx * dx + dy * dy;
                        if (best < 0 || d2 < best_d || (d2 == best_d && lex_less({bx, by}, best_idx))) {
                            best = id;
                            best_d = d2;
                            best_idx = {bx, by};
                        }
                    }
                if (best < 0)
                    throw InvalidArgument("internal: empty super-block while building the hierarchy");
                h.T[n - 1].push_back(best);
            }
        std::sort(h.T[n - 1].begin(), h.T[n - 1].end());
    }

    h.level_of.assign(layout.block_count(), 0);
    for (int n = 0; n < levels; ++n)
        for (int id : h.T[n])
            if (h.level_of[id] == 0) {
                h.level_of[id] = n + 1;
                h.S[n].push_back(id);
            }

    h.parent.assign(layout.block_count(), {});
    for (int n = 1; n < levels; ++n)
        for (int id : h.S[n]) {
            const Index2 p = layout.block_index(id);
            int best = -1;
            double best_d = 0.0;
            for (int t : h.S[0]) {
                const Index2 q = layout.block_index(t);
                const double d = center_distance2(layout, p, q);
                if (best < 0 || d < best_d || (d == best_d && lex_less(q, layout.block_index(best)))) {
                    best = t;
                    best_d = d;
                }
            }
            h.parent[id] = {ParentLink{best, 1.0}};
        }
    return h;
}

void write_hierarchy(std::ostream& os, const CoarseLayout& layout, const MacroHierarchy& h)
{
    os << "# eta " << h.eta << " levels " << h.levels << "\n";
    os << "# level block bx by [parent weight]...\n";
    for (int n = 0; n < h.levels; ++n)
        for (int id : h.S[n]) {
            const Index2 b = layout.block_index(id);
            os << n + 1 << ' ' << id << ' ' << b.x << ' ' << b.y;
            for (const ParentLink& l : h.parent[id])
                os << ' ' << l.block << ' ' << l.weight;
            os << '\n';
        }
}

} // namespace hmch
