#pragma once

#include "hmch/cell_problems.hpp"
#include "hmch/hierarchy_driver.hpp"
#include "hmch/medium.hpp"
#include "hmch/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hmch {

/// Flat key = value experiment description. Keys:
///   geometry, epsilon (a number or a fraction such as 1/48), seed,
///   stripe_period, stripe_fraction, stripe_offset, density, inclusion_min, inclusion_max,
///   anchor_cells, modulate,
///   blocks (comma list of blocks per dimension), fine_cells (global cells per dimension) or
///   fine_cells_per_block, layers (integer or auto), eta, levels (auto, one value or one per blocks entry),
///   variants (full, hierarchical), boundary (natural or dirichlet), exterior (mirror or clip),
///   literal_gradient_rhs, recenter_parents, zero_trace_correction, gamma, cache, cache_dir, output, threads.
struct ExperimentConfig {
    Geometry geometry = Geometry::layered;
    GeometryParams params;
    double epsilon = 1.0 / 48.0;
    std::uint64_t seed = 0;
    std::vector<int> blocks{12, 24};
    std::optional<int> fine_cells = 240;
    std::optional<int> fine_cells_per_block;
    std::optional<int> layers;
    int eta = 2;
    std::vector<int> levels{}; // empty = auto: per entry the largest L <= 3 with eta^(L-1) | blocks, cells per block
    std::vector<Variant> variants{Variant::full, Variant::hierarchical};
    CellOptions cell;
    Exterior exterior = Exterior::mirror;
    double gamma = 1.0;
    bool cache = false;
    std::filesystem::path cache_dir;
    std::filesystem::path output = "out";
    int threads = 0; // 0 = hardware concurrency

    bool wants(Variant v) const;
    int levels_for(std::size_t k) const;
    int cells_per_block_for(std::size_t k) const;
    /// Sorted key = value lines of every solution-relevant setting (output paths, thread count and
    /// the cache switch are excluded).
    std::string canonical() const;
    std::string hash_hex() const;
};

ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Throws InvalidArgument naming the violated constraint.
void validate(const ExperimentConfig& cfg);

struct CaseResult {
    int blocks = 0;
    double H = 0.0;
    int layers = 0;
    int levels = 1;
    CoarseLayout layout;
    MediumField medium{};
    FineSolution fine{};
    BlockAverages fine_averages{};
    std::optional<RunResult> full{};
    std::optional<RunResult> hier{};
    std::optional<ErrorReport> errors{}; // needs both variants
};

/// Runs sweep entry k: medium, fine reference, requested pipelines and the error comparison.
CaseResult run_case(const ExperimentConfig& cfg, std::size_t k, const ExecuteOptions& base = {},
                    const std::function<void(const LocalCellSolutions&, bool)>& observer = {});

/// Runs the whole sweep and writes errors.csv, cost.csv, coeffs_<variant>_H<blocks>.csv and
/// blocks_H<blocks>.csv to cfg.output. Progress and warnings go to `log`.
std::vector<CaseResult> run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// Human-readable plan summary without solves.
void describe(const ExperimentConfig& cfg, std::ostream& os);

/// Structured error record written next to the outputs on failure.
void write_error_record(const std::filesystem::path& path, const std::string& stage, const std::string& message,
                        const std::string& config_hash);

} // namespace hmch
