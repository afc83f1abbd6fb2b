#include "hmch/experiment.hpp"

#include "hmch/error.hpp"
#include "io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace hmch {

using detail::format_double;

namespace {

int auto_levels(int eta, int blocks, int cells_per_block)
{
    int L = 3;
    while (L > 1 && (eta < 2 || blocks % level_factor(eta, L) != 0 || cells_per_block % level_factor(eta, L) != 0))
        --L;
    return L;
}

} // namespace

bool ExperimentConfig::wants(Variant v) const
{
    return std::find(variants.begin(), variants.end(), v) != variants.end();
}

int ExperimentConfig::levels_for(std::size_t k) const
{
    if (levels.empty())
        return auto_levels(eta, blocks.at(k), cells_per_block_for(k));
    if (levels.size() == 1)
        return levels.front();
    return levels.at(k);
}

int ExperimentConfig::cells_per_block_for(std::size_t k) const
{
    if (fine_cells_per_block)
        return *fine_cells_per_block;
    const int b = blocks.at(k);
    if (!fine_cells || *fine_cells % b != 0)
        throw InvalidArgument("fine_cells (" + std::to_string(fine_cells.value_or(0)) +
                              ") must be divisible by blocks = " + std::to_string(b));
    return *fine_cells / b;
}

namespace {

std::string trim(std::string s)
{
    const auto ws = " \t\r\n";
    const auto a = s.find_first_not_of(ws);
    if (a == std::string::npos)
        return "";
    return s.substr(a, s.find_last_not_of(ws) - a + 1);
}

std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

double parse_number(const std::string& v)
{
    std::size_t pos = 0;
    const auto slash = v.find('/');
    if (slash != std::string::npos) {
        const double num = std::stod(v.substr(0, slash), &pos);
        const double den = std::stod(v.substr(slash + 1));
        return num / den;
    }
    const double x = std::stod(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument(v);
    return x;
}

int parse_int(const std::string& v)
{
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument(v);
    return x;
}

bool parse_bool(const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw std::invalid_argument(v);
}

std::string join_ints(const std::vector<int>& v)
{
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k)
        s += (k ? "," : "") + std::to_string(v[k]);
    return s;
}

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

std::string ExperimentConfig::canonical() const
{
    std::map<std::string, std::string> kv;
    kv["geometry"] = std::string(to_string(geometry));
    kv["epsilon"] = format_double(epsilon);
    kv["seed"] = std::to_string(seed);
    kv["stripe_period"] = format_double(params.stripe_period);
    kv["stripe_fraction"] = format_double(params.stripe_fraction);
    kv["stripe_offset"] = format_double(params.stripe_offset);
    kv["density"] = format_double(params.density);
    kv["inclusion_min"] = std::to_string(params.inclusion_min);
    kv["inclusion_max"] = std::to_string(params.inclusion_max);
    kv["anchor_cells"] = std::to_string(params.anchor_cells);
    kv["modulate"] = params.modulate ? "true" : "false";
    kv["blocks"] = join_ints(blocks);
    std::vector<int> cpb;
    for (std::size_t k = 0; k < blocks.size(); ++k)
        cpb.push_back(fine_cells_per_block ? *fine_cells_per_block
                                           : (fine_cells && blocks[k] > 0 ? *fine_cells / blocks[k] : 0));
    kv["fine_cells_per_block"] = join_ints(cpb);
    kv["layers"] = layers ? std::to_string(*layers) : "auto";
    kv["eta"] = std::to_string(eta);
    std::vector<int> resolved = levels;
    if (levels.empty())
        for (std::size_t k = 0; k < blocks.size(); ++k)
            resolved.push_back(blocks[k] > 0 && cpb[k] > 0 ? auto_levels(eta, blocks[k], cpb[k]) : 0);
    kv["levels"] = join_ints(resolved);
    std::string vs;
    for (Variant v : variants)
        vs += (vs.empty() ? "" : ",") + std::string(to_string(v));
    kv["variants"] = vs;
    kv["boundary"] = std::string(to_string(cell.boundary));
    kv["literal_gradient_rhs"] = cell.literal_gradient_rhs ? "true" : "false";
    kv["recenter_parents"] = cell.recenter_parents ? "true" : "false";
    kv["zero_trace_correction"] = cell.zero_trace_correction ? "true" : "false";
    kv["exterior"] = std::string(to_string(exterior));
    kv["gamma"] = format_double(gamma);
    std::string out;
    for (const auto& [k, v] : kv)
        out += k + " = " + v + "\n";
    return out;
}

std::string ExperimentConfig::hash_hex() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
    return buf;
}

ExperimentConfig parse_config(std::istream& is, const std::string& source)
{
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    bool explicit_cells = false, explicit_cpb = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "geometry") cfg.geometry = parse_geometry(value);
            else if (key == "epsilon") cfg.epsilon = parse_number(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "stripe_period") cfg.params.stripe_period = parse_number(value);
            else if (key == "stripe_fraction") cfg.params.stripe_fraction = parse_number(value);
            else if (key == "stripe_offset") cfg.params.stripe_offset = parse_number(value);
            else if (key == "density") cfg.params.density = parse_number(value);
            else if (key == "inclusion_min") cfg.params.inclusion_min = parse_int(value);
            else if (key == "inclusion_max") cfg.params.inclusion_max = parse_int(value);
            else if (key == "anchor_cells") cfg.params.anchor_cells = parse_int(value);
            else if (key == "modulate") cfg.params.modulate = parse_bool(value);
            else if (key == "blocks") {
                cfg.blocks.clear();
                for (const auto& s : split_list(value))
                    cfg.blocks.push_back(parse_int(s));
            }
            else if (key == "fine_cells") { cfg.fine_cells = parse_int(value); explicit_cells = true; }
            else if (key == "fine_cells_per_block") { cfg.fine_cells_per_block = parse_int(value); explicit_cpb = true; }
            else if (key == "layers") {
                if (value == "auto")
                    cfg.layers.reset();
                else
                    cfg.layers = parse_int(value);
            }
            else if (key == "eta") cfg.eta = parse_int(value);
            else if (key == "levels") {
                cfg.levels.clear();
                if (value != "auto")
                    for (const auto& s : split_list(value))
                        cfg.levels.push_back(parse_int(s));
            }
            else if (key == "variants") {
                cfg.variants.clear();
                for (const auto& s : split_list(value))
                    cfg.variants.push_back(parse_variant(s));
            }
            else if (key == "boundary") cfg.cell.boundary = parse_boundary(value);
            else if (key == "literal_gradient_rhs") cfg.cell.literal_gradient_rhs = parse_bool(value);
            else if (key == "recenter_parents") cfg.cell.recenter_parents = parse_bool(value);
            else if (key == "zero_trace_correction") cfg.cell.zero_trace_correction = parse_bool(value);
            else if (key == "exterior") cfg.exterior = parse_exterior(value);
            else if (key == "gamma") cfg.gamma = parse_number(value);
            else if (key == "cache") cfg.cache = parse_bool(value);
            else if (key == "cache_dir") cfg.cache_dir = value;
            else if (key == "output") cfg.output = value;
            else if (key == "threads") cfg.threads = parse_int(value);
            else
                throw FormatError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const std::logic_error&) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": bad value '" + value + "' for " + key);
        }
    }
    if (explicit_cells && explicit_cpb)
        throw InvalidArgument("set either fine_cells or fine_cells_per_block, not both");
    if (explicit_cpb)
        cfg.fine_cells.reset();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw FormatError("cannot open config '" + path.string() + "'");
    return parse_config(is, path.string());
}

void validate(const ExperimentConfig& cfg)
{
    if (!(cfg.epsilon > 0.0))
        throw InvalidArgument("epsilon must be > 0");
    if (cfg.blocks.empty())
        throw InvalidArgument("blocks must list at least one coarse mesh");
    if (cfg.variants.empty())
        throw InvalidArgument("variants must name full and/or hierarchical");
    if (cfg.levels.size() > 1 && cfg.levels.size() != cfg.blocks.size())
        throw InvalidArgument("levels must be a single value or one value per blocks entry");
    if (cfg.layers && *cfg.layers < 0)
        throw InvalidArgument("layers must be >= 0");
    if (!(cfg.gamma > 0.0))
        throw InvalidArgument("gamma must be > 0");
    if (cfg.threads < 0)
        throw InvalidArgument("threads must be >= 0");
    for (std::size_t k = 0; k < cfg.blocks.size(); ++k) {
        const int b = cfg.blocks[k];
        if (b < 1)
            throw InvalidArgument("blocks entries must be >= 1");
        const int cpb = cfg.cells_per_block_for(k);
        if (cpb < 1)
            throw InvalidArgument("fine cells per block must be >= 1");
        const int L = cfg.levels_for(k);
        if (L < 1)
            throw InvalidArgument("levels must be >= 1");
        if (cfg.wants(Variant::hierarchical) && L > 1) {
            if (cfg.eta < 2)
                throw InvalidArgument("eta must be >= 2 when levels > 1");
            const int r = level_factor(cfg.eta, L);
            if (b % r != 0)
                throw InvalidArgument("eta^(L-1) = " + std::to_string(r) + " must divide blocks = " +
                                      std::to_string(b));
            if (cpb % r != 0)
                throw InvalidArgument("eta^(L-1) = " + std::to_string(r) + " must divide fine cells per block = " +
                                      std::to_string(cpb) + " (blocks = " + std::to_string(b) + ")");
        }
    }
}

CaseResult run_case(const ExperimentConfig& cfg, std::size_t k, const ExecuteOptions& base,
                    const std::function<void(const LocalCellSolutions&, bool)>& observer)
{
    const int b = cfg.blocks.at(k);
    const int cpb = cfg.cells_per_block_for(k);
    CoarseLayout layout({b, b}, {cpb, cpb}, Rect{}, cfg.layers);
    CaseResult r{.blocks = b,
                 .H = layout.coarse_size(),
                 .layers = layout.oversample_layers(),
                 .levels = cfg.levels_for(k),
                 .layout = layout};
    r.medium = make_kappa(layout, cfg.geometry, cfg.epsilon, cfg.seed, cfg.params);
    const SourceField source = make_source(layout, r.medium);
    r.fine = solve_fine_reference(layout, r.medium, source);
    r.fine_averages = block_continuum_averages(r.fine, r.medium, layout);

    ExecuteOptions opt = base;
    opt.cell = cfg.cell;
    if (observer)
        opt.observer = observer;
    if (cfg.wants(Variant::full))
        r.full = execute(plan_run(layout, r.medium, Variant::full, cfg.eta, 1, cfg.gamma, cfg.exterior), r.medium,
                         source, opt);
    if (cfg.wants(Variant::hierarchical)) {
        const RunPlan plan = plan_run(layout, r.medium, Variant::hierarchical, cfg.eta, r.levels, cfg.gamma,
                                       cfg.exterior);
        r.hier = execute(plan, r.medium, source, opt,
                         r.full ? std::optional<double>(r.full->cost.total_work) : std::nullopt);
    }
    if (r.full && r.hier)
        r.errors = three_way_errors(r.fine_averages, r.full->macro, r.hier->macro);
    return r;
}

namespace {

std::string hash_line(const ExperimentConfig& cfg) { return "# config_hash=" + cfg.hash_hex() + "\n"; }

void warn_mismatched_hashes(const std::filesystem::path& dir, const std::string& hash, std::ostream& log)
{
    if (!std::filesystem::exists(dir))
        return;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".csv")
            continue;
        std::ifstream is(entry.path());
        std::string first;
        std::getline(is, first);
        const std::string prefix = "# config_hash=";
        if (first.rfind(prefix, 0) == 0 && first.substr(prefix.size()) != hash)
            log << "warning: " << entry.path().string() << " was written by config " << first.substr(prefix.size())
                << ", current config is " << hash << '\n';
    }
}

std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream os(p);
    if (!os)
        throw FormatError("cannot open '" + p.string() + "' for writing");
    return os;
}

std::string opt_value(const std::optional<ErrorReport>& e, int which, int i)
{
    if (!e)
        return "";
    const auto& v = which == 1 ? e->type1 : which == 2 ? e->type2 : e->type3;
    return format_double(v[i]);
}

} // namespace

std::vector<CaseResult> run_experiment(const ExperimentConfig& cfg, std::ostream& log)
{
    validate(cfg);
    const std::string hash = cfg.hash_hex();
    std::filesystem::create_directories(cfg.output);
    warn_mismatched_hashes(cfg.output, hash, log);

    ExecuteOptions base;
    base.threads = cfg.threads > 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    if (cfg.cache)
        base.cache_dir = cfg.cache_dir.empty() ? cfg.output / "cache" : cfg.cache_dir;

    std::vector<CaseResult> results;
    for (std::size_t k = 0; k < cfg.blocks.size(); ++k) {
        log << "H = 1/" << cfg.blocks[k] << ": running\n";
        results.push_back(run_case(cfg, k, base));
        const CaseResult& r = results.back();
        for (const auto* run : {r.full ? &*r.full : nullptr, r.hier ? &*r.hier : nullptr}) {
            if (!run)
                continue;
            log << "  " << to_string(run->cost.variant) << ": " << run->cost.solves << " solves, "
                << run->cost.cache_hits << " cache hits, work ratio " << format_double(run->cost.measured_ratio)
                << '\n';
        }
    }

    {
        auto os = open_out(cfg.output / "errors.csv");
        os << hash_line(cfg) << "geometry,eps,H,l,continuum,type1,type2,type3\n";
        for (const CaseResult& r : results)
            for (int i = 0; i < r.medium.continua; ++i)
                os << to_string(cfg.geometry) << ',' << format_double(cfg.epsilon) << ',' << format_double(r.H) << ','
                   << r.layers << ',' << i + 1 << ',' << opt_value(r.errors, 1, i) << ',' << opt_value(r.errors, 2, i)
                   << ',' << opt_value(r.errors, 3, i) << '\n';
    }
    {
        int max_levels = 1;
        for (const CaseResult& r : results)
            max_levels = std::max(max_levels, r.levels);
        auto os = open_out(cfg.output / "cost.csv");
        os << hash_line(cfg);
        write_cost_csv_header(os, max_levels);
        for (const CaseResult& r : results) {
            if (r.full)
                write_cost_csv_row(os, r.full->cost, r.H, max_levels);
            if (r.hier)
                write_cost_csv_row(os, r.hier->cost, r.H, max_levels);
        }
    }
    for (const CaseResult& r : results) {
        const std::string suffix = "_H" + std::to_string(r.blocks) + ".csv";
        for (const auto* run : {r.full ? &*r.full : nullptr, r.hier ? &*r.hier : nullptr}) {
            if (!run)
                continue;
            auto os = open_out(cfg.output / ("coeffs_" + std::string(to_string(run->cost.variant)) + suffix));
            os << hash_line(cfg);
            write_coeffs_csv(os, run->blocks);
        }
        auto os = open_out(cfg.output / ("blocks" + suffix));
        os << hash_line(cfg) << "block,bx,by,x,y,continuum,fine,full,hierarchical\n";
        for (int id = 0; id < r.layout.block_count(); ++id) {
            const Index2 b = r.layout.block_index(id);
            const Point2 c = r.layout.block_center(b);
            for (int i = 0; i < r.medium.continua; ++i) {
                os << id << ',' << b.x << ',' << b.y << ',' << format_double(c.x) << ',' << format_double(c.y) << ','
                   << i + 1 << ',';
                if (r.fine_averages.has(id, i))
                    os << format_double(r.fine_averages.at(id, i));
                os << ',';
                if (r.full)
                    os << format_double(r.full->macro.block_value(id, i));
                os << ',';
                if (r.hier)
                    os << format_double(r.hier->macro.block_value(id, i));
                os << '\n';
            }
        }
    }
    return results;
}

void describe(const ExperimentConfig& cfg, std::ostream& os)
{
    validate(cfg);
    os << "config " << cfg.hash_hex() << ": geometry " << to_string(cfg.geometry) << ", epsilon "
       << format_double(cfg.epsilon) << ", eta " << cfg.eta << ", exterior " << to_string(cfg.exterior) << '\n';
    for (std::size_t k = 0; k < cfg.blocks.size(); ++k) {
        const int b = cfg.blocks[k];
        const int cpb = cfg.cells_per_block_for(k);
        const CoarseLayout layout({b, b}, {cpb, cpb}, Rect{}, cfg.layers);
        const int L = cfg.wants(Variant::hierarchical) ? cfg.levels_for(k) : 1;
        const int l = layout.oversample_layers();
        os << "H = 1/" << b << ", h = 1/" << b * cpb << ", fine grid " << b * cpb << "x" << b * cpb << ", l = " << l
           << ", L = " << L << '\n';
        const MacroHierarchy h = build_hierarchy(layout, L == 1 ? 1 : cfg.eta, L);
        std::ostringstream counts;
        for (int n = 1; n <= L; ++n)
            counts << (n > 1 ? " " : "") << "|S_" << n << "|=" << h.S[n - 1].size();
        std::ostringstream ratio;
        ratio.precision(6);
        ratio << cost_model(L, L == 1 ? 1 : cfg.eta, kDims);
        os << "  " << counts.str() << ", predicted ratio " << ratio.str() << '\n';

        // Peak memory: fine reference system plus, per worker, one KKT factorization of the widest
        // oversampled region, plus the stored level-1 parent fields (bounded by the whole domain).
        const double fine_nodes = static_cast<double>(b * cpb + 1) * (b * cpb + 1);
        const int span = cfg.exterior == Exterior::mirror ? 2 * l + 1 : std::min(b, 2 * l + 1);
        const int side = span * cpb + 1;
        const double region_nodes = static_cast<double>(side) * side;
        const int fields = 2 * kFunctionsPerContinuum;
        const double bytes = fine_nodes * 8.0 * 40.0 + region_nodes * 8.0 * 60.0 +
                             (L > 1 ? static_cast<double>(h.S[0].size()) * fine_nodes * fields * 8.0 : 0.0);
        os << "  estimated peak memory " << std::lround(bytes / (1024.0 * 1024.0)) << " MiB per worker\n";
    }
}

void write_error_record(const std::filesystem::path& path, const std::string& stage, const std::string& message,
                        const std::string& config_hash)
{
    nlohmann::json j;
    j["status"] = "error";
    j["stage"] = stage;
    j["message"] = message;
    j["config_hash"] = config_hash;
    std::ofstream os(path);
    os << j.dump(2) << '\n';
}

} // namespace hmch
