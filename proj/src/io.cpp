#include "calabi/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace calabi {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct RawEntry {
    std::string key;
    std::string value;
    int line;
};

using Sections = std::map<std::string, std::vector<RawEntry>>;

Sections tokenize(const std::string& text, const std::string& origin) {
    static const char* known[] = {"lattice", "reference", "initial", "stepper", "output"};
    Sections sections;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ": malformed section header", lineno);
            section = trim(line.substr(1, line.size() - 2));
            if (std::find_if(std::begin(known), std::end(known),
                             [&](const char* s) { return section == s; }) == std::end(known))
                throw ConfigError(origin + ": unknown section [" + section + "]", lineno);
            sections.try_emplace(section);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ": expected key = value", lineno);
        if (section.empty())
            throw ConfigError(origin + ": key outside of any section", lineno);
        sections[section].push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno});
    }
    return sections;
}

double parse_double(const RawEntry& e, const std::string& origin) {
    char* end = nullptr;
    const double v = std::strtod(e.value.c_str(), &end);
    if (end == e.value.c_str() || *end != '\0' || !std::isfinite(v))
        throw ConfigError(origin + ": invalid number for '" + e.key + "'", e.line);
    return v;
}

long parse_long(const RawEntry& e, const std::string& origin) {
    char* end = nullptr;
    const long v = std::strtol(e.value.c_str(), &end, 10);
    if (end == e.value.c_str() || *end != '\0')
        throw ConfigError(origin + ": invalid integer for '" + e.key + "'", e.line);
    return v;
}

std::vector<double> parse_numbers(const std::string& s, const RawEntry& e, const std::string& origin) {
    std::vector<double> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw ConfigError(origin + ": invalid number '" + tok + "' in '" + e.key + "'", e.line);
        out.push_back(v);
    }
    return out;
}

ModeSpec parse_mode(const RawEntry& e, int n, int N, const std::string& origin) {
    // frequencies : amplitude [: phase]
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto colon = e.value.find(':', start);
        if (colon == std::string::npos) {
            parts.push_back(trim(e.value.substr(start)));
            break;
        }
        parts.push_back(trim(e.value.substr(start, colon - start)));
        start = colon + 1;
    }
    if (parts.size() < 2 || parts.size() > 3)
        throw ConfigError(origin + ": mode must be 'k... : amplitude [: phase]'", e.line);

    const std::vector<double> ks = parse_numbers(parts[0], e, origin);
    if (static_cast<int>(ks.size()) != 2 * n)
        throw ConfigError(origin + ": mode needs one frequency per real axis (" + std::to_string(2 * n) + ")",
                          e.line);
    ModeSpec mode;
    for (int a = 0; a < 2 * n; ++a) {
        const double kd = ks[static_cast<std::size_t>(a)];
        const int k = static_cast<int>(std::lround(kd));
        if (kd != k)
            throw ConfigError(origin + ": mode frequencies must be integers", e.line);
        if (k <= -N / 2 || k > N / 2)
            throw ConfigError(origin + ": mode frequency " + std::to_string(k) +
                                  " outside (-N/2, N/2] for N = " + std::to_string(N),
                              e.line);
        mode.k[static_cast<std::size_t>(a)] = k;
    }
    mode.amplitude = parse_double({e.key, parts[1], e.line}, origin);
    if (parts.size() == 3) mode.phase = parse_double({e.key, parts[2], e.line}, origin);
    return mode;
}

void reject_unknown(const Sections& sections, const std::string& section,
                    std::initializer_list<const char*> keys, const std::string& origin) {
    const auto it = sections.find(section);
    if (it == sections.end()) return;
    for (const RawEntry& e : it->second) {
        if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return e.key == k; }) == keys.end())
            throw ConfigError(origin + ": unknown key '" + e.key + "' in [" + section + "]", e.line);
    }
}

const RawEntry* find_entry(const Sections& sections, const std::string& section, const char* key) {
    const auto it = sections.find(section);
    if (it == sections.end()) return nullptr;
    const RawEntry* found = nullptr;
    for (const RawEntry& e : it->second)
        if (e.key == key) found = &e;
    return found;
}

} // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    const Sections sections = tokenize(text, origin);
    RunConfig cfg;

    reject_unknown(sections, "lattice", {"n", "N", "L"}, origin);
    reject_unknown(sections, "reference", {"g0", "psi_mode"}, origin);
    reject_unknown(sections, "initial", {"mode", "snapshot"}, origin);
    reject_unknown(sections, "stepper",
                   {"alpha", "tau0", "tau_min", "tau_max", "t_end", "picard_tol", "picard_max_iters",
                    "convergence_tol", "energy_slack", "max_steps", "dealias"},
                   origin);
    reject_unknown(sections, "output", {"dir", "snapshot_every", "seed"}, origin);

    if (const RawEntry* e = find_entry(sections, "lattice", "n")) {
        cfg.n = static_cast<int>(parse_long(*e, origin));
        if (cfg.n != 1 && cfg.n != 2) throw ConfigError(origin + ": n must be 1 or 2", e->line);
    }
    if (const RawEntry* e = find_entry(sections, "lattice", "N")) {
        cfg.N = static_cast<int>(parse_long(*e, origin));
        if (cfg.N < 8 || (cfg.N & (cfg.N - 1)) != 0)
            throw ConfigError(origin + ": N must be a power of two >= 8", e->line);
    }
    if (const RawEntry* e = find_entry(sections, "lattice", "L")) {
        cfg.L = parse_double(*e, origin);
        if (!(cfg.L > 0.0)) throw ConfigError(origin + ": L must be positive", e->line);
    }

    if (const RawEntry* e = find_entry(sections, "reference", "g0")) {
        const std::vector<double> vals = parse_numbers(e->value, *e, origin);
        if (cfg.n == 1) {
            if (vals.size() != 1)
                throw ConfigError(origin + ": g0 takes a single entry when n = 1", e->line);
            if (!(vals[0] > 0.0)) throw ConfigError(origin + ": g0 must be positive", e->line);
            cfg.g0 = {cplx{vals[0], 0.0}, cplx{0, 0}, cplx{0, 0}, cplx{1, 0}};
        } else {
            if (vals.size() != 4)
                throw ConfigError(origin + ": g0 takes 'a11 a12_re a12_im a22' when n = 2", e->line);
            const cplx offdiag{vals[1], vals[2]};
            cfg.g0 = {cplx{vals[0], 0.0}, offdiag, std::conj(offdiag), cplx{vals[3], 0.0}};
            const double det = vals[0] * vals[3] - std::norm(offdiag);
            if (!(vals[0] > 0.0) || !(det > 0.0))
                throw ConfigError(origin + ": g0 must be positive-definite", e->line);
        }
    }

    if (const auto it = sections.find("reference"); it != sections.end())
        for (const RawEntry& e : it->second)
            if (e.key == "psi_mode") cfg.psi_modes.push_back(parse_mode(e, cfg.n, cfg.N, origin));

    if (const auto it = sections.find("initial"); it != sections.end())
        for (const RawEntry& e : it->second) {
            if (e.key == "mode") cfg.phi0_modes.push_back(parse_mode(e, cfg.n, cfg.N, origin));
            if (e.key == "snapshot") cfg.phi0_snapshot = e.value;
        }
    if (!cfg.phi0_snapshot.empty() && !cfg.phi0_modes.empty())
        throw ConfigError(origin + ": [initial] takes either modes or a snapshot, not both");

    struct DoubleKey {
        const char* key;
        double* target;
        bool positive;
    };
    const DoubleKey dkeys[] = {
        {"alpha", &cfg.alpha, true},        {"tau0", &cfg.tau0, true},
        {"tau_min", &cfg.tau_min, true},    {"tau_max", &cfg.tau_max, false},
        {"t_end", &cfg.t_end, false},       {"picard_tol", &cfg.picard_tol, false},
        {"convergence_tol", &cfg.convergence_tol, true}, {"energy_slack", &cfg.energy_slack, false},
    };
    for (const DoubleKey& dk : dkeys)
        if (const RawEntry* e = find_entry(sections, "stepper", dk.key)) {
            *dk.target = parse_double(*e, origin);
            if (dk.positive && !(*dk.target > 0.0))
                throw ConfigError(origin + ": " + dk.key + " must be positive", e->line);
        }
    if (cfg.alpha >= 1.0) {
        const RawEntry* e = find_entry(sections, "stepper", "alpha");
        throw ConfigError(origin + ": alpha must be in (0, 1)", e ? e->line : 0);
    }
    if (cfg.t_end < 0.0) throw ConfigError(origin + ": t_end must be nonnegative");
    if (const RawEntry* e = find_entry(sections, "stepper", "picard_max_iters")) {
        cfg.picard_max_iters = static_cast<int>(parse_long(*e, origin));
        if (cfg.picard_max_iters < 1)
            throw ConfigError(origin + ": picard_max_iters must be at least 1", e->line);
    }
    if (const RawEntry* e = find_entry(sections, "stepper", "max_steps")) {
        cfg.max_steps = parse_long(*e, origin);
        if (cfg.max_steps < 1) throw ConfigError(origin + ": max_steps must be at least 1", e->line);
    }
    if (const RawEntry* e = find_entry(sections, "stepper", "dealias")) {
        const long v = parse_long(*e, origin);
        if (v != 0 && v != 1) throw ConfigError(origin + ": dealias must be 0 or 1", e->line);
        cfg.dealias = v == 1;
    }

    if (const RawEntry* e = find_entry(sections, "output", "dir")) cfg.output_dir = e->value;
    if (const RawEntry* e = find_entry(sections, "output", "snapshot_every")) {
        cfg.snapshot_every = static_cast<int>(parse_long(*e, origin));
        if (cfg.snapshot_every < 0)
            throw ConfigError(origin + ": snapshot_every must be nonnegative", e->line);
    }
    if (const RawEntry* e = find_entry(sections, "output", "seed"))
        cfg.seed = static_cast<unsigned long>(parse_long(*e, origin));

    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

ScalarField synthesize_modes(const TorusLattice& lat, std::span<const ModeSpec> modes) {
    ScalarField f(lat);
    const int axes = lat.axes();
    std::vector<int> coords(static_cast<std::size_t>(axes));
    for (std::size_t p = 0; p < f.size(); ++p) {
        unflatten(lat, p, coords);
        double v = 0.0;
        for (const ModeSpec& m : modes) {
            double arg = m.phase;
            for (int a = 0; a < axes; ++a)
                arg += 2.0 * M_PI * m.k[static_cast<std::size_t>(a)] * coords[static_cast<std::size_t>(a)] /
                       static_cast<double>(lat.N);
            v += m.amplitude * std::cos(arg);
        }
        f[p] = v;
    }
    return f;
}

FlowSetup make_setup(const RunConfig& config) {
    const TorusLattice lat = TorusLattice::make(config.n, config.N, config.L);
    const ScalarField psi = synthesize_modes(lat, config.psi_modes);
    ReferenceGeometry ref = ReferenceGeometry::make(lat, config.g0, psi);
    BilaplacianSymbol symbol = build_symbol(lat, config.g0);

    ScalarField phi0;
    if (!config.phi0_snapshot.empty()) {
        auto [field, header] = read_snapshot(config.phi0_snapshot);
        if (header.n != config.n || header.N != config.N || header.L != config.L)
            throw ConfigError("snapshot lattice (" + std::to_string(header.n) + ", " +
                              std::to_string(header.N) + ") does not match the config");
        phi0 = std::move(field);
    } else {
        phi0 = synthesize_modes(lat, config.phi0_modes);
    }

    StepControls controls;
    controls.picard_tol = config.picard_tol;
    controls.picard_max_iters = config.picard_max_iters;
    controls.convergence_tol = config.convergence_tol;
    controls.energy_slack = config.energy_slack;
    controls.tau_min = config.tau_min;
    controls.tau_max = config.tau_max;
    controls.max_steps = config.max_steps;
    controls.dealias = config.dealias;

    HolderParams holder = HolderParams::defaults_for(lat);
    holder.alpha = config.alpha;

    return make_flow_setup(std::move(ref), std::move(symbol), std::move(phi0), controls, config.tau0,
                           config.t_end, config.snapshot_every, holder);
}

const char* const kCsvHeader =
    "t,tau,calabi_energy,max_abs_R,rbar,volume,c1_bound,c2_bound,max_riemann,"
    "holder_2a,holder_4a,weighted_norm,picard_iters,picard_last_ratio,phi_mean";

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_csv(const std::string& path, std::span<const DiagnosticsRow> rows) {
    if (rows.empty()) throw std::invalid_argument("write_csv: need at least one row");
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << kCsvHeader << "\n";
    for (const DiagnosticsRow& r : rows) {
        out << fmt17(r.t) << ',' << fmt17(r.tau) << ',' << fmt17(r.calabi_energy) << ','
            << fmt17(r.max_abs_R) << ',' << fmt17(r.rbar) << ',' << fmt17(r.volume) << ','
            << fmt17(r.c1_bound) << ',' << fmt17(r.c2_bound) << ',' << fmt17(r.max_riemann) << ','
            << fmt17(r.holder_2a) << ',' << fmt17(r.holder_4a) << ',' << fmt17(r.weighted_norm) << ','
            << r.picard_iters << ',' << fmt17(r.picard_last_ratio) << ',' << fmt17(r.phi_mean) << "\n";
    }
    if (!out) throw ConfigError("write failed: " + path);
}

std::vector<DiagnosticsRow> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty CSV");
    if (trim(line) != kCsvHeader) throw ConfigError(path + ": unexpected CSV header");

    std::vector<DiagnosticsRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (cells.size() != 15) throw ConfigError(path + ": expected 15 columns", lineno);
        auto num = [&](int i) {
            char* end = nullptr;
            const double v = std::strtod(cells[static_cast<std::size_t>(i)].c_str(), &end);
            if (end == cells[static_cast<std::size_t>(i)].c_str())
                throw ConfigError(path + ": bad number in column " + std::to_string(i + 1), lineno);
            return v;
        };
        DiagnosticsRow r;
        r.t = num(0);
        r.tau = num(1);
        r.calabi_energy = num(2);
        r.max_abs_R = num(3);
        r.rbar = num(4);
        r.volume = num(5);
        r.c1_bound = num(6);
        r.c2_bound = num(7);
        r.max_riemann = num(8);
        r.holder_2a = num(9);
        r.holder_4a = num(10);
        r.weighted_norm = num(11);
        r.picard_iters = static_cast<int>(num(12));
        r.picard_last_ratio = num(13);
        r.phi_mean = num(14);
        rows.push_back(r);
    }
    return rows;
}

void write_snapshot(const std::string& path, const ScalarField& field, const SnapshotHeader& header) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    if (field.size() != field.lat.points())
        throw std::invalid_argument("write_snapshot: field size does not match its lattice");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "magic: " << header.magic << "\n";
    out << "n: " << header.n << "\n";
    out << "N: " << header.N << "\n";
    out << "L: " << fmt17(header.L) << "\n";
    out << "t: " << fmt17(header.t) << "\n";
    out << "field_name: " << header.field_name << "\n";
    out << "endian: " << header.endian << "\n";
    out << "\n";
    out.write(reinterpret_cast<const char*>(field.v.data()),
              static_cast<std::streamsize>(field.v.size() * sizeof(double)));
    if (!out) throw ConfigError("write failed: " + path);
}

std::pair<ScalarField, SnapshotHeader> read_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open: " + path);

    SnapshotHeader h;
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) break;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw ConfigError(path + ": malformed snapshot header line", lineno);
        kv[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
    }
    for (const char* key : {"magic", "n", "N", "L", "t", "field_name", "endian"})
        if (!kv.count(key)) throw ConfigError(path + ": snapshot header missing '" + std::string(key) + "'");

    if (kv["magic"] != "CFGRD1") throw ConfigError(path + ": snapshot magic mismatch");
    if (kv["endian"] != "little") throw ConfigError(path + ": unsupported byte order '" + kv["endian"] + "'");
    h.magic = kv["magic"];
    h.n = std::atoi(kv["n"].c_str());
    h.N = std::atoi(kv["N"].c_str());
    h.L = std::strtod(kv["L"].c_str(), nullptr);
    h.t = std::strtod(kv["t"].c_str(), nullptr);
    h.field_name = kv["field_name"];
    h.endian = kv["endian"];

    const TorusLattice lat = TorusLattice::make(h.n, h.N, h.L); // validates ranges
    ScalarField field(lat);
    in.read(reinterpret_cast<char*>(field.v.data()),
            static_cast<std::streamsize>(field.v.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != field.v.size() * sizeof(double))
        throw ConfigError(path + ": snapshot payload truncated");
    char extra;
    if (in.read(&extra, 1))
        throw ConfigError(path + ": snapshot payload larger than the declared size");
    return {std::move(field), h};
}

} // namespace calabi
