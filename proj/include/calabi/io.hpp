#pragma once

#include "calabi/flow.hpp"

#include <array>
#include <string>

namespace calabi {

/// Configuration or file-format failure; line is 0 when not line-specific.
struct ConfigError : std::runtime_error {
    int line = 0;
    ConfigError(const std::string& msg, int line_ = 0) : std::runtime_error(msg), line(line_) {}
};

/** One Fourier mode of a potential: amplitude * cos(2 pi k.x / L + phase).
 *  k has one integer per real axis (2n entries used). */
struct ModeSpec {
    std::array<int, 4> k{0, 0, 0, 0};
    double amplitude = 0.0;
    double phase = 0.0;
};

/** Parsed run configuration; see the config grammar in the README.
 *  Sections: [lattice], [reference], [initial], [stepper], [output]. */
struct RunConfig {
    int n = 1;
    int N = 64;
    double L = 1.0;
    std::array<cplx, 4> g0{cplx{1, 0}, cplx{0, 0}, cplx{0, 0}, cplx{1, 0}};
    std::vector<ModeSpec> psi_modes;
    std::vector<ModeSpec> phi0_modes;
    std::string phi0_snapshot; // alternative to phi0_modes

    double alpha = 0.5;
    double tau0 = 1e-3;
    double tau_min = 1e-12;
    double tau_max = 0.0; // 0: automatic (reciprocal of the smallest nonzero eigenvalue)
    double t_end = 1.0;
    double picard_tol = 1e-10;
    int picard_max_iters = 400;
    double convergence_tol = 1e-8;
    double energy_slack = 1e-10;
    long max_steps = 100000;
    bool dealias = false;

    std::string output_dir = "out";
    int snapshot_every = 10;
    unsigned long seed = 12345;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

/// Sum of the configured modes on the lattice.
ScalarField synthesize_modes(const TorusLattice& lat, std::span<const ModeSpec> modes);

/// Lattice, geometry, symbol, initial data and controls from a config.
FlowSetup make_setup(const RunConfig& config);

/// Diagnostics CSV: fixed header, one row per accepted step, doubles with
/// 17 significant digits (value-exact round trip).
void write_csv(const std::string& path, std::span<const DiagnosticsRow> rows);
std::vector<DiagnosticsRow> read_csv(const std::string& path);
extern const char* const kCsvHeader;

struct SnapshotHeader {
    std::string magic = "CFGRD1";
    int n = 1;
    int N = 8;
    double L = 1.0;
    double t = 0.0;
    std::string field_name = "phi";
    std::string endian = "little";
};

/// ASCII "key: value" header terminated by a blank line, then N^(2n)
/// little-endian IEEE doubles row-major in axis order (x^1, y^1, ...).
void write_snapshot(const std::string& path, const ScalarField& field, const SnapshotHeader& header);
std::pair<ScalarField, SnapshotHeader> read_snapshot(const std::string& path);

} // namespace calabi
