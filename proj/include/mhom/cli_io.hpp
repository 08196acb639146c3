#pragma once

// Run configuration, CSV and manifest I/O, and the subcommand drivers used by
// the mhom executable.

#include "mhom/gain_model.hpp"
#include "mhom/hom_trace.hpp"
#include "mhom/mc_detect.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mhom {

struct RunConfig {
  CrystalParams crystal;
  std::optional<double> walkoff;  ///< explicit D; otherwise calibrated
  double target_fwhm_nm = 1.3;
  double calibration_gain = 7.5;
  PumpParams pump;
  DetectionModel detection;

  double tau_min = -30.0;
  double tau_max = 30.0;
  double tau_step = 0.01;
  int omega_nodes = 0;      ///< 0: automatic
  double omega_max = 0.0;   ///< 0: automatic

  LatticeSpec lattice{};    ///< zero fields fall back to default_lattice

  std::vector<double> sweep_gains{5.5, 5.7, 5.9, 6.1, 6.3, 6.5, 6.7, 6.9, 7.1, 7.3, 7.5};
  double sweep_tau_half_range = 4.0;
  double sweep_tau_step = 0.005;

  std::vector<double> mc_taus{0.0, 0.14, 0.3, 0.6, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 40.0};

  std::string fit_data_file;
  double fit_reference_power_mw = 55.0;

  std::uint64_t seed = 1;
  unsigned threads = 0;

  void validate() const;
};

/// INI file with sections [crystal] [pump] [detection] [grid] [lattice]
/// [sweep] [mc] [fit] [run], or a manifest JSON written by a previous run.
/// Unknown sections and keys are rejected. A missing path yields defaults.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
double parse_double(std::string_view text, std::string_view what);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

/// Reads a power_mw,intensity file.
void read_gain_data(const std::filesystem::path& path, std::vector<double>& powers,
                    std::vector<double>& intensities);

std::string sha256_file(const std::filesystem::path& path);

enum class Command { trace, g2, sweep_gain, fit_gain, calibrate, mc };

std::optional<Command> parse_command(std::string_view name);
std::string_view command_name(Command cmd);

/// Runs one subcommand, writes its CSV and manifest.json into out_dir, and
/// returns the manifest.
nlohmann::json run_command(Command cmd, const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Maps exceptions to the documented exit codes: 2 validation, 3 numerical,
/// 4 I/O, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace mhom
