#include "mhom/cli_io.hpp"

#include "mhom/errors.hpp"
#include "mhom/numerics.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mhom {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
  crystal.validate();
  if (walkoff && !(*walkoff >= 0)) throw ValidationError("walkoff_ps_per_mm must be non-negative");
  if (!walkoff && !(target_fwhm_nm > 0)) throw ValidationError("target_fwhm_nm must be positive");
  pump.validate();
  detection.validate();
  if (!(tau_step > 0)) throw ValidationError("tau_step must be positive");
  if (!(tau_max >= tau_min)) throw ValidationError("tau_max must not be below tau_min");
  if (omega_nodes < 0 || omega_max < 0) throw ValidationError("grid overrides must be non-negative");
  if (sweep_gains.empty()) throw ValidationError("sweep needs at least one gain");
  if (mc_taus.empty()) throw ValidationError("mc needs at least one delay");
}

// ---------------------------------------------------------------- numbers

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ValidationError("cannot parse '" + std::string(text) + "' as a number for " + std::string(what));
  if (!std::isfinite(value)) throw ValidationError(std::string(what) + " must be finite");
  return value;
}

namespace {

long long parse_integer(std::string_view text, std::string_view what) {
  const double v = parse_double(text, what);
  if (!std::isfinite(v) || v != std::floor(v) || std::abs(v) > 9e15)
    throw ValidationError(std::string(what) + " must be an integer");
  return static_cast<long long>(v);
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  text = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ValidationError(std::string(what) + " must be an unsigned 64-bit integer");
  return v;
}

std::vector<double> parse_list(std::string_view text, std::string_view what) {
  std::vector<double> out;
  for (auto item : split(text, ',')) out.push_back(parse_double(item, what));
  return out;
}

std::string join_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_double(v[i]);
  }
  return s;
}

// ---------------------------------------------------------------- config

// Every accepted key with its setter; text form is shared by INI and JSON.
using Setter = void (*)(RunConfig&, std::string_view);
using Getter = std::string (*)(const RunConfig&);
struct KeySpec {
  Setter set;
  Getter get;  // nullptr: omitted when unset
};

const std::map<std::string, std::map<std::string, KeySpec>>& schema() {
  static const std::map<std::string, std::map<std::string, KeySpec>> s = {
      {"crystal",
       {{"length_mm", {[](RunConfig& c, std::string_view t) { c.crystal.length_mm = parse_double(t, "crystal.length_mm"); },
                       [](const RunConfig& c) { return format_double(c.crystal.length_mm); }}},
        {"walkoff_ps_per_mm", {[](RunConfig& c, std::string_view t) { c.walkoff = parse_double(t, "crystal.walkoff_ps_per_mm"); },
                               nullptr}},
        {"target_fwhm_nm", {[](RunConfig& c, std::string_view t) { c.target_fwhm_nm = parse_double(t, "crystal.target_fwhm_nm"); },
                            [](const RunConfig& c) { return format_double(c.target_fwhm_nm); }}},
        {"calibration_gain", {[](RunConfig& c, std::string_view t) { c.calibration_gain = parse_double(t, "crystal.calibration_gain"); },
                              [](const RunConfig& c) { return format_double(c.calibration_gain); }}}}},
      {"pump",
       {{"peak_gain", {[](RunConfig& c, std::string_view t) { c.pump.peak_gain = parse_double(t, "pump.peak_gain"); },
                       [](const RunConfig& c) { return format_double(c.pump.peak_gain); }}},
        {"duration_ps", {[](RunConfig& c, std::string_view t) { c.pump.duration_ps = parse_double(t, "pump.duration_ps"); },
                         [](const RunConfig& c) { return format_double(c.pump.duration_ps); }}},
        {"lambda_deg_nm", {[](RunConfig& c, std::string_view t) { c.pump.lambda_deg_nm = parse_double(t, "pump.lambda_deg_nm"); },
                           [](const RunConfig& c) { return format_double(c.pump.lambda_deg_nm); }}},
        {"lambda_pump_nm", {[](RunConfig& c, std::string_view t) { c.pump.lambda_pump_nm = parse_double(t, "pump.lambda_pump_nm"); },
                            [](const RunConfig& c) { return format_double(c.pump.lambda_pump_nm); }}}}},
      {"detection",
       {{"eta", {[](RunConfig& c, std::string_view t) { c.detection.eta = parse_double(t, "detection.eta"); },
                 [](const RunConfig& c) { return format_double(c.detection.eta); }}},
        {"m_spatial", {[](RunConfig& c, std::string_view t) { c.detection.m_spatial = static_cast<int>(parse_integer(t, "detection.m_spatial")); },
                       [](const RunConfig& c) { return std::to_string(c.detection.m_spatial); }}},
        {"noise_var", {[](RunConfig& c, std::string_view t) { c.detection.noise_var = parse_double(t, "detection.noise_var"); },
                       [](const RunConfig& c) { return format_double(c.detection.noise_var); }}},
        {"n_pulses", {[](RunConfig& c, std::string_view t) { c.detection.n_pulses = static_cast<int>(parse_integer(t, "detection.n_pulses")); },
                      [](const RunConfig& c) { return std::to_string(c.detection.n_pulses); }}}}},
      {"grid",
       {{"tau_min", {[](RunConfig& c, std::string_view t) { c.tau_min = parse_double(t, "grid.tau_min"); },
                     [](const RunConfig& c) { return format_double(c.tau_min); }}},
        {"tau_max", {[](RunConfig& c, std::string_view t) { c.tau_max = parse_double(t, "grid.tau_max"); },
                     [](const RunConfig& c) { return format_double(c.tau_max); }}},
        {"tau_step", {[](RunConfig& c, std::string_view t) { c.tau_step = parse_double(t, "grid.tau_step"); },
                      [](const RunConfig& c) { return format_double(c.tau_step); }}},
        {"omega_nodes", {[](RunConfig& c, std::string_view t) { c.omega_nodes = static_cast<int>(parse_integer(t, "grid.omega_nodes")); },
                         [](const RunConfig& c) { return std::to_string(c.omega_nodes); }}},
        {"omega_max", {[](RunConfig& c, std::string_view t) { c.omega_max = parse_double(t, "grid.omega_max"); },
                       [](const RunConfig& c) { return format_double(c.omega_max); }}}}},
      {"lattice",
       {{"n_time_slices", {[](RunConfig& c, std::string_view t) { c.lattice.n_time_slices = static_cast<int>(parse_integer(t, "lattice.n_time_slices")); },
                           [](const RunConfig& c) { return std::to_string(c.lattice.n_time_slices); }}},
        {"n_freq_bins", {[](RunConfig& c, std::string_view t) { c.lattice.n_freq_bins = static_cast<int>(parse_integer(t, "lattice.n_freq_bins")); },
                         [](const RunConfig& c) { return std::to_string(c.lattice.n_freq_bins); }}},
        {"slice_duration_ps", {[](RunConfig& c, std::string_view t) { c.lattice.slice_duration_ps = parse_double(t, "lattice.slice_duration_ps"); },
                               [](const RunConfig& c) { return format_double(c.lattice.slice_duration_ps); }}},
        {"bin_width", {[](RunConfig& c, std::string_view t) { c.lattice.bin_width = parse_double(t, "lattice.bin_width"); },
                       [](const RunConfig& c) { return format_double(c.lattice.bin_width); }}}}},
      {"sweep",
       {{"gains", {[](RunConfig& c, std::string_view t) { c.sweep_gains = parse_list(t, "sweep.gains"); },
                   [](const RunConfig& c) { return join_list(c.sweep_gains); }}},
        {"tau_half_range", {[](RunConfig& c, std::string_view t) { c.sweep_tau_half_range = parse_double(t, "sweep.tau_half_range"); },
                            [](const RunConfig& c) { return format_double(c.sweep_tau_half_range); }}},
        {"tau_step", {[](RunConfig& c, std::string_view t) { c.sweep_tau_step = parse_double(t, "sweep.tau_step"); },
                      [](const RunConfig& c) { return format_double(c.sweep_tau_step); }}}}},
      {"mc",
       {{"taus", {[](RunConfig& c, std::string_view t) { c.mc_taus = parse_list(t, "mc.taus"); },
                  [](const RunConfig& c) { return join_list(c.mc_taus); }}}}},
      {"fit",
       {{"data_file", {[](RunConfig& c, std::string_view t) { c.fit_data_file = std::string(t); },
                       [](const RunConfig& c) { return c.fit_data_file; }}},
        {"reference_power_mw", {[](RunConfig& c, std::string_view t) { c.fit_reference_power_mw = parse_double(t, "fit.reference_power_mw"); },
                                [](const RunConfig& c) { return format_double(c.fit_reference_power_mw); }}}}},
      {"run",
       {{"seed", {[](RunConfig& c, std::string_view t) { c.seed = parse_u64(t, "run.seed"); },
                  [](const RunConfig& c) { return std::to_string(c.seed); }}},
        {"threads", {[](RunConfig& c, std::string_view t) { c.threads = static_cast<unsigned>(parse_u64(t, "run.threads")); },
                     [](const RunConfig& c) { return std::to_string(c.threads); }}}}},
  };
  return s;
}

void apply(RunConfig& cfg, const std::string& section, const std::string& key, std::string_view value) {
  const auto& s = schema();
  const auto sec = s.find(section);
  if (sec == s.end()) throw ValidationError("unknown config section [" + section + "]");
  const auto k = sec->second.find(key);
  if (k == sec->second.end()) throw ValidationError("unknown config key " + section + "." + key);
  k->second.set(cfg, value);
}

}  // namespace

json config_to_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [section, keys] : schema()) {
    json sec = json::object();
    for (const auto& [key, spec] : keys)
      if (spec.get) sec[key] = spec.get(cfg);
    j[section] = sec;
  }
  if (cfg.walkoff) j["crystal"]["walkoff_ps_per_mm"] = format_double(*cfg.walkoff);
  return j;
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config JSON must be an object");
  const json& body = j.contains("config") ? j.at("config") : j;
  if (!body.is_object()) throw ValidationError("config JSON must be an object");
  RunConfig cfg;
  for (const auto& [section, keys] : body.items()) {
    if (!keys.is_object()) throw ValidationError("config section " + section + " must be an object");
    for (const auto& [key, value] : keys.items()) {
      std::string text;
      if (value.is_string()) text = value.get<std::string>();
      else if (value.is_number()) text = value.dump();
      else throw ValidationError("config value " + section + "." + key + " must be a string or number");
      apply(cfg, section, key, text);
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  if (path.extension() == ".json") {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError("malformed JSON config: " + std::string(e.what()));
    }
    RunConfig cfg = config_from_json(j);
    return cfg;
  }
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("malformed config: " + std::string(e.what()));
  }
  RunConfig cfg;
  for (const auto& [section, node] : tree) {
    if (node.empty() && !node.data().empty())
      throw ValidationError("config key '" + section + "' is outside any section");
    for (const auto& [key, leaf] : node) apply(cfg, section, key, leaf.data());
  }
  if (!cfg.fit_data_file.empty() && fs::path(cfg.fit_data_file).is_relative())
    cfg.fit_data_file = fs::absolute(path.parent_path() / cfg.fit_data_file).lexically_normal().string();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- CSV

void write_csv(const fs::path& path, const CsvTable& table) {
  for (const auto& col : table.columns)
    if (col.size() != table.columns.front().size())
      throw ValidationError("CSV columns have different lengths");
  if (table.columns.size() != table.header.size())
    throw ValidationError("CSV header does not match column count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
  out << '\n';
  const std::size_t rows = table.columns.empty() ? 0 : table.columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c)
      out << (c ? "," : "") << format_double(table.columns[c][r]);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": missing header row");
  for (auto h : split(line, ',')) t.header.emplace_back(h);
  t.columns.resize(t.header.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != t.header.size())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " fields");
    for (std::size_t c = 0; c < fields.size(); ++c)
      t.columns[c].push_back(parse_double(fields[c], path.string() + ":" + std::to_string(line_no)));
  }
  if (in.bad()) throw IoError("read failed for " + path.string());
  return t;
}

void read_gain_data(const fs::path& path, std::vector<double>& powers,
                    std::vector<double>& intensities) {
  const CsvTable t = read_csv(path);
  if (t.header != std::vector<std::string>{"power_mw", "intensity"})
    throw ValidationError(path.string() + ": header must be 'power_mw,intensity'");
  powers = t.columns[0];
  intensities = t.columns[1];
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("SHA-256 initialisation failed");
  }
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// ---------------------------------------------------------------- commands

std::optional<Command> parse_command(std::string_view name) {
  static const std::map<std::string_view, Command> names = {
      {"trace", Command::trace},         {"g2", Command::g2},
      {"sweep-gain", Command::sweep_gain}, {"fit-gain", Command::fit_gain},
      {"calibrate", Command::calibrate}, {"mc", Command::mc}};
  const auto it = names.find(name);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

std::string_view command_name(Command cmd) {
  switch (cmd) {
    case Command::trace: return "trace";
    case Command::g2: return "g2";
    case Command::sweep_gain: return "sweep-gain";
    case Command::fit_gain: return "fit-gain";
    case Command::calibrate: return "calibrate";
    case Command::mc: return "mc";
  }
  return "";
}

namespace {

json num(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

struct Context {
  RunConfig cfg;
  fs::path out_dir;
  json manifest;
  CrystalParams crystal;

  void resolve_crystal() {
    crystal = cfg.crystal;
    if (cfg.walkoff) {
      crystal.walkoff_ps_per_mm = *cfg.walkoff;
      manifest["derived"]["walkoff_source"] = "config";
    } else {
      PumpParams ref = cfg.pump;
      ref.peak_gain = cfg.calibration_gain;
      crystal = calibrate_walkoff(cfg.target_fwhm_nm, ref, cfg.crystal.length_mm);
      manifest["derived"]["walkoff_source"] = "calibrated";
    }
    manifest["derived"]["walkoff_ps_per_mm"] = crystal.walkoff_ps_per_mm;
    cfg.walkoff = crystal.walkoff_ps_per_mm;
  }

  SpectralGrid spectral_grid(double tau_abs_max) const {
    SpectralGrid grid;
    if (cfg.omega_max > 0) {
      const double need = 8.0 * cfg.omega_max * tau_abs_max / 3.141592653589793;
      const int nodes = cfg.omega_nodes > 0 ? cfg.omega_nodes
                                            : static_cast<int>(std::max(2048.0, std::ceil(need)));
      grid = make_uniform_grid(cfg.omega_max, nodes);
    } else {
      grid = make_spectral_grid(crystal, cfg.pump, tau_abs_max,
                                cfg.omega_nodes > 0 ? cfg.omega_nodes : 2048);
    }
    return grid;
  }

  Eigen::VectorXd tau_grid() const { return make_tau_grid(cfg.tau_min, cfg.tau_max, cfg.tau_step); }

  void emit(const std::string& name, const CsvTable& table) {
    const fs::path p = out_dir / name;
    write_csv(p, table);
    manifest["outputs"].push_back({{"file", name},
                                   {"rows", table.columns.empty() ? 0 : table.columns[0].size()},
                                   {"sha256", sha256_file(p)}});
  }
};

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

template <typename F>
json try_width(F&& f) {
  try {
    return num(f());
  } catch (const ValidationError&) {
    return nullptr;
  } catch (const NumericalError&) {
    return nullptr;
  }
}

void cmd_trace(Context& ctx) {
  ctx.resolve_crystal();
  const Eigen::VectorXd tau = ctx.tau_grid();
  const SpectralGrid grid = ctx.spectral_grid(tau.cwiseAbs().maxCoeff());
  const NrfPair tr = nrf_and_pedestal(tau, ctx.crystal, ctx.cfg.pump, grid);
  const Trace det = detected_trace(tr.nrf, ctx.cfg.detection);
  ctx.manifest["derived"]["omega_max"] = grid.omega_max();
  ctx.manifest["derived"]["omega_nodes"] = grid.size();
  ctx.emit("trace.csv", {{"tau_ps", "nrf_ideal", "nrf_pedestal", "nrf_detected"},
                         {to_std(tau), to_std(tr.nrf.value), to_std(tr.pedestal.value), to_std(det.value)}});
  json& s = ctx.manifest["summary"];
  s["visibility"] = visibility(det);
  s["visibility_ideal"] = visibility(tr.nrf);
  s["fwhm_narrow_ps"] = try_width([&] { return fwhm_narrow(tr.nrf, tr.pedestal); });
  s["fwhm_pedestal_ps"] = try_width([&] { return fwhm_pedestal(tr.pedestal); });
  s["m_long"] = try_width([&] { return mode_count_long(tr.nrf, tr.pedestal); });
  s["spectral_fwhm_nm"] = try_width([&] { return spectral_fwhm_nm(ctx.crystal, ctx.cfg.pump); });
}

void cmd_g2(Context& ctx) {
  ctx.resolve_crystal();
  const Eigen::VectorXd tau = ctx.tau_grid();
  const SpectralGrid grid = ctx.spectral_grid(tau.cwiseAbs().maxCoeff());
  const Trace g2 = g2_trace(tau, ctx.crystal, ctx.cfg.pump, grid, ctx.cfg.detection);
  const double n_eff = effective_photons_per_mode(ctx.crystal, ctx.cfg.pump, grid);
  ctx.manifest["derived"]["omega_max"] = grid.omega_max();
  ctx.manifest["derived"]["omega_nodes"] = grid.size();
  ctx.manifest["derived"]["n_eff"] = n_eff;
  ctx.emit("g2.csv", {{"tau_ps", "g2"}, {to_std(tau), to_std(g2.value)}});
  const double edge = 0.5 * (g2.value(0) + g2.value(g2.value.size() - 1));
  json& s = ctx.manifest["summary"];
  s["dip_visibility"] = visibility(g2);
  s["g2_min"] = g2.value.minCoeff();
  s["g2_edge"] = edge;
  s["mode_count_g2"] = try_width([&] { return mode_count_g2(edge, n_eff); });
}

void cmd_sweep_gain(Context& ctx) {
  ctx.resolve_crystal();
  FwhmSweepOptions opts;
  opts.tau_half_range = ctx.cfg.sweep_tau_half_range;
  opts.tau_step = ctx.cfg.sweep_tau_step;
  if (ctx.cfg.omega_nodes > 0) opts.min_nodes = ctx.cfg.omega_nodes;
  const auto rows = fwhm_vs_gain(ctx.cfg.sweep_gains, ctx.crystal, ctx.cfg.pump, opts);
  CsvTable t{{"g", "fwhm_ps"}, {{}, {}}};
  for (const auto& r : rows) {
    t.columns[0].push_back(r.gain);
    t.columns[1].push_back(r.fwhm_ps);
  }
  ctx.emit("sweep_gain.csv", t);
  auto find = [&](double g) -> const FwhmSweepRow* {
    for (const auto& r : rows)
      if (std::abs(r.gain - g) < 1e-12) return &r;
    return nullptr;
  };
  json& s = ctx.manifest["summary"];
  const FwhmSweepRow* lo = find(5.5);
  const FwhmSweepRow* hi = find(7.5);
  if (lo && hi) s["fwhm_ratio_7p5_over_5p5"] = hi->fwhm_ps / lo->fwhm_ps;
  s["fwhm_ratio_last_over_first"] = rows.back().fwhm_ps / rows.front().fwhm_ps;
  // Monotonicity over gains inside [5.5, 7.5], taken in increasing order.
  std::vector<FwhmSweepRow> inside;
  for (const auto& r : rows)
    if (r.gain >= 5.5 - 1e-12 && r.gain <= 7.5 + 1e-12) inside.push_back(r);
  std::sort(inside.begin(), inside.end(), [](const auto& a, const auto& b) { return a.gain < b.gain; });
  bool monotone = true;
  for (std::size_t i = 1; i < inside.size(); ++i)
    if (inside[i].fwhm_ps > inside[i - 1].fwhm_ps) monotone = false;
  s["monotone_nonincreasing"] = monotone;
}

void cmd_fit_gain(Context& ctx) {
  if (ctx.cfg.fit_data_file.empty()) throw ValidationError("fit-gain needs [fit] data_file");
  const fs::path data = ctx.cfg.fit_data_file;
  std::vector<double> powers, intensities;
  read_gain_data(data, powers, intensities);
  ctx.manifest["inputs"].push_back({{"file", data.string()}, {"sha256", sha256_file(data)}});
  const GainCurveFit fit = fit_gain_curve(powers, intensities);
  CsvTable resid{{"power_mw", "intensity", "model", "residual"}, {powers, intensities, {}, {}}};
  for (std::size_t i = 0; i < powers.size(); ++i) {
    const double r = fit.residuals(static_cast<Eigen::Index>(i));
    resid.columns[2].push_back(intensities[i] + r);
    resid.columns[3].push_back(r);
  }
  ctx.emit("fit_params.csv", {{"gain_per_sqrt_mw", "scale", "residual_norm"},
                              {{fit.gain_per_sqrt_mw}, {fit.scale}, {fit.residual_norm}}});
  ctx.emit("fit_residuals.csv", resid);
  json& s = ctx.manifest["summary"];
  s["gain_per_sqrt_mw"] = fit.gain_per_sqrt_mw;
  s["scale"] = fit.scale;
  s["residual_norm"] = fit.residual_norm;
  s["iterations"] = fit.iterations;
  s["gain_at_reference_power"] = fit.gain_per_sqrt_mw * std::sqrt(ctx.cfg.fit_reference_power_mw);
}

void cmd_calibrate(Context& ctx) {
  PumpParams ref = ctx.cfg.pump;
  ref.peak_gain = ctx.cfg.calibration_gain;
  const CrystalParams crystal = calibrate_walkoff(ctx.cfg.target_fwhm_nm, ref, ctx.cfg.crystal.length_mm);
  const double achieved = spectral_fwhm_nm(crystal, ref);
  ctx.emit("calibration.csv", {{"target_fwhm_nm", "peak_gain", "walkoff_ps_per_mm", "achieved_fwhm_nm"},
                               {{ctx.cfg.target_fwhm_nm}, {ref.peak_gain}, {crystal.walkoff_ps_per_mm}, {achieved}}});
  json& s = ctx.manifest["summary"];
  s["walkoff_ps_per_mm"] = crystal.walkoff_ps_per_mm;
  s["achieved_fwhm_nm"] = achieved;
  s["spectral_cutoff_rad_per_ps"] = spectral_cutoff(crystal, ref);
}

void cmd_mc(Context& ctx) {
  ctx.resolve_crystal();
  LatticeSpec lat = ctx.cfg.lattice;
  const bool any = lat.n_time_slices || lat.n_freq_bins || lat.slice_duration_ps > 0 || lat.bin_width > 0;
  if (!any) {
    lat = default_lattice(ctx.crystal, ctx.cfg.pump);
  } else if (!(lat.n_time_slices && lat.n_freq_bins && lat.slice_duration_ps > 0 && lat.bin_width > 0)) {
    throw ValidationError("[lattice] needs all four keys or none");
  }
  lat.validate(ctx.cfg.pump);
  ctx.cfg.lattice = lat;
  Eigen::VectorXd tau = Eigen::Map<const Eigen::VectorXd>(ctx.cfg.mc_taus.data(),
                                                           static_cast<Eigen::Index>(ctx.cfg.mc_taus.size()));
  const auto stats = dip_scan(ctx.crystal, ctx.cfg.pump, ctx.cfg.detection, lat, tau, ctx.cfg.seed);
  CsvTable t{{"tau_ps", "nrf_hat", "se_nrf", "g2_hat", "se_g2"}, {{}, {}, {}, {}, {}}};
  json points = json::array();
  for (const auto& st : stats) {
    t.columns[0].push_back(st.tau);
    t.columns[1].push_back(st.nrf_hat);
    t.columns[2].push_back(st.se_nrf);
    t.columns[3].push_back(st.g2_hat);
    t.columns[4].push_back(st.se_g2);
    const LatticeExpectation e = lattice_expectation(ctx.crystal, ctx.cfg.pump, ctx.cfg.detection, lat, st.tau);
    points.push_back({{"tau_ps", st.tau},
                      {"mean_s1", st.mean_s1},
                      {"mean_s2", st.mean_s2},
                      {"degenerate", st.degenerate},
                      {"lattice_expectation_nrf", e.nrf},
                      {"lattice_expectation_g2", e.g2}});
  }
  ctx.emit("mc.csv", t);
  ctx.manifest["derived"]["mean_photons_per_cell"] = mean_photons_per_cell(ctx.crystal, ctx.cfg.pump, lat);
  ctx.manifest["derived"]["modes_per_detector"] = stats.front().modes_per_detector;
  ctx.manifest["summary"]["points"] = points;
}

}  // namespace

json run_command(Command cmd, const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  set_thread_limit(cfg.threads);

  Context ctx{cfg, out_dir, json::object(), cfg.crystal};
  ctx.manifest["tool"] = "mhom";
  ctx.manifest["command"] = std::string(command_name(cmd));
  ctx.manifest["derived"] = json::object();
  ctx.manifest["summary"] = json::object();
  ctx.manifest["outputs"] = json::array();
  ctx.manifest["inputs"] = json::array();

  switch (cmd) {
    case Command::trace: cmd_trace(ctx); break;
    case Command::g2: cmd_g2(ctx); break;
    case Command::sweep_gain: cmd_sweep_gain(ctx); break;
    case Command::fit_gain: cmd_fit_gain(ctx); break;
    case Command::calibrate: cmd_calibrate(ctx); break;
    case Command::mc: cmd_mc(ctx); break;
  }
  ctx.manifest["config"] = config_to_json(ctx.cfg);

  const fs::path mpath = out_dir / "manifest.json";
  std::ofstream out(mpath);
  if (!out) throw IoError("cannot write " + mpath.string());
  out << ctx.manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + mpath.string());
  return ctx.manifest;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  return 1;
}

}  // namespace mhom
