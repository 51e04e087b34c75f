#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mim/errors.hpp"
#include "mim/geometry.hpp"
#include "mim/membrane.hpp"
#include "mim/perturbation.hpp"
#include "mim/spectra.hpp"
#include "mim/version.hpp"

namespace mim {

// Every number in a config or raster file carries its unit; these are the
// spellings the tool understands, with their factors to SI (or to the
// dimensionless value as written).
inline const std::map<std::string, double>& unit_factors() {
  static const std::map<std::string, double> table{
      {"m", 1.0},     {"mm", 1e-3},  {"um", 1e-6},  {"nm", 1e-9},
      {"rad", 1.0},   {"mrad", 1e-3},
      {"Hz", 1.0},    {"kHz", 1e3},  {"MHz", 1e6},  {"GHz", 1e9},
      {"frac", 1.0},  {"steps", 1.0}, {"1", 1.0}};
  return table;
}

// 17 significant digits guarantee binary → text → binary round trips
inline std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// run configuration

struct SweepGrid {
  double start = 0.0;
  double stop = 0.0;
  std::size_t points = 0;

  std::vector<double> grid() const {
    if (points < 2) throw config_error("sweep grids need at least two points");
    if (!(stop > start)) throw config_error("sweep grids must increase: stop > start");
    return linspace(start, stop, points);
  }
};

struct RunConfig {
  // geometry, SI
  double length = 6.7e-2;
  double mirror_roc = 5e-2;
  double wavelength = 1.064e-6;
  std::optional<double> declared_waist;

  MembraneConfig membrane;  // position/thickness/tilts in SI

  SweepGrid position_sweep{0.0, 340e-6, 3001};      // membrane offset for bands/crossing
  SweepGrid lens_sweep{0.0, 500e-6, 26};            // lens centers for gapmap
  std::optional<SweepGrid> tilt_sweep;              // gapmap tilt axis [rad]
  std::optional<SweepGrid> detuning_sweep;          // laser detuning axis [Hz]

  std::vector<int> manifolds{0, 2};
  std::vector<ModeIndex> explicit_modes;

  std::string method = "analytic";  // analytic | numeric | both
  std::string fit_kind;             // hyperbola | band_phase (fit subcommand)
  std::string data_path;            // raster input for fit / calibrate

  CavityGeometry geometry() const {
    CavityGeometry g(length, mirror_roc, wavelength);
    if (declared_waist &&
        std::abs(*declared_waist - g.waist) > 1e-6 * g.waist)
      throw config_error(
          "geometry.waist inconsistent with the wavelength and Rayleigh range "
          "(paraxial consistency)");
    return g;
  }

  std::vector<ModeIndex> mode_set(const CavityGeometry& geom) const {
    if (!explicit_modes.empty()) return explicit_modes;
    std::vector<ModeIndex> out;
    for (int order : manifolds)
      for (const ModeIndex& m : manifold_modes(geom, order)) out.push_back(m);
    if (out.empty()) throw config_error("mode_set selects no modes");
    return out;
  }

  std::vector<Method> methods() const {
    if (method == "analytic") return {Method::analytic};
    if (method == "numeric") return {Method::numeric};
    if (method == "both") return {Method::analytic, Method::numeric};
    throw config_error("method must be analytic, numeric, or both");
  }
};

namespace detail {

// Pull `name_<unit>` out of a JSON object, converting by the unit factor.
// Exactly one unit variant may appear; the bare name is rejected so every
// number in the file stays self-describing.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& obj, std::string path)
      : obj_(obj), path_(std::move(path)) {
    if (!obj.is_object())
      throw config_error("config key '" + path_ + "' must be an object");
  }

  std::optional<double> quantity(const std::string& name,
                                 const std::vector<std::string>& units) {
    std::optional<double> out;
    for (const auto& u : units) {
      const std::string key = name + "_" + u;
      if (!obj_.contains(key)) continue;
      if (out)
        throw config_error("config key '" + path_ + "." + name +
                           "' given in more than one unit");
      if (!obj_[key].is_number())
        throw config_error("config key '" + path_ + "." + key + "' must be a number");
      out = obj_[key].get<double>() * unit_factors().at(u);
      consumed_.push_back(key);
    }
    if (obj_.contains(name))
      throw config_error("config key '" + path_ + "." + name +
                         "' needs an explicit unit suffix");
    return out;
  }

  std::optional<double> number(const std::string& key) {
    if (!obj_.contains(key)) return std::nullopt;
    if (!obj_[key].is_number())
      throw config_error("config key '" + path_ + "." + key + "' must be a number");
    consumed_.push_back(key);
    return obj_[key].get<double>();
  }

  std::optional<bool> boolean(const std::string& key) {
    if (!obj_.contains(key)) return std::nullopt;
    if (!obj_[key].is_boolean())
      throw config_error("config key '" + path_ + "." + key + "' must be a boolean");
    consumed_.push_back(key);
    return obj_[key].get<bool>();
  }

  std::optional<std::string> text(const std::string& key) {
    if (!obj_.contains(key)) return std::nullopt;
    if (!obj_[key].is_string())
      throw config_error("config key '" + path_ + "." + key + "' must be a string");
    consumed_.push_back(key);
    return obj_[key].get<std::string>();
  }

  const nlohmann::json* child(const std::string& key) {
    if (!obj_.contains(key)) return nullptr;
    consumed_.push_back(key);
    return &obj_[key];
  }

  // call last: anything not consumed is an unknown key
  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      (void)value;
      bool known = false;
      for (const auto& c : consumed_)
        if (c == key) known = true;
      if (!known)
        throw config_error("unknown config key '" + path_ + "." + key + "'");
    }
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::vector<std::string> consumed_;
};

inline SweepGrid parse_sweep(const nlohmann::json& j, const std::string& path,
                             const std::vector<std::string>& units) {
  StrictObject o(j, path);
  SweepGrid g;
  const auto start = o.quantity("start", units);
  const auto stop = o.quantity("stop", units);
  const auto points = o.number("points");
  o.finish();
  if (!start || !stop || !points)
    throw config_error("config key '" + path + "' needs start, stop, and points");
  if (*points < 2.0 || *points != std::floor(*points))
    throw config_error("config key '" + path + ".points' must be an integer ≥ 2");
  g.start = *start;
  g.stop = *stop;
  g.points = static_cast<std::size_t>(*points);
  if (!(g.stop > g.start))
    throw config_error("config key '" + path + "' must increase: stop > start");
  return g;
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  detail::StrictObject top(root, "config");
  static const std::vector<std::string> kLength{"m", "mm", "um", "nm"};
  static const std::vector<std::string> kTilt{"rad", "mrad"};
  static const std::vector<std::string> kFreq{"Hz", "kHz", "MHz", "GHz"};

  if (const auto* g = top.child("geometry")) {
    detail::StrictObject o(*g, "geometry");
    cfg.length = o.quantity("length", kLength).value_or(cfg.length);
    cfg.mirror_roc = o.quantity("mirror_roc", kLength).value_or(cfg.mirror_roc);
    cfg.wavelength = o.quantity("wavelength", kLength).value_or(cfg.wavelength);
    cfg.declared_waist = o.quantity("waist", kLength);
    o.finish();
  }
  if (const auto* m = top.child("membrane")) {
    detail::StrictObject o(*m, "membrane");
    cfg.membrane.position = o.quantity("position", kLength).value_or(0.0);
    cfg.membrane.thickness = o.quantity("thickness", kLength).value_or(50e-9);
    cfg.membrane.refractive_index = o.number("refractive_index").value_or(2.0);
    cfg.membrane.tilt_y = o.quantity("tilt_y", kTilt).value_or(0.0);
    cfg.membrane.tilt_z = o.quantity("tilt_z", kTilt).value_or(0.0);
    cfg.membrane.thin_limit = o.boolean("thin_limit").value_or(false);
    o.finish();
    cfg.membrane.validate();
  }
  if (const auto* s = top.child("sweep")) {
    detail::StrictObject o(*s, "sweep");
    if (const auto* p = o.child("position"))
      cfg.position_sweep = detail::parse_sweep(*p, "sweep.position", kLength);
    if (const auto* p = o.child("lens"))
      cfg.lens_sweep = detail::parse_sweep(*p, "sweep.lens", kLength);
    if (const auto* p = o.child("tilt"))
      cfg.tilt_sweep = detail::parse_sweep(*p, "sweep.tilt", kTilt);
    if (const auto* p = o.child("detuning"))
      cfg.detuning_sweep = detail::parse_sweep(*p, "sweep.detuning", kFreq);
    o.finish();
  }
  if (const auto* ms = top.child("mode_set")) {
    detail::StrictObject o(*ms, "mode_set");
    if (const auto* man = o.child("manifolds")) {
      if (!man->is_array())
        throw config_error("config key 'mode_set.manifolds' must be an array");
      cfg.manifolds.clear();
      for (const auto& v : *man) {
        if (!v.is_number_integer() || v.get<int>() < 0)
          throw config_error("config key 'mode_set.manifolds' needs nonnegative integers");
        cfg.manifolds.push_back(v.get<int>());
      }
    }
    if (const auto* modes = o.child("modes")) {
      if (!modes->is_array())
        throw config_error("config key 'mode_set.modes' must be an array");
      for (const auto& v : *modes) {
        if (!v.is_array() || v.size() != 3)
          throw config_error("config key 'mode_set.modes' needs [l, m, n] triples");
        cfg.explicit_modes.push_back(
            ModeIndex{v[0].get<int>(), v[1].get<int>(), v[2].get<int>()});
      }
      if (!cfg.manifolds.empty() && cfg.manifolds != std::vector<int>{0, 2})
        throw config_error("mode_set: give either manifolds or modes, not both");
      cfg.manifolds.clear();
    }
    o.finish();
  }
  cfg.method = top.text("method").value_or(cfg.method);
  if (const auto* f = top.child("fit")) {
    detail::StrictObject o(*f, "fit");
    cfg.fit_kind = o.text("kind").value_or("");
    cfg.data_path = o.text("data").value_or("");
    o.finish();
  }
  top.finish();
  cfg.methods();  // validates the method string
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// canonical serialization: µm / nm / mrad / MHz, keys in fixed order
inline std::string serialize_config(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["geometry"]["length_um"] = cfg.length * 1e6;
  j["geometry"]["mirror_roc_um"] = cfg.mirror_roc * 1e6;
  j["geometry"]["wavelength_um"] = cfg.wavelength * 1e6;
  if (cfg.declared_waist) j["geometry"]["waist_um"] = *cfg.declared_waist * 1e6;
  j["membrane"]["position_um"] = cfg.membrane.position * 1e6;
  j["membrane"]["thickness_nm"] = cfg.membrane.thickness * 1e9;
  j["membrane"]["refractive_index"] = cfg.membrane.refractive_index;
  j["membrane"]["tilt_y_mrad"] = cfg.membrane.tilt_y * 1e3;
  j["membrane"]["tilt_z_mrad"] = cfg.membrane.tilt_z * 1e3;
  j["membrane"]["thin_limit"] = cfg.membrane.thin_limit;
  auto sweep = [](const SweepGrid& g, double f, const char* unit) {
    nlohmann::ordered_json s;
    s[std::string("start_") + unit] = g.start * f;
    s[std::string("stop_") + unit] = g.stop * f;
    s["points"] = g.points;
    return s;
  };
  j["sweep"]["position"] = sweep(cfg.position_sweep, 1e6, "um");
  j["sweep"]["lens"] = sweep(cfg.lens_sweep, 1e6, "um");
  if (cfg.tilt_sweep) j["sweep"]["tilt"] = sweep(*cfg.tilt_sweep, 1e3, "mrad");
  if (cfg.detuning_sweep)
    j["sweep"]["detuning"] = sweep(*cfg.detuning_sweep, 1e-6, "MHz");
  if (!cfg.explicit_modes.empty()) {
    auto& arr = j["mode_set"]["modes"];
    arr = nlohmann::ordered_json::array();
    for (const auto& m : cfg.explicit_modes) arr.push_back({m.l, m.m, m.n});
  } else {
    j["mode_set"]["manifolds"] = cfg.manifolds;
  }
  j["method"] = cfg.method;
  if (!cfg.fit_kind.empty() || !cfg.data_path.empty()) {
    j["fit"]["kind"] = cfg.fit_kind;
    j["fit"]["data"] = cfg.data_path;
  }
  return j.dump(2) + "\n";
}

// FNV-1a, enough to tie an output file to the exact configuration
inline std::string config_hash(const RunConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// provenance lines for CSV artifacts (JSON artifacts embed the same fields)
inline std::string provenance_header(const RunConfig& cfg) {
  std::string out;
  out += std::string("# mim ") + kVersion + "\n";
  out += "# config " + config_hash(cfg) + "\n";
  out += "# units position=um gap=Hz detuning=frac tilt=mrad\n";
  return out;
}

inline nlohmann::ordered_json provenance_json(const RunConfig& cfg) {
  nlohmann::ordered_json p;
  p["tool"] = "mim";
  p["version"] = kVersion;
  p["config"] = config_hash(cfg);
  p["units"] = {{"position", "um"}, {"gap", "Hz"}, {"detuning", "frac"}, {"tilt", "mrad"}};
  return p;
}

// ---------------------------------------------------------------------------
// raster data (measured or tool-generated series / grids)

struct RasterData {
  bool grid = false;
  std::vector<std::string> column_names;   // series: one per column
  std::vector<std::string> column_units;   // as declared, before conversion
  std::vector<double> positions;           // SI where the unit allows
  std::vector<double> detunings;           // grid column axis, SI
  // series: values[c][r] = column c+1; grid: values[r][c] over the axes
  std::vector<std::vector<double>> values;
  std::vector<std::string> notes;          // leading '#' lines
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

// "name [unit]" → (name, unit); the declaration is mandatory
inline std::pair<std::string, std::string> parse_column(const std::string& field) {
  const auto lb = field.find('[');
  const auto rb = field.find(']');
  if (lb == std::string::npos || rb == std::string::npos || rb < lb)
    throw ingest_error("column '" + field + "' is missing its unit declaration");
  std::string name = field.substr(0, lb);
  const auto e = name.find_last_not_of(" \t");
  name = e == std::string::npos ? std::string() : name.substr(0, e + 1);
  const std::string unit = field.substr(lb + 1, rb - lb - 1);
  if (name.empty()) throw ingest_error("column '" + field + "' has no name");
  if (!unit_factors().count(unit))
    throw ingest_error("column '" + name + "' declares unknown unit '" + unit + "'");
  return {name, unit};
}

inline double parse_cell(const std::string& field, std::size_t row, std::size_t col) {
  if (field.empty())
    throw ingest_error("empty cell at row " + std::to_string(row) + ", column " +
                       std::to_string(col));
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size())
    throw ingest_error("cannot parse '" + field + "' at row " + std::to_string(row) +
                       ", column " + std::to_string(col));
  if (!std::isfinite(v))
    throw ingest_error("non-finite value in a declared-valid cell at row " +
                       std::to_string(row) + ", column " + std::to_string(col));
  return v;
}

}  // namespace detail

inline RasterData ingest_raster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ingest_error("cannot open raster file " + path);
  std::vector<std::string> lines;
  std::string line;
  RasterData rd;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() == '#') {
      if (lines.empty()) rd.notes.push_back(line);
      continue;
    }
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw ingest_error("raster file " + path + " has no header");

  const auto header = detail::split_csv(lines[0]);
  if (header.empty() || (header[0] != "series" && header[0] != "grid"))
    throw ingest_error("raster header must start with 'series' or 'grid'");
  rd.grid = header[0] == "grid";
  std::vector<double> factors;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto [name, unit] = detail::parse_column(header[c]);
    rd.column_names.push_back(name);
    rd.column_units.push_back(unit);
    factors.push_back(unit_factors().at(unit));
  }

  if (!rd.grid) {
    if (rd.column_names.size() < 2)
      throw ingest_error("series files need a position column and at least one value column");
    if (lines.size() < 2) throw ingest_error("series file has no data rows");
    rd.values.assign(rd.column_names.size() - 1, {});
    for (std::size_t r = 1; r < lines.size(); ++r) {
      const auto cells = detail::split_csv(lines[r]);
      if (cells.size() != rd.column_names.size())
        throw ingest_error("row " + std::to_string(r) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(rd.column_names.size()));
      rd.positions.push_back(detail::parse_cell(cells[0], r, 0) * factors[0]);
      for (std::size_t c = 1; c < cells.size(); ++c)
        rd.values[c - 1].push_back(detail::parse_cell(cells[c], r, c) * factors[c]);
    }
    return rd;
  }

  // grid layout: declarations for (row axis, column axis, cell value), then a
  // line carrying the column axis, then one line per row: position + cells
  if (rd.column_names.size() != 3)
    throw ingest_error("grid headers declare exactly three columns: row axis, "
                       "column axis, value");
  if (lines.size() < 3) throw ingest_error("grid file is missing its axes");
  const auto axis = detail::split_csv(lines[1]);
  if (axis.size() < 2 || axis[0] != rd.column_names[1])
    throw ingest_error("grid column-axis row must start with '" + rd.column_names[1] +
                       "'");
  for (std::size_t c = 1; c < axis.size(); ++c)
    rd.detunings.push_back(detail::parse_cell(axis[c], 1, c) * factors[1]);
  const std::size_t nc = rd.detunings.size();
  for (std::size_t r = 2; r < lines.size(); ++r) {
    const auto cells = detail::split_csv(lines[r]);
    if (cells.size() != nc + 1)
      throw ingest_error("row " + std::to_string(r) + " has " +
                         std::to_string(cells.size()) + " cells, expected " +
                         std::to_string(nc + 1));
    rd.positions.push_back(detail::parse_cell(cells[0], r, 0) * factors[0]);
    std::vector<double> rowvals(nc);
    for (std::size_t c = 0; c < nc; ++c)
      rowvals[c] = detail::parse_cell(cells[c + 1], r, c + 1) * factors[2];
    rd.values.push_back(std::move(rowvals));
  }
  if (rd.values.empty()) throw ingest_error("grid file has no data rows");
  return rd;
}

// Writer for the same two layouts. Buffers hold SI values (as ingest_raster
// leaves them); they are converted back to the declared column units here, so
// write → ingest is the identity.
inline void write_raster(const std::string& path, const RasterData& rd,
                         const std::string& provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ingest_error("cannot write raster file " + path);
  std::vector<double> factors;
  for (std::size_t c = 0; c < rd.column_units.size(); ++c) {
    const auto it = unit_factors().find(rd.column_units[c]);
    if (it == unit_factors().end())
      throw ingest_error("column '" + rd.column_names[c] + "' declares unknown unit '" +
                         rd.column_units[c] + "'");
    factors.push_back(it->second);
  }
  out << provenance;
  if (!rd.grid) {
    out << "series";
    for (std::size_t c = 0; c < rd.column_names.size(); ++c)
      out << ", " << rd.column_names[c] << " [" << rd.column_units[c] << "]";
    out << "\n";
    for (std::size_t r = 0; r < rd.positions.size(); ++r) {
      out << format_double(rd.positions[r] / factors[0]);
      for (std::size_t c = 0; c < rd.values.size(); ++c)
        out << ", " << format_double(rd.values[c][r] / factors[c + 1]);
      out << "\n";
    }
    return;
  }
  out << "grid";
  for (std::size_t c = 0; c < rd.column_names.size(); ++c)
    out << ", " << rd.column_names[c] << " [" << rd.column_units[c] << "]";
  out << "\n" << rd.column_names[1];
  for (double d : rd.detunings) out << ", " << format_double(d / factors[1]);
  out << "\n";
  for (std::size_t r = 0; r < rd.positions.size(); ++r) {
    out << format_double(rd.positions[r] / factors[0]);
    for (double v : rd.values[r]) out << ", " << format_double(v / factors[2]);
    out << "\n";
  }
}

}  // namespace mim
