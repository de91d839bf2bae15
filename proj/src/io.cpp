#include "lipdse/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lipdse::io {

namespace {

double number_field(const json& j, const std::string& origin, const std::string& field) {
  if (!j.is_object()) throw ValidationError(origin + ": expected a JSON object");
  const auto it = j.find(field);
  if (it == j.end()) throw ValidationError(origin + ": missing field '" + field + "'");
  if (!it->is_number()) throw ValidationError(origin + ": field '" + field + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ValidationError(origin + ": field '" + field + "' is not finite");
  return v;
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GeneratorParams params_from_json(const json& j, const std::string& origin) {
  GeneratorParams p;
  p.omega0 = number_field(j, origin, "omega0");
  p.H = number_field(j, origin, "H");
  p.K_D = number_field(j, origin, "K_D");
  p.Tq0p = number_field(j, origin, "Tq0p");
  p.Td0p = number_field(j, origin, "Td0p");
  p.xd = number_field(j, origin, "xd");
  p.xq = number_field(j, origin, "xq");
  p.xdp = number_field(j, origin, "xdp");
  p.xqp = number_field(j, origin, "xqp");
  p.S_B = number_field(j, origin, "S_B");
  p.S_N = number_field(j, origin, "S_N");
  try {
    p.validate();
  } catch (const std::domain_error& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return p;
}

json params_to_json(const GeneratorParams& p) {
  return json{{"omega0", p.omega0}, {"H", p.H},     {"K_D", p.K_D}, {"Tq0p", p.Tq0p},
              {"Td0p", p.Td0p},     {"xd", p.xd},   {"xq", p.xq},   {"xdp", p.xdp},
              {"xqp", p.xqp},       {"S_B", p.S_B}, {"S_N", p.S_N}};
}

GeneratorParams load_params(const std::filesystem::path& path) {
  return params_from_json(read_json_file(path), path.string());
}

Vec4 vec4_from_json(const json& j, const std::string& origin, const std::string& field) {
  if (!j.is_object()) throw ValidationError(origin + ": expected a JSON object");
  const auto it = j.find(field);
  if (it == j.end()) throw ValidationError(origin + ": missing field '" + field + "'");
  if (!it->is_array() || it->size() != 4)
    throw ValidationError(origin + ": field '" + field + "' must be an array of 4 numbers");
  Vec4 v;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& e = (*it)[i];
    if (!e.is_number() || !std::isfinite(e.get<double>()))
      throw ValidationError(origin + ": field '" + field + "' entry " + std::to_string(i) +
                            " is not a finite number");
    v(static_cast<Eigen::Index>(i)) = e.get<double>();
  }
  return v;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

BoundsBox bounds_from_json(const json& j, const std::string& origin) {
  BoundsBox b;
  b.x_lo = vec4_from_json(j, origin, "x_lo");
  b.x_hi = vec4_from_json(j, origin, "x_hi");
  b.u_lo = vec4_from_json(j, origin, "u_lo");
  b.u_hi = vec4_from_json(j, origin, "u_hi");
  try {
    b.validate();
  } catch (const std::domain_error& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return b;
}

json bounds_to_json(const BoundsBox& b) {
  return json{{"x_lo", vec_to_json(b.x_lo)},
              {"x_hi", vec_to_json(b.x_hi)},
              {"u_lo", vec_to_json(b.u_lo)},
              {"u_hi", vec_to_json(b.u_hi)}};
}

BoundsBox load_bounds(const std::filesystem::path& path) {
  return bounds_from_json(read_json_file(path), path.string());
}

json estimate_to_json(const LipschitzEstimate& e) {
  return json{{"target", std::string(to_string(e.target))},
              {"method", std::string(to_string(e.method))},
              {"sampler", e.sampler ? std::string(qmc::to_string(*e.sampler)) : "none"},
              {"samples", e.samples},
              {"seed", e.seed},
              {"value", e.value}};
}

json constants_to_json(const DerivedConstants& c) {
  json alpha = json::array();
  for (double a : c.alpha) alpha.push_back(a);
  return json{{"alpha", alpha}, {"beta1", c.beta1}, {"beta2", c.beta2}};
}

json gain_to_json(const ObserverGain& g) {
  json rows = json::array();
  for (int i = 0; i < 4; ++i) rows.push_back(json::array({g.L(i, 0), g.L(i, 1)}));
  return json{{"L", rows}};
}

ObserverGain gain_from_json(const json& j, const std::string& origin) {
  if (!j.is_object() || !j.contains("L"))
    throw ValidationError(origin + ": missing field 'L'");
  const auto& rows = j.at("L");
  if (!rows.is_array() || rows.size() != 4)
    throw ValidationError(origin + ": field 'L' must be a 4x2 array");
  ObserverGain g;
  for (std::size_t i = 0; i < 4; ++i) {
    if (!rows[i].is_array() || rows[i].size() != 2)
      throw ValidationError(origin + ": field 'L' row " + std::to_string(i) +
                            " must have 2 entries");
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& e = rows[i][k];
      if (!e.is_number() || !std::isfinite(e.get<double>()))
        throw ValidationError(origin + ": field 'L' entry (" + std::to_string(i) + "," +
                              std::to_string(k) + ") is not a finite number");
      g.L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = e.get<double>();
    }
  }
  return g;
}

ObserverGain load_gain(const std::filesystem::path& path) {
  return gain_from_json(read_json_file(path), path.string());
}

json certificate_to_json(const FeasibilityCertificate& c) {
  json P = json::array();
  json Y = json::array();
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) P.push_back(c.P(i, k));
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 2; ++k) Y.push_back(c.Y(i, k));
  return json{{"P", P},
              {"Y", Y},
              {"eta", c.eta},
              {"max_eig", c.max_eig},
              {"margin", c.margin},
              {"iterations", c.iterations}};
}

json metrics_to_json(const ErrorMetrics& m) {
  json out{{"rmse", vec_to_json(m.rmse)}, {"final_err", m.final_err}};
  if (m.convergence_time)
    out["convergence_time"] = *m.convergence_time;
  else
    out["convergence_time"] = "none";
  return out;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), ptr);
}

std::string trace_to_csv(const SimTrace& tr) {
  std::string out = "t,x1,x2,x3,x4,xh1,xh2,xh3,xh4,y1,y2,yh1,yh2,err\n";
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    out += format_double(tr.times[k]);
    for (int i = 0; i < 4; ++i) out += "," + format_double(tr.plant[k](i));
    for (int i = 0; i < 4; ++i) out += "," + format_double(tr.observer[k](i));
    for (int i = 0; i < 2; ++i) out += "," + format_double(tr.plant_out[k](i));
    for (int i = 0; i < 2; ++i) out += "," + format_double(tr.observer_out[k](i));
    out += "," + format_double(tr.error_norm[k]) + "\n";
  }
  return out;
}

std::map<std::string, std::string> plot_series(const SimTrace& tr) {
  static constexpr std::array<const char*, 4> kNames{"delta", "omega", "eqp", "edp"};
  std::map<std::string, std::string> files;
  for (int i = 0; i < 4; ++i) {
    std::string plant = "t,plant\n";
    std::string obs = "t,observer\n";
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      const std::string t = format_double(tr.times[k]);
      plant += t + "," + format_double(tr.plant[k](i)) + "\n";
      obs += t + "," + format_double(tr.observer[k](i)) + "\n";
    }
    files[std::string("plot_") + kNames[static_cast<std::size_t>(i)] + "_plant.csv"] = plant;
    files[std::string("plot_") + kNames[static_cast<std::size_t>(i)] + "_observer.csv"] = obs;
  }
  std::string err = "t,err\n";
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    err += format_double(tr.times[k]) + "," + format_double(tr.error_norm[k]) + "\n";
  files["plot_error_norm.csv"] = err;
  return files;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace lipdse::io
