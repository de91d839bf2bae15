#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "lipdse/dse.hpp"
#include "lipdse/gen_model.hpp"
#include "lipdse/lipschitz.hpp"
#include "lipdse/observer.hpp"

namespace lipdse::io {

using nlohmann::json;

/// Schema or file-level problem in user-supplied input; the message carries
/// the file path and the offending field.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

GeneratorParams params_from_json(const json& j, const std::string& origin);
json params_to_json(const GeneratorParams& p);
GeneratorParams load_params(const std::filesystem::path& path);

BoundsBox bounds_from_json(const json& j, const std::string& origin);
json bounds_to_json(const BoundsBox& b);
BoundsBox load_bounds(const std::filesystem::path& path);

Vec4 vec4_from_json(const json& j, const std::string& origin, const std::string& field);
json vec_to_json(const Eigen::VectorXd& v);

json estimate_to_json(const LipschitzEstimate& e);
json constants_to_json(const DerivedConstants& c);

/// {"L": [[l11, l12], ... 4 rows]}
json gain_to_json(const ObserverGain& g);
ObserverGain gain_from_json(const json& j, const std::string& origin);
ObserverGain load_gain(const std::filesystem::path& path);

/// P and Y row-major.
json certificate_to_json(const FeasibilityCertificate& c);

json metrics_to_json(const ErrorMetrics& m);

/// Shortest round-trip decimal form; locale independent.
std::string format_double(double v);

/// `t,x1,x2,x3,x4,xh1,xh2,xh3,xh4,y1,y2,yh1,yh2,err`
std::string trace_to_csv(const SimTrace& tr);

/// Two-column (t, value) series per state for plant, observer and the error
/// norm, keyed by file name.
std::map<std::string, std::string> plot_series(const SimTrace& tr);

/// Stable JSON text (sorted keys, 2-space indent, trailing newline).
std::string dump(const json& j);

}  // namespace lipdse::io
