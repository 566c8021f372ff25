#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "nlsa/model.hpp"
#include "run_config.hpp"

namespace nlsa::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

/// Where a command writes and what it stamps on every JSON file.
struct Output {
    std::filesystem::path dir;
    std::string command;
    std::string config_text;  ///< verbatim config echo
    Json meta;  ///< program, command, model, integrator, config
};

/// Thrown for semantic config problems found after parsing; mapped to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model from the [model] options: the linear matrix model when a matrix file
/// is given, the two-level model otherwise.
std::unique_ptr<Model> build_model(const RunConfig& cfg);

/// Checks cross-field constraints of the selected command; throws ConfigError naming the field.
void validate(const RunConfig& cfg, const std::string& command);

Output prepare_output(const RunConfig& cfg, const std::string& command, const std::string& config_text,
                      const Model& model);

void cmd_levels(const RunConfig& cfg, const Model& model, const Output& out);
void cmd_portrait(const RunConfig& cfg, const Model& model, const Output& out);
void cmd_fixed_points(const RunConfig& cfg, const Model& model, const Output& out);
void cmd_orbit(const RunConfig& cfg, const Model& model, const Output& out);
void cmd_sweep(const RunConfig& cfg, const Model& model, const Output& out);
void cmd_ladder(const RunConfig& cfg, const Model& model, const Output& out);

}  // namespace nlsa::cli
