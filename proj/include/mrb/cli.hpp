#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrb/model.hpp"
#include "mrb/training.hpp"

namespace mrb {

struct CliPaths {
  std::string bart_embeddings;
  std::string roberta_embeddings;
  std::string labels;
  std::string out;
};

/// {"model": {...}, "training": {...}, "paths": {...}}; every section is optional.
struct CliConfig {
  ModelConfig model;
  TrainConfig training;
  CliPaths paths;
};

/// Collects every problem (including the model and training invariants)
/// into errors when given; otherwise throws one ConfigError listing them all.
CliConfig cli_config_from_json(const nlohmann::json& j, std::vector<std::string>* errors = nullptr);

/// Throws DataError when the file cannot be read, ConfigError on a JSON parse
/// error (with byte position) or any violated invariant.
CliConfig load_cli_config(const std::string& path);

nlohmann::json to_json(const CliConfig& cfg);

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int data = 2;
inline constexpr int numeric = 3;
}  // namespace exit_code

/// Runs one subcommand. args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mrb
