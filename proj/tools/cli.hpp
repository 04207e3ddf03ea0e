#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fgn/data.hpp"
#include "fgn/model.hpp"
#include "fgn/training.hpp"

namespace fgn::cli {

/// Process exit codes; each failure class has its own code.
enum ExitCode : int {
    kOk = 0,
    kIoError = 1,
    kUsageError = 2,
    kConfigError = 3,
    kDataError = 4,
    kDivergence = 5,
    kCheckpointError = 6,
};

/// Experiment configuration file (JSON). Unknown keys are an error at every level.
struct RunConfigFile {
    /// Recording CSV; no default, may come from --data instead.
    std::optional<std::filesystem::path> data_path;
    std::filesystem::path out_dir = "fgn_out";
    /// Threads for restarts and ablation cells.
    std::size_t workers = 1;
    ModelConfig model = ModelConfig::toy();
    TrainRunConfig train;
    DataConfig data;
    std::vector<std::size_t> ablation_horizons = {1, 20, 40, 60, 80, 100};

    static RunConfigFile from_json(const nlohmann::json& j);
    static RunConfigFile load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

/// Runs one command line (args exclude the program name). Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fgn::cli
