#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtr/losses.hpp"
#include "mtr/network.hpp"
#include "mtr/records.hpp"

namespace mtr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Inputs that exist but cannot be used together (exit code 2).
class IncompatibleInputs : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GenerateArgs {
    std::optional<std::filesystem::path> config;  // defaults when absent
    std::filesystem::path out;
    std::size_t preview = 0;  // PPM previews of the first N training scenes
    std::size_t threads = 1;
};

struct TrainArgs {
    std::filesystem::path dataset;
    std::optional<std::string> preset;
    std::optional<TaskWeights> weights;  // explicit lambda_D, lambda_P, lambda_A
    std::string targets = "persons";     // or "objects"
    std::filesystem::path out;
    std::optional<std::filesystem::path> resume;
    std::optional<std::size_t> iterations;
    std::optional<double> learning_rate;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> jitter;
    bool jitter_detection = true;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct EvaluateArgs {
    std::optional<std::filesystem::path> checkpoint;
    std::filesystem::path dataset;
    EvalTask task = EvalTask::Det;
    bool rescore = false;
    bool context = false;
    std::optional<std::filesystem::path> object_checkpoint;
    double nms_threshold = 0.3;
    std::optional<std::filesystem::path> predictions_file;
    std::optional<std::filesystem::path> save_predictions;
    std::string score_mode = "product";  // or "action-only"
    std::string svm_feature = "fc6";     // fc6, fc7, softmax (action SVMs)
    std::string interpolation = "all-points";
    std::optional<std::string> label;
    std::filesystem::path out;  // writes <out>.txt and <out>.jsonl
    std::size_t threads = 1;
};

struct ReportArgs {
    std::vector<std::filesystem::path> reports;
    std::filesystem::path out;  // directory
};

void cmd_generate(const GenerateArgs& args);
TrainResult cmd_train(const TrainArgs& args);
Report cmd_evaluate(const EvaluateArgs& args);
Comparison cmd_report(const ReportArgs& args);

/// Parses argv, runs the command and maps failures to exit codes:
/// 0 success, 1 usage or configuration error, 2 runtime failure.
int run(int argc, char** argv);

}  // namespace mtr::cli
