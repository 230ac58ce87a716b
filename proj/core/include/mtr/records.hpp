#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtr/eval.hpp"
#include "mtr/network.hpp"

namespace mtr {

enum class EvalTask { Apk, ActionCls, Det, ActionDet };

std::string_view task_name(EvalTask task);
std::optional<EvalTask> parse_task(std::string_view name);
/// Column names of a task's table: 13 keypoints, 10 actions, or "person".
std::vector<std::string> task_class_names(EvalTask task);

// Prediction interchange, one JSON object per line:
//   {"image_id": 3, "score": 0.91, "class": "running", "box": [x0, y0, x1, y1]}
//   {"image_id": 3, "score": 0.40, "class": "L_Wrist", "keypoint": [x, y]}
// `class` is a column name of the task. For action-cls, a box record scores
// the ground-truth person it overlaps most (IoU > 0.5) for that action.
inline constexpr int kRecordVersion = 1;
std::string encode_prediction(const ScoredPrediction& pred, EvalTask task);
ScoredPrediction decode_prediction(std::string_view line, EvalTask task);
std::vector<ScoredPrediction> read_predictions(const std::filesystem::path& path, EvalTask task);
void write_predictions(const std::filesystem::path& path, const std::vector<ScoredPrediction>& preds, EvalTask task);

struct Report {
    std::string task;
    std::string label;  // variant name shown in comparison tables
    std::string mode;   // raw, svm, context, product, action-only, oracle
    std::string split;  // which scenes were scored
    std::string dataset_hash;
    std::string config_hash;  // hash of the checkpoint + evaluation settings
    std::uint64_t seed = 0;
    std::string config_json;  // echo of the evaluation settings
    std::optional<LossTracePoint> final_loss;
    APResult result;
};

/// Human-readable table: one column per class plus mAP, values in percent.
std::string format_report_table(const Report& report);
/// Machine-readable records: a header line, one line per class (with its PR
/// curve) and a summary line.
std::string encode_report(const Report& report);
Report decode_report(std::string_view text);

struct Comparison {
    std::string table;                // merged table, one row per report
    std::string records;              // merged machine-readable rows
    std::vector<std::pair<std::string, std::string>> curve_files;  // file name, CSV contents
};

/// Merges reports that share a dataset hash; throws std::invalid_argument
/// naming both hashes otherwise.
Comparison compare_reports(const std::vector<Report>& reports);

}  // namespace mtr
